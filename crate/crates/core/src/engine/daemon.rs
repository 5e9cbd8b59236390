use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::NodeId;

/// Scheduler flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaemonKind {
    /// Every privileged node moves at every step.
    Synchronous,
    /// One node per step, round-robin over node handles.
    Central,
    /// Seeded random nonempty subsets, with every node that has been
    /// privileged but skipped `fairness_bound` times in a row forced in.
    Adversarial { seed: u64, fairness_bound: u32 },
}

impl std::fmt::Display for DaemonKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DaemonKind::Synchronous => f.write_str("synchronous"),
            DaemonKind::Central => f.write_str("central"),
            DaemonKind::Adversarial { seed, fairness_bound } => {
                write!(f, "adversarial {seed} {fairness_bound}")
            }
        }
    }
}

/// The adversary choosing who moves.
#[derive(Debug, Clone)]
pub struct Daemon {
    kind: DaemonKind,
    rng: ChaCha8Rng,
    cursor: u32,
    ages: Vec<u32>,
}

impl Daemon {
    pub fn new(kind: DaemonKind) -> Self {
        let seed = match kind {
            DaemonKind::Adversarial { seed, .. } => seed,
            _ => 0,
        };
        Daemon {
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
            ages: Vec::new(),
        }
    }

    pub fn synchronous() -> Self {
        Daemon::new(DaemonKind::Synchronous)
    }

    pub fn central() -> Self {
        Daemon::new(DaemonKind::Central)
    }

    pub fn adversarial(seed: u64, fairness_bound: u32) -> Self {
        assert!(fairness_bound > 0, "fairness bound must be positive");
        Daemon::new(DaemonKind::Adversarial {
            seed,
            fairness_bound,
        })
    }

    pub fn kind(&self) -> DaemonKind {
        self.kind
    }

    /// Picks a nonempty subset of `privileged` (sorted, nonempty) to move.
    pub fn select(&mut self, privileged: &[NodeId]) -> Vec<NodeId> {
        debug_assert!(!privileged.is_empty());
        let chosen = match self.kind {
            DaemonKind::Synchronous => privileged.to_vec(),
            DaemonKind::Central => {
                let pick = privileged
                    .iter()
                    .find(|v| v.0 >= self.cursor)
                    .unwrap_or(&privileged[0]);
                self.cursor = pick.0 + 1;
                vec![*pick]
            }
            DaemonKind::Adversarial { fairness_bound, .. } => {
                let mut out: Vec<NodeId> = privileged
                    .iter()
                    .copied()
                    .filter(|v| self.age(*v) >= fairness_bound)
                    .collect();
                if self.rng.gen_bool(0.5) {
                    out.push(*privileged.choose(&mut self.rng).expect("nonempty"));
                } else {
                    out.extend(privileged.iter().filter(|_| self.rng.gen_bool(0.5)));
                    if out.is_empty() {
                        out.push(*privileged.choose(&mut self.rng).expect("nonempty"));
                    }
                }
                out.sort();
                out.dedup();
                out
            }
        };
        self.update_ages(privileged, &chosen);
        chosen
    }

    /// Consecutive steps `v` has been privileged without being selected.
    pub fn age(&self, v: NodeId) -> u32 {
        self.ages.get(v.index()).copied().unwrap_or(0)
    }

    fn update_ages(&mut self, privileged: &[NodeId], chosen: &[NodeId]) {
        let top = privileged.last().map_or(0, |v| v.index() + 1);
        if self.ages.len() < top {
            self.ages.resize(top, 0);
        }
        let mut next = vec![0; self.ages.len()];
        for v in privileged {
            if chosen.binary_search(v).is_err() {
                next[v.index()] = self.ages[v.index()] + 1;
            }
        }
        self.ages = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u32]) -> Vec<NodeId> {
        xs.iter().map(|x| NodeId(*x)).collect()
    }

    #[test]
    fn central_round_robin() {
        let mut d = Daemon::central();
        let p = ids(&[1, 3, 4]);
        assert_eq!(d.select(&p), ids(&[1]));
        assert_eq!(d.select(&p), ids(&[3]));
        assert_eq!(d.select(&p), ids(&[4]));
        assert_eq!(d.select(&p), ids(&[1]));
    }

    #[test]
    fn adversarial_respects_fairness_bound() {
        let mut d = Daemon::adversarial(7, 3);
        let p = ids(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let mut skipped = [0u32; 8];
        for _ in 0..500 {
            let chosen = d.select(&p);
            assert!(!chosen.is_empty());
            for v in &p {
                if chosen.contains(v) {
                    skipped[v.index()] = 0;
                } else {
                    skipped[v.index()] += 1;
                    assert!(skipped[v.index()] <= 3);
                }
            }
        }
    }

    #[test]
    fn adversarial_is_reproducible() {
        let p = ids(&[2, 5, 9]);
        let mut a = Daemon::adversarial(11, 4);
        let mut b = Daemon::adversarial(11, 4);
        for _ in 0..50 {
            assert_eq!(a.select(&p), b.select(&p));
        }
    }
}
