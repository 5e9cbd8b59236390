use std::sync::Arc;

use super::{bfs_oracle, Verdict};
use crate::engine::Configuration;
use crate::graph::{DynamicGraph, NodeId};
use crate::protocol::{NodeState, Status};

/// The parent graph `{(v, p_v) : v ≠ r, p_v ∈ N(v)}` has no directed cycle.
pub fn loop_free(c: &Configuration) -> Verdict {
    Verdict::from_witness("loop_free", find_cycle(c).map(|cycle| {
        let names: Vec<String> = cycle.iter().map(|v| v.to_string()).collect();
        format!("cycle {}", names.join("->"))
    }))
}

fn find_cycle(c: &Configuration) -> Option<Vec<NodeId>> {
    let root = c.graph().root();
    let next = |v: NodeId| if v == root { None } else { c.parent_of(v) };
    // 0 = unvisited, 1 = on the current walk, 2 = done
    let mut mark = vec![0u8; c.graph().capacity()];
    for start in c.nodes() {
        if mark[start.index()] != 0 {
            continue;
        }
        let mut walk = Vec::new();
        let mut v = Some(start);
        while let Some(x) = v {
            match mark[x.index()] {
                0 => {
                    mark[x.index()] = 1;
                    walk.push(x);
                    v = next(x);
                }
                1 => {
                    let from = walk.iter().position(|y| *y == x).expect("on walk");
                    let mut cycle = walk[from..].to_vec();
                    cycle.push(x);
                    return Some(cycle);
                }
                _ => break,
            }
        }
        for x in walk {
            mark[x.index()] = 2;
        }
    }
    None
}

/// Legitimacy: the root is `(⊥, N, 0, 0)`; every other node is neutral,
/// sits at its BFS distance, and its parent is a neighbour one level up.
pub fn legitimate(c: &Configuration) -> Verdict {
    let dist = dense_distances(c.graph());
    legitimate_with(c, &dist, false)
}

/// [`legitimate`] plus `NewLevel = level` at every node.
pub fn legitimate_strict(c: &Configuration) -> Verdict {
    let dist = dense_distances(c.graph());
    legitimate_with(c, &dist, true).renamed("legitimate_strict")
}

/// The terminal legitimate configuration in which each node's parent is
/// its smallest-port neighbour one hop closer to the root, with
/// `NewLevel = level` everywhere. Unreachable nodes get `(⊥, N, 0, 0)`.
pub fn canonical_legitimate(g: &DynamicGraph) -> Configuration {
    let dist = dense_distances(g);
    let root = g.root();
    Configuration::from_fn(g.clone(), |v| match dist[v.index()] {
        Some(d) if v != root => {
            let parent = g
                .ports(v)
                .find(|(_, u, _)| dist[u.index()].map(|du| du + 1) == Some(d))
                .map(|(p, _, _)| p);
            NodeState::new(parent, Status::N, d, d)
        }
        _ => NodeState::ROOT,
    })
}

fn dense_distances(g: &DynamicGraph) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.capacity()];
    for (v, d) in bfs_oracle(g) {
        dist[v.index()] = Some(d);
    }
    dist
}

fn legitimate_with(c: &Configuration, dist: &[Option<u32>], strict: bool) -> Verdict {
    let root = c.graph().root();
    for (v, s) in c.states() {
        let ok = if v == root {
            s == NodeState::ROOT
        } else {
            let parent_ok = c
                .parent_of(v)
                .is_some_and(|p| c.state(p).level.checked_add(1) == Some(s.level));
            s.status == Status::N
                && Some(s.level) == dist[v.index()]
                && parent_ok
                && (!strict || s.new_level == s.level)
        };
        if !ok {
            return Verdict::fail("legitimate", format!("{v} {s}"));
        }
    }
    Verdict::pass("legitimate")
}

/// Coherence of every non-orphan: `level_p + 1 ≤ level ∧ NewLevel ≥ level`,
/// and `level = 0 ∧ status = N` at the root.
pub fn coherent(c: &Configuration) -> Verdict {
    let root = c.graph().root();
    for (v, s) in c.states() {
        let ok = if v == root {
            s.level == 0 && s.status == Status::N
        } else {
            match c.parent_of(v) {
                None => true,
                Some(p) => c.state(p).level.saturating_add(1) <= s.level && s.new_level >= s.level,
            }
        };
        if !ok {
            return Verdict::fail("coherent", format!("{v} {s}"));
        }
    }
    Verdict::pass("coherent")
}

/// Every non-root node with a parent in its neighbourhood sits strictly
/// deeper than that parent. Implies [`loop_free`], and the protocol's moves
/// preserve it.
pub fn level_ordered(c: &Configuration) -> Verdict {
    let root = c.graph().root();
    for (v, s) in c.states() {
        if v == root {
            continue;
        }
        if let Some(p) = c.parent_of(v) {
            if c.state(p).level >= s.level {
                return Verdict::fail("level_ordered", format!("{v} {s} under {p}"));
            }
        }
    }
    Verdict::pass("level_ordered")
}

/// [`legitimate`] with the BFS oracle cached per graph snapshot.
#[derive(Debug, Default)]
pub struct LegitimacyCheck {
    graph: Option<Arc<DynamicGraph>>,
    dist: Vec<Option<u32>>,
}

impl LegitimacyCheck {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, c: &Configuration) -> Verdict {
        let current = c.graph_arc();
        if !self.graph.as_ref().is_some_and(|g| Arc::ptr_eq(g, current)) {
            self.dist = dense_distances(current);
            self.graph = Some(Arc::clone(current));
        }
        legitimate_with(c, &self.dist, false)
    }

    pub fn holds(&mut self, c: &Configuration) -> bool {
        self.check(c).holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::graph::Port;

    fn path3() -> Configuration {
        Configuration::from_fn(generate::path(3), |v| match v.0 {
            0 => NodeState::ROOT,
            1 => NodeState::new(Some(Port(1)), Status::N, 1, 1),
            _ => NodeState::new(Some(Port(1)), Status::N, 2, 2),
        })
    }

    #[test]
    fn path_tree_is_legitimate_and_loop_free() {
        let c = path3();
        assert!(legitimate(&c).holds);
        assert!(legitimate_strict(&c).holds);
        assert!(loop_free(&c).holds);
        assert!(coherent(&c).holds);
        assert!(level_ordered(&c).holds);
    }

    #[test]
    fn propagating_node_is_not_legitimate() {
        let c = path3().with_state(NodeId(2), NodeState::new(Some(Port(1)), Status::P, 2, 2));
        let v = legitimate(&c);
        assert!(!v.holds);
        assert!(v.witness.unwrap().starts_with("n2"));
    }

    #[test]
    fn two_cycle_is_reported() {
        // n1 -> n2 -> n1 on the path 0-1-2
        let c = path3().with_state(NodeId(1), NodeState::new(Some(Port(2)), Status::N, 1, 1));
        let v = loop_free(&c);
        assert!(!v.holds);
        assert_eq!(v.witness.as_deref(), Some("cycle n1->n2->n1"));
        assert_eq!(v.to_string(), "VERDICT loop_free false witness=cycle n1->n2->n1");
    }

    #[test]
    fn coherence_formula() {
        let c = path3().with_state(NodeId(2), NodeState::new(Some(Port(1)), Status::P, 1, 1));
        assert!(!coherent(&c).holds);
        let c = path3().with_state(NodeId(2), NodeState::new(Some(Port(1)), Status::P, 5, 5));
        assert!(coherent(&c).holds);
        let c = path3().with_state(NodeId(2), NodeState::new(Some(Port(1)), Status::N, 5, 4));
        assert!(!coherent(&c).holds);
        // orphans are exempt
        let c = path3().with_state(NodeId(2), NodeState::new(None, Status::N, 0, 0));
        assert!(coherent(&c).holds);
        let c = path3().with_state(NodeId(0), NodeState::new(None, Status::P, 0, 0));
        assert!(!coherent(&c).holds);
    }

    #[test]
    fn cached_check_tracks_graph_changes() {
        let mut check = LegitimacyCheck::new();
        let c = path3();
        assert!(check.holds(&c));
        let g = generate::complete(3);
        let other = Configuration::from_fn(g, |v| {
            if v.0 == 0 {
                NodeState::ROOT
            } else {
                NodeState::new(Some(Port(1)), Status::N, 1, 1)
            }
        });
        assert!(check.holds(&other));
        let bad = other.with_state(NodeId(2), NodeState::new(Some(Port(2)), Status::N, 2, 2));
        assert!(!check.holds(&bad));
    }
}
