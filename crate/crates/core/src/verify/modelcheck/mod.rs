//! Exhaustive small-scope checking of the protocol under a central daemon.
//!
//! Every configuration whose levels and `NewLevel`s are at most the cap is
//! an initial state. By default the cap also bounds the state space: a move
//! that would push a counter past it is dropped and reported as a
//! truncation. The extended variants follow such moves up to
//! `2^(bits(cap)+1) - 1` instead, at a much higher cost.
//!
//! Convergence is checked under weak fairness: no reachable illegitimate
//! deadlock, and no infinite illegitimate run in which every node is
//! infinitely often either disabled or moving.

mod explicit;
mod symbolic;

use std::fmt;

use thiserror::Error;

pub use explicit::{model_check_explicit, model_check_explicit_extended};

use super::{level_ordered, loop_free, Verdict};
use crate::engine::{fire_nodes, Configuration};
use crate::graph::DynamicGraph;
use crate::protocol::Guards;
use biodivine_lib_bdd::Bdd;
use symbolic::Encoding;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelCheckError {
    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),
    #[error("graph is not connected")]
    Disconnected,
}

/// Results of one exhaustive check.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckReport {
    pub graph: String,
    pub guards: Guards,
    pub nodes: usize,
    pub cap: u32,
    /// Largest counter value represented.
    pub max_level: u32,
    pub initial_states: u128,
    pub reachable_states: u128,
    /// Some reachable move needed a counter above `max_level`.
    pub truncated: bool,
    /// (a) every fair run reaches legitimacy.
    pub convergence: Verdict,
    /// (b) moves never create a parent cycle.
    pub loop_free_closure: Verdict,
    /// (b') moves from ordered configurations stay ordered.
    pub ordered_closure: Verdict,
    /// (c) legitimate configurations only move to legitimate ones.
    pub legitimacy_closure: Verdict,
}

impl ModelCheckReport {
    /// The three literal properties (a), (b) and (c).
    pub fn holds(&self) -> bool {
        self.convergence.holds && self.loop_free_closure.holds && self.legitimacy_closure.holds
    }

    pub fn verdicts(&self) -> [&Verdict; 4] {
        [
            &self.convergence,
            &self.loop_free_closure,
            &self.ordered_closure,
            &self.legitimacy_closure,
        ]
    }
}

impl fmt::Display for ModelCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "graph {} (n={}) guards={} cap={} max_level={} initial={} reachable={} truncated={}",
            self.graph,
            self.nodes,
            self.guards,
            self.cap,
            self.max_level,
            self.initial_states,
            self.reachable_states,
            self.truncated
        )?;
        for v in self.verdicts() {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub(crate) fn describe_graph(g: &DynamicGraph) -> String {
    let edges: Vec<String> = g.edges().map(|(u, v, _)| format!("{}-{}", u.0, v.0)).collect();
    format!("[{}]", edges.join(","))
}

pub(crate) fn describe(c: &Configuration) -> String {
    let parts: Vec<String> = c.states().map(|(v, s)| format!("{v}({s})")).collect();
    parts.join(";")
}

fn check_bounds(g: &DynamicGraph, cap: u32) -> Result<(), ModelCheckError> {
    let n = g.node_count();
    if n > 5 {
        return Err(ModelCheckError::StateSpaceTooLarge(format!("{n} nodes, at most 5")));
    }
    if cap as usize > 2 * n {
        return Err(ModelCheckError::StateSpaceTooLarge(format!(
            "cap {cap} above 2n = {}",
            2 * n
        )));
    }
    if !g.is_connected() {
        return Err(ModelCheckError::Disconnected);
    }
    Ok(())
}

/// Names the move out of `c` that breaks `prop`.
fn offending_move(c: &Configuration, prop: fn(&Configuration) -> Verdict) -> String {
    for v in c.privileged() {
        let (next, firings) = fire_nodes(c, &[v]);
        if let Some(f) = firings.first() {
            if !prop(&next).holds {
                return format!("{} then {v} fires {}", describe(c), f.rule);
            }
        }
    }
    describe(c)
}

/// Symbolic exhaustive check of `g` with counters capped at `cap` initially,
/// under the published guards.
pub fn model_check(g: &DynamicGraph, cap: u32) -> Result<ModelCheckReport, ModelCheckError> {
    model_check_with(g, cap, Guards::Literal)
}

pub fn model_check_with(g: &DynamicGraph, cap: u32, guards: Guards) -> Result<ModelCheckReport, ModelCheckError> {
    symbolic_check(g, cap, cap, guards)
}

/// Like [`model_check_with`], with counters allowed to grow past the cap up
/// to [`extended_limit`].
pub fn model_check_extended(g: &DynamicGraph, cap: u32, guards: Guards) -> Result<ModelCheckReport, ModelCheckError> {
    symbolic_check(g, cap, extended_limit(cap), guards)
}

/// `2^(bits(cap)+1) - 1`: one bit of headroom above the cap.
pub fn extended_limit(cap: u32) -> u32 {
    let bits = u32::BITS - cap.leading_zeros();
    (1u32 << (bits + 1)) - 1
}

fn symbolic_check(g: &DynamicGraph, cap: u32, limit: u32, guards: Guards) -> Result<ModelCheckReport, ModelCheckError> {
    check_bounds(g, cap)?;
    let enc = Encoding::new(g, limit, guards);
    let n = enc.node_count();

    let init = enc.initial(cap);
    // Moves never leave the domain, so with no headroom every state is initial.
    let reach = if limit == cap { init.clone() } else { forward(&enc, &init) };
    let legit = enc.legitimate();
    let illegit = reach.and_not(&legit);
    let truncated = !reach.and(&enc.overflow_any()).is_false();

    let closure = |name: &str, prop: &Bdd, concrete: fn(&Configuration) -> Verdict| {
        let bad = reach.and(prop).and(&enc.pre_any(&prop.not()));
        Verdict::from_witness(name, enc.sample(&bad).map(|c| offending_move(&c, concrete)))
    };
    let loop_free_closure = closure("loop_free_closure", &enc.loop_free(), loop_free);
    let ordered_closure = closure("ordered_closure", &enc.ordered(), level_ordered);
    let legitimacy_closure = closure("legitimacy_closure", &legit, super::legitimate);

    let deadlock = illegit.and(&enc.deadlock());
    let convergence = if let Some(c) = enc.sample(&deadlock) {
        Verdict::fail("convergence", format!("deadlock {}", describe(&c)))
    } else {
        let fair = fair_illegitimate(&enc, &illegit, n);
        Verdict::from_witness(
            "convergence",
            enc.sample(&fair).map(|c| format!("fair cycle through {}", describe(&c))),
        )
    };

    Ok(ModelCheckReport {
        graph: describe_graph(g),
        guards,
        nodes: n,
        cap,
        max_level: enc.limit(),
        initial_states: enc.count(&init),
        reachable_states: enc.count(&reach),
        truncated,
        convergence,
        loop_free_closure,
        ordered_closure,
        legitimacy_closure,
    })
}

/// Greatest set of illegitimate states with an infinite weakly fair run
/// that never becomes legitimate (Emerson-Lei).
fn fair_illegitimate(enc: &Encoding, illegit: &Bdd, n: usize) -> Bdd {
    // The root's guard reads only its own registers, so a fair run resets
    // it and it stays reset: every fair run has a fair suffix with a clean
    // root, and it suffices to look there.
    let settled = illegit.and_not(enc.enabled(enc.root()));
    let mut z = always(enc, &settled);
    loop {
        let before = z.clone();
        for v in 0..n {
            // v is served where it is disabled, or by one of its moves staying in z
            let served = z.and_not(enc.enabled(v)).or(&z.and(&enc.pre(v, &z)));
            let reach_served = backward(enc, &z, &served);
            z = z.and(&enc.pre_any(&reach_served));
            if z.is_false() {
                return z;
            }
        }
        if z == before {
            return z;
        }
    }
}

/// States reachable from `init`, by frontier.
fn forward(enc: &Encoding, init: &Bdd) -> Bdd {
    let mut reach = init.clone();
    let mut frontier = init.clone();
    while !frontier.is_false() {
        frontier = enc.post_any(&frontier).and_not(&reach);
        reach = reach.or(&frontier);
    }
    reach
}

/// `EG within`: states with an infinite run inside `within`.
fn always(enc: &Encoding, within: &Bdd) -> Bdd {
    let mut z = within.clone();
    loop {
        let next = z.and(&enc.pre_any(&z));
        if next == z {
            return z;
        }
        z = next;
    }
}

/// `E[within U target]`, by frontier.
fn backward(enc: &Encoding, within: &Bdd, target: &Bdd) -> Bdd {
    let mut acc = target.clone();
    let mut frontier = target.clone();
    while !frontier.is_false() {
        frontier = within.and(&enc.pre_any(&frontier)).and_not(&acc);
        acc = acc.or(&frontier);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn bounds_are_enforced() {
        assert!(matches!(
            model_check(&generate::path(6), 2),
            Err(ModelCheckError::StateSpaceTooLarge(_))
        ));
        assert!(matches!(
            model_check(&generate::path(2), 5),
            Err(ModelCheckError::StateSpaceTooLarge(_))
        ));
        let split = DynamicGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(model_check(&split, 2), Err(ModelCheckError::Disconnected));
    }

    #[test]
    fn single_edge() {
        let r = model_check(&generate::path(2), 4).unwrap();
        assert!(r.holds(), "{r}");
        assert!(r.ordered_closure.holds);
        assert_eq!(r.initial_states, (2 * 2 * 25) * (2 * 2 * 25));
        assert_eq!(r.reachable_states, r.initial_states);
        let x = model_check_extended(&generate::path(2), 4, Guards::Literal).unwrap();
        assert_eq!(x.max_level, 15);
        assert!(x.holds() && !x.truncated, "{x}");
        assert!(x.reachable_states > r.reachable_states);
    }

    #[test]
    fn headroom_is_one_bit() {
        assert_eq!(extended_limit(1), 3);
        assert_eq!(extended_limit(4), 15);
        assert_eq!(extended_limit(8), 31);
    }

    #[test]
    fn symbolic_matches_explicit() {
        for (g, cap) in [
            (generate::path(2), 4),
            (generate::path(3), 2),
            (generate::complete(3), 2),
        ] {
          for guards in Guards::ALL {
            let pairs = [
                (model_check_with(&g, cap, guards), model_check_explicit(&g, cap, guards)),
                (model_check_extended(&g, cap, guards), model_check_explicit_extended(&g, cap, guards)),
            ];
            for (s, e) in pairs {
                let (s, e) = (s.unwrap(), e.unwrap());
                assert_eq!(s.max_level, e.max_level, "{}", s.graph);
                assert_eq!(s.initial_states, e.initial_states, "{}", s.graph);
                assert_eq!(s.reachable_states, e.reachable_states, "{}", s.graph);
                assert_eq!(s.truncated, e.truncated, "{}", s.graph);
                for (a, b) in s.verdicts().iter().zip(e.verdicts()) {
                    assert_eq!(a.holds, b.holds, "{} {} max {}", s.graph, a.name, s.max_level);
                }
            }
          }
        }
    }
}
