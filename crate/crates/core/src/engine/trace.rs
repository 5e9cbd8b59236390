use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::Configuration;
use crate::graph::{NodeId, TopologyEvent};
use crate::protocol::{NodeState, Rule};

/// One node's move within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Firing {
    pub node: NodeId,
    pub rule: Rule,
    pub before: NodeState,
    pub after: NodeState,
}

/// One computation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: u64,
    /// Privileged nodes of the configuration the step starts from.
    pub privileged: Vec<NodeId>,
    pub firings: Vec<Firing>,
    /// Digest of the configuration the step produces.
    pub digest: u64,
}

/// Topology change applied just before step `before_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedEvent {
    pub before_step: u64,
    pub event: TopologyEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The stopping predicate held (with no events left to inject).
    Stopped,
    /// No node is privileged and no event is pending.
    Terminal,
    /// `max_steps` were taken without stopping.
    BudgetExceeded,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Stopped => "stopped",
            Outcome::Terminal => "terminal",
            Outcome::BudgetExceeded => "budget_exceeded",
        })
    }
}

/// Record of a run.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub initial: Configuration,
    pub steps: Vec<StepRecord>,
    pub events: Vec<AppliedEvent>,
    /// Step indices at which the engine closed a round.
    pub round_ends: Vec<u64>,
    /// Privileged nodes of the final configuration.
    pub final_privileged: Vec<NodeId>,
    pub final_config: Configuration,
    /// Configuration after each step, when requested.
    pub snapshots: Option<Vec<Configuration>>,
    pub outcome: Outcome,
}

impl ExecutionTrace {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Complete rounds (see [`rounds`]).
    pub fn rounds(&self) -> u64 {
        rounds(self)
    }

    /// Rounds needed to reach the final configuration, counting a trailing
    /// partial round as one.
    pub fn rounds_to_end(&self) -> u64 {
        let full = rounds(self);
        let last_closed = self.round_ends.last().copied();
        let trailing = match (self.steps.last(), last_closed) {
            (Some(last), Some(end)) => last.index > end,
            (Some(_), None) => true,
            (None, _) => false,
        };
        full + trailing as u64
    }

    /// Every firing of `node`, in order.
    pub fn firings_of(&self, node: NodeId) -> impl Iterator<Item = (&StepRecord, &Firing)> + '_ {
        self.steps.iter().flat_map(move |s| {
            s.firings
                .iter()
                .filter(move |f| f.node == node)
                .map(move |f| (s, f))
        })
    }

    /// Line-oriented text form. `full` appends each node's registers after
    /// every step when snapshots were kept.
    pub fn render(&self, name: &dyn Fn(NodeId) -> String, full: bool) -> String {
        let mut out = String::new();
        let mut events = self.events.iter().peekable();
        let mut round_ends = self.round_ends.iter().peekable();
        let mut round = 0;
        for (i, step) in self.steps.iter().enumerate() {
            let _ = write!(out, "step {}", step.index);
            while let Some(e) = events.next_if(|e| e.before_step <= step.index) {
                let _ = write!(out, " event {}", render_event(&e.event, name));
            }
            out.push_str(" fired");
            for f in &step.firings {
                let _ = write!(out, " {}:{}", name(f.node), f.rule);
            }
            out.push('\n');
            if full {
                if let Some(snap) = self.snapshots.as_ref().and_then(|s| s.get(i)) {
                    for (v, s) in snap.states() {
                        let _ = writeln!(out, "  {} {}", name(v), s);
                    }
                }
            }
            while let Some(end) = round_ends.next_if(|r| **r == step.index) {
                round += 1;
                let _ = writeln!(out, "round {round} ends at step {end}");
            }
        }
        for e in events {
            let _ = writeln!(
                out,
                "event {} before step {}",
                render_event(&e.event, name),
                e.before_step
            );
        }
        out
    }
}

fn render_event(e: &TopologyEvent, name: &dyn Fn(NodeId) -> String) -> String {
    use crate::graph::EventKind::*;
    match &e.kind {
        CrashEdge { u, v } => format!("crash_edge {} {}", name(*u), name(*v)),
        RecoverEdge { u, v, weight } => format!("recov_edge {} {} {}", name(*u), name(*v), weight),
        CrashNode { u } => format!("crash_node {}", name(*u)),
        RecoverNode { u, links } => {
            let mut s = format!("recov_node {}", name(*u));
            for (p, w) in links {
                let _ = write!(s, " {}:{}", name(*p), w);
            }
            s
        }
    }
}

/// Number of complete rounds in `trace`.
///
/// A round starts with the set of nodes privileged at its first step and
/// closes at the first step after which each of them has either fired or
/// stopped being privileged. Recomputed from the step records alone.
pub fn rounds(trace: &ExecutionTrace) -> u64 {
    let mut count = 0;
    let mut pending: BTreeSet<NodeId> = BTreeSet::new();
    for (i, step) in trace.steps.iter().enumerate() {
        if pending.is_empty() {
            pending = step.privileged.iter().copied().collect();
        }
        for f in &step.firings {
            pending.remove(&f.node);
        }
        let after = trace
            .steps
            .get(i + 1)
            .map_or(&trace.final_privileged, |s| &s.privileged);
        pending.retain(|v| after.binary_search(v).is_ok());
        if pending.is_empty() {
            count += 1;
        }
    }
    count
}
