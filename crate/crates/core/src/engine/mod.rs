//! Drives configurations under a daemon, injects topology events between
//! steps, and records traces with round boundaries.
//!
//! Moves use composite atomicity: every selected node reads the pre-step
//! configuration, then all writes land together.

mod config;
mod daemon;
mod trace;

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

pub use config::Configuration;
pub use daemon::{Daemon, DaemonKind};
pub use trace::{rounds, AppliedEvent, ExecutionTrace, Firing, Outcome, StepRecord};

use crate::graph::{DynamicGraph, GraphError, NodeId, TopologyEvent};
use crate::protocol::{self, RuleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no state given for node {0}")]
    MissingState(NodeId),
    #[error("state given for unknown node {0}")]
    UnknownNode(NodeId),
    #[error("events must be sorted by step")]
    UnsortedEvents,
}

/// Fires the default-priority rule at each of `nodes`, all reading `c`.
pub fn fire_nodes(c: &Configuration, nodes: &[NodeId]) -> (Configuration, Vec<Firing>) {
    let firings: Vec<Firing> = nodes
        .iter()
        .filter_map(|&v| {
            c.with_view(v, protocol::fire).map(|(rule, after)| Firing {
                node: v,
                rule,
                before: c.state(v),
                after,
            })
        })
        .collect();
    let mut next = c.clone();
    for f in &firings {
        next.set(f.node, f.after);
    }
    (next, firings)
}

/// One computation step. A configuration with no privileged node is
/// returned unchanged with an empty record.
pub fn step(c: &Configuration, daemon: &mut Daemon) -> (Configuration, Vec<Firing>) {
    let privileged = c.privileged();
    if privileged.is_empty() {
        return (c.clone(), Vec::new());
    }
    let chosen = daemon.select(&privileged);
    fire_nodes(c, &chosen)
}

/// Limits and recording switches for [`run`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_steps: u64,
    /// Stop once this many rounds have closed.
    pub max_rounds: Option<u64>,
    pub keep_snapshots: bool,
}

impl RunOptions {
    pub fn new(max_steps: u64) -> Self {
        RunOptions {
            max_steps,
            max_rounds: None,
            keep_snapshots: false,
        }
    }

    pub fn with_max_rounds(mut self, rounds: u64) -> Self {
        self.max_rounds = Some(rounds);
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }
}

/// Runs from `c0` until `stop` holds with no event left to inject, the
/// configuration is terminal, or `max_steps` is reached.
pub fn run(
    c0: &Configuration,
    daemon: Daemon,
    events: &[TopologyEvent],
    stop: impl FnMut(&Configuration) -> bool,
    opts: RunOptions,
) -> Result<ExecutionTrace, EngineError> {
    run_observed(c0, daemon, events, stop, opts, |_| {})
}

/// [`run`], calling `observe` on the initial configuration, after every
/// injected event and after every step.
pub fn run_observed(
    c0: &Configuration,
    daemon: Daemon,
    events: &[TopologyEvent],
    stop: impl FnMut(&Configuration) -> bool,
    opts: RunOptions,
    observe: impl FnMut(&Configuration),
) -> Result<ExecutionTrace, EngineError> {
    Simulator::new(c0.clone(), daemon, events)?.run(stop, opts, observe)
}

/// Incremental runner: keeps each node's enabled rule set and refreshes only
/// the closed neighbourhoods of nodes that moved.
pub struct Simulator {
    config: Configuration,
    daemon: Daemon,
    events: VecDeque<TopologyEvent>,
    enabled: Vec<RuleSet>,
    next_step: u64,
}

impl Simulator {
    pub fn new(
        config: Configuration,
        daemon: Daemon,
        events: &[TopologyEvent],
    ) -> Result<Self, EngineError> {
        if events.windows(2).any(|w| w[0].at_step > w[1].at_step) {
            return Err(EngineError::UnsortedEvents);
        }
        let mut sim = Simulator {
            config,
            daemon,
            events: events.iter().cloned().collect(),
            enabled: Vec::new(),
            next_step: 0,
        };
        sim.refresh_all();
        Ok(sim)
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    fn refresh_all(&mut self) {
        self.enabled = vec![RuleSet::EMPTY; self.config.graph().capacity()];
        for v in self.config.nodes().collect::<Vec<_>>() {
            self.enabled[v.index()] = self.config.enabled(v);
        }
    }

    fn refresh_around(&mut self, moved: &[NodeId]) {
        let graph = Arc::clone(self.config.graph_arc());
        let mut touched: Vec<NodeId> = moved
            .iter()
            .flat_map(|&v| std::iter::once(v).chain(graph.neighbors(v)))
            .collect();
        touched.sort();
        touched.dedup();
        for v in touched {
            self.enabled[v.index()] = self.config.enabled(v);
        }
    }

    fn privileged(&self) -> Vec<NodeId> {
        self.config
            .nodes()
            .filter(|v| !self.enabled[v.index()].is_empty())
            .collect()
    }

    fn apply_due_events(&mut self, applied: &mut Vec<AppliedEvent>) -> Result<bool, EngineError> {
        let mut any = false;
        while self
            .events
            .front()
            .is_some_and(|e| e.at_step <= self.next_step)
        {
            let e = self.events.pop_front().expect("front checked");
            let graph: DynamicGraph = self.config.graph().apply_event(&e)?;
            self.config = self.config.rebase(graph);
            applied.push(AppliedEvent {
                before_step: self.next_step,
                event: e,
            });
            any = true;
        }
        if any {
            self.refresh_all();
        }
        Ok(any)
    }

    pub fn run(
        mut self,
        mut stop: impl FnMut(&Configuration) -> bool,
        opts: RunOptions,
        mut observe: impl FnMut(&Configuration),
    ) -> Result<ExecutionTrace, EngineError> {
        let initial = self.config.clone();
        observe(&initial);
        let mut steps: Vec<StepRecord> = Vec::new();
        let mut applied = Vec::new();
        let mut round_ends = Vec::new();
        let mut pending: Vec<NodeId> = Vec::new();
        let mut round_open = false;
        let mut snapshots = opts.keep_snapshots.then(Vec::new);

        let outcome = loop {
            if self.apply_due_events(&mut applied)? {
                observe(&self.config);
            }
            let privileged = self.privileged();
            if round_open {
                pending.retain(|v| privileged.binary_search(v).is_ok());
                if pending.is_empty() {
                    round_open = false;
                    round_ends.push(self.next_step - 1);
                }
            }
            if self.events.is_empty() && stop(&self.config) {
                break Outcome::Stopped;
            }
            if privileged.is_empty() {
                match self.events.front() {
                    Some(e) => {
                        self.next_step = self.next_step.max(e.at_step);
                        continue;
                    }
                    None => break Outcome::Terminal,
                }
            }
            if steps.len() as u64 >= opts.max_steps
                || opts.max_rounds.is_some_and(|r| round_ends.len() as u64 >= r)
            {
                break Outcome::BudgetExceeded;
            }
            if !round_open {
                pending = privileged.clone();
                round_open = true;
            }
            let chosen = self.daemon.select(&privileged);
            let (next, firings) = fire_nodes(&self.config, &chosen);
            self.config = next;
            let moved: Vec<NodeId> = firings.iter().map(|f| f.node).collect();
            self.refresh_around(&moved);
            pending.retain(|v| !moved.contains(v));
            steps.push(StepRecord {
                index: self.next_step,
                privileged,
                firings,
                digest: self.config.digest(),
            });
            if let Some(s) = snapshots.as_mut() {
                s.push(self.config.clone());
            }
            observe(&self.config);
            self.next_step += 1;
        };

        Ok(ExecutionTrace {
            initial,
            steps,
            events: applied,
            round_ends,
            final_privileged: self.privileged(),
            final_config: self.config,
            snapshots,
            outcome,
        })
    }
}
