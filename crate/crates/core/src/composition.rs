//! Fair composition: a slave protocol outputs an edge set `S_A`, and the
//! BFS master runs on the network restricted to `S_A`.
//!
//! Both layers share one daemon. A node is privileged when either layer
//! has an enabled move; a selected node first executes its slave move, then
//! its master move on the view filtered by the updated `S_A`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{fire_nodes, Configuration, Daemon, Outcome, RunOptions};
use crate::graph::{DynamicGraph, NodeId, Port, Weight};
use crate::protocol::LocalView;
use crate::verify::{
    check_m_maxflow, check_m_mindeg, edge, loop_free, min_degree_tree_oracle, widest_path_tree,
    EdgeSet, Flow, OracleError, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlaveKind {
    OracleMaxflow,
    OracleMinDegree,
    DistributedMaxflow,
}

impl SlaveKind {
    pub const ALL: [SlaveKind; 3] = [
        SlaveKind::OracleMaxflow,
        SlaveKind::OracleMinDegree,
        SlaveKind::DistributedMaxflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SlaveKind::OracleMaxflow => "oracle-maxflow",
            SlaveKind::OracleMinDegree => "oracle-mindegree",
            SlaveKind::DistributedMaxflow => "distributed-maxflow",
        }
    }

    /// The metric predicate the slave's output is meant to satisfy.
    pub fn check(self, g: &DynamicGraph, s: &EdgeSet) -> Verdict {
        match self {
            SlaveKind::OracleMinDegree => check_m_mindeg(g, s),
            _ => check_m_maxflow(g, s),
        }
    }
}

impl fmt::Display for SlaveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositionError {
    #[error("unknown slave kind {0:?}")]
    UnknownSlave(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl FromStr for SlaveKind {
    type Err = CompositionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SlaveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CompositionError::UnknownSlave(s.to_string()))
    }
}

/// Registers of the distributed max-flow slave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowState {
    pub flow: Flow,
    pub flow_parent: Option<Port>,
    /// Hops to the root along flow pointers, capped by the node count.
    pub dist: u32,
}

impl FlowState {
    pub const ROOT: FlowState = FlowState {
        flow: Flow::Top,
        flow_parent: None,
        dist: 0,
    };

    pub const INVALID: FlowState = FlowState {
        flow: Flow::Bottom,
        flow_parent: None,
        dist: 0,
    };
}

/// What a node of the distributed slave reads.
#[derive(Debug, Clone)]
pub struct FlowView<'a> {
    pub is_root: bool,
    pub own: FlowState,
    pub node_count: usize,
    /// `(port, edge weight, neighbour registers)`, sorted by port.
    pub neighbors: &'a [(Port, Weight, FlowState)],
}

/// The state the node should hold: `⊤` at the root; elsewhere the best
/// `min(fw_u, w(u,v))` over neighbours whose hop counter leaves room for
/// one more hop, fewest hops then smallest port on ties; `⊥` when none
/// qualifies.
pub fn flow_target(view: &FlowView) -> FlowState {
    if view.is_root {
        return FlowState::ROOT;
    }
    let limit = view.node_count.saturating_sub(1) as u32;
    let mut best: Option<FlowState> = None;
    for &(port, w, u) in view.neighbors {
        if u.flow == Flow::Bottom || u.dist >= limit {
            continue;
        }
        let value = u.flow.min(w);
        // equal flows go to the shorter hop count; scanning in port order
        // leaves remaining ties with the smallest port
        if best.is_none_or(|b| value > b.flow || (value == b.flow && u.dist + 1 < b.dist)) {
            best = Some(FlowState {
                flow: value,
                flow_parent: Some(port),
                dist: u.dist + 1,
            });
        }
    }
    best.unwrap_or(FlowState::INVALID)
}

/// Enabled/apply pair of the distributed slave: the move, if the node is
/// not at its target.
pub fn distributed_maxflow_rules(view: &FlowView) -> Option<FlowState> {
    let target = flow_target(view);
    (target != view.own).then_some(target)
}

/// Slave layer state. Oracle slaves hold their (fixed) output.
#[derive(Debug, Clone, PartialEq)]
pub struct Slave {
    kind: SlaveKind,
    oracle: Option<EdgeSet>,
    flows: BTreeMap<NodeId, FlowState>,
}

impl Slave {
    /// Oracle slaves are solved here; the distributed slave starts at
    /// `⊤` at the root and `⊥` elsewhere.
    pub fn new(kind: SlaveKind, g: &DynamicGraph) -> Result<Slave, CompositionError> {
        let oracle = match kind {
            SlaveKind::OracleMaxflow => Some(widest_path_tree(g)),
            SlaveKind::OracleMinDegree => Some(min_degree_tree_oracle(g)?.0),
            SlaveKind::DistributedMaxflow => None,
        };
        let flows = g
            .nodes()
            .map(|v| (v, if v == g.root() { FlowState::ROOT } else { FlowState::INVALID }))
            .collect();
        Ok(Slave { kind, oracle, flows })
    }

    /// Like [`Slave::new`], with the distributed registers corrupted:
    /// random flows (possibly `⊤` or inflated), pointers and hop counters.
    pub fn random(kind: SlaveKind, g: &DynamicGraph, seed: u64) -> Result<Slave, CompositionError> {
        let mut s = Slave::new(kind, g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = g.edges().map(|(_, _, w)| w.get()).fold(1.0, f64::max) * 2.0;
        let n = g.node_count() as u32;
        for v in g.nodes().collect::<Vec<_>>() {
            let ports: Vec<Port> = g.ports(v).map(|(p, _, _)| p).collect();
            let flow = match rng.gen_range(0..4) {
                0 => Flow::Bottom,
                1 => Flow::Top,
                _ => Flow::Value(Weight::new(rng.gen_range(1..=top as u32) as f64).expect("positive")),
            };
            let pick = rng.gen_range(0..=ports.len());
            s.flows.insert(
                v,
                FlowState {
                    flow,
                    flow_parent: ports.get(pick).copied(),
                    dist: rng.gen_range(0..=n),
                },
            );
        }
        Ok(s)
    }

    pub fn kind(&self) -> SlaveKind {
        self.kind
    }

    pub fn flow(&self, v: NodeId) -> Option<FlowState> {
        self.flows.get(&v).copied()
    }

    pub fn flows(&self) -> &BTreeMap<NodeId, FlowState> {
        &self.flows
    }

    pub fn set_flow(&mut self, v: NodeId, s: FlowState) {
        self.flows.insert(v, s);
    }

    fn with_flow_view<T>(&self, g: &DynamicGraph, v: NodeId, f: impl FnOnce(&FlowView) -> T) -> T {
        let regs: Vec<(Port, Weight, FlowState)> = g
            .ports(v)
            .map(|(p, u, w)| (p, w, self.flows[&u]))
            .collect();
        f(&FlowView {
            is_root: v == g.root(),
            own: self.flows[&v],
            node_count: g.node_count(),
            neighbors: &regs,
        })
    }

    /// The pending slave move of `v`, if any.
    pub fn next_move(&self, g: &DynamicGraph, v: NodeId) -> Option<FlowState> {
        match self.kind {
            SlaveKind::DistributedMaxflow => self.with_flow_view(g, v, distributed_maxflow_rules),
            _ => None,
        }
    }
}

/// `S_A`: the oracle tree, or `{(v, flow_parent_v)}` over non-root nodes
/// whose pointer names a neighbour and whose flow is not `⊥`.
pub fn slave_output(g: &DynamicGraph, slave: &Slave) -> EdgeSet {
    if let Some(tree) = &slave.oracle {
        return tree.clone();
    }
    g.nodes()
        .filter(|&v| v != g.root())
        .filter_map(|v| {
            let s = slave.flows[&v];
            if s.flow == Flow::Bottom {
                return None;
            }
            g.neighbor(v, s.flow_parent?).map(|u| edge(u, v))
        })
        .collect()
}

/// `g` restricted to the edges of `s`, port labels unchanged.
pub fn filtered_graph(g: &DynamicGraph, s: &EdgeSet) -> DynamicGraph {
    g.filtered(|u, v| s.contains(&edge(u, v)))
}

/// `c`'s states over the neighbourhood restricted to `s`. A parent whose
/// edge is filtered out is not a neighbour, so its child acts as an orphan.
pub fn filtered_config(c: &Configuration, s: &EdgeSet) -> Configuration {
    c.with_graph(filtered_graph(c.graph(), s))
}

/// Evaluates `f` on `v`'s master view filtered by `s`.
pub fn filtered_view<T>(v: NodeId, c: &Configuration, s: &EdgeSet, f: impl FnOnce(&LocalView) -> T) -> T {
    filtered_config(c, s).with_view(v, f)
}

/// Both layers. The master's states are kept over the full graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub master: Configuration,
    pub slave: Slave,
}

impl Composed {
    pub fn new(master: Configuration, slave: Slave) -> Composed {
        Composed { master, slave }
    }

    pub fn graph(&self) -> &DynamicGraph {
        self.master.graph()
    }

    pub fn output(&self) -> EdgeSet {
        slave_output(self.graph(), &self.slave)
    }

    /// The master configuration as the BFS layer sees it.
    pub fn view(&self) -> Configuration {
        filtered_config(&self.master, &self.output())
    }

    /// Parent edges of the master on the filtered graph.
    pub fn master_tree(&self) -> EdgeSet {
        let view = self.view();
        view.nodes()
            .filter(|&v| v != view.graph().root())
            .filter_map(|v| view.parent_of(v).map(|p| edge(p, v)))
            .collect()
    }

    /// Nodes with a move in either layer.
    pub fn privileged(&self) -> Vec<NodeId> {
        let view = self.view();
        let g = self.graph();
        g.nodes()
            .filter(|&v| self.slave.next_move(g, v).is_some() || !view.enabled(v).is_empty())
            .collect()
    }
}

/// One composed step under `daemon`. Returns the new configuration and the
/// nodes that moved in either layer.
pub fn composed_step(c: &Composed, daemon: &mut Daemon) -> (Composed, Vec<NodeId>) {
    let privileged = c.privileged();
    if privileged.is_empty() {
        return (c.clone(), Vec::new());
    }
    let chosen = daemon.select(&privileged);
    fire_composed(c, &chosen)
}

fn fire_composed(c: &Composed, chosen: &[NodeId]) -> (Composed, Vec<NodeId>) {
    let g = c.graph();
    let mut slave = c.slave.clone();
    let mut moved = Vec::new();
    for &v in chosen {
        if let Some(next) = c.slave.next_move(g, v) {
            slave.set_flow(v, next);
            moved.push(v);
        }
    }
    let view = filtered_config(&c.master, &slave_output(g, &slave));
    let (next_view, firings) = fire_nodes(&view, chosen);
    moved.extend(firings.iter().map(|f| f.node));
    moved.sort();
    moved.dedup();
    let master = next_view.with_graph(c.master.graph_arc().clone());
    (Composed { master, slave }, moved)
}

/// Summary of a composed run.
#[derive(Debug, Clone)]
pub struct ComposedTrace {
    pub initial: Composed,
    pub final_state: Composed,
    pub steps: u64,
    pub rounds: u64,
    pub outcome: Outcome,
    /// Whether the master's filtered parent graph was acyclic at every
    /// recorded configuration, initial one included.
    pub loop_free: Verdict,
}

/// Runs until neither layer has a move, or the budget is spent.
pub fn run_composed(c0: &Composed, mut daemon: Daemon, opts: RunOptions) -> ComposedTrace {
    let mut c = c0.clone();
    let mut steps = 0u64;
    let mut rounds = 0u64;
    let mut pending: Vec<NodeId> = Vec::new();
    let mut first_loop: Option<String> = None;
    let mut note_loops = |c: &Composed, step: u64| {
        if first_loop.is_none() {
            if let Some(w) = loop_free(&c.view()).witness {
                first_loop = Some(format!("{w} after step {step}"));
            }
        }
    };
    note_loops(&c, 0);
    let mut round_open = false;
    let outcome = loop {
        let privileged = c.privileged();
        if round_open {
            pending.retain(|v| privileged.binary_search(v).is_ok());
            if pending.is_empty() {
                round_open = false;
                rounds += 1;
            }
        }
        if privileged.is_empty() {
            break Outcome::Terminal;
        }
        if steps >= opts.max_steps {
            if round_open {
                rounds += 1;
            }
            break Outcome::BudgetExceeded;
        }
        if !round_open {
            pending = privileged.clone();
            round_open = true;
        }
        let chosen = daemon.select(&privileged);
        let (next, moved) = fire_composed(&c, &chosen);
        pending.retain(|v| !moved.contains(v));
        c = next;
        steps += 1;
        note_loops(&c, steps);
    };
    ComposedTrace {
        initial: c0.clone(),
        final_state: c,
        steps,
        rounds,
        outcome,
        loop_free: Verdict::from_witness("composed_loop_free", first_loop),
    }
}
