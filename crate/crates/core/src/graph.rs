//! Weighted undirected dynamic network with a distinguished root and stable
//! per-node port labels.
//!
//! Node handles ([`NodeId`]) are simulation identities only. The protocol
//! never sees them: it reads its neighbourhood through port labels, which are
//! handed out per node starting at 1 and never reused or compacted.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Simulation handle of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Local edge label at one endpoint. Labels start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Port(pub u32);

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Strictly positive, finite edge cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(f64);

impl Weight {
    pub fn new(value: f64) -> Result<Self, GraphError> {
        if value.is_finite() && value > 0.0 {
            Ok(Weight(value))
        } else {
            Err(GraphError::InvalidWeight(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("event would disconnect the network")]
    DisconnectingEvent,
    #[error("the root cannot crash")]
    RootCrash,
    #[error("missing subject: {0}")]
    MissingSubject(String),
    #[error("edge {0}-{1} already exists")]
    DuplicateEdge(NodeId, NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("self-loop at {0}")]
    SelfLoop(NodeId),
    #[error("edge weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Link {
    peer: NodeId,
    weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Slot {
    alive: bool,
    ports: BTreeMap<Port, Link>,
    by_peer: BTreeMap<NodeId, Port>,
    next_port: u32,
}

/// The network `G = (V, E, w)` plus the root.
///
/// Values are treated as immutable snapshots by the simulator: events go
/// through [`DynamicGraph::apply_event`], which returns a fresh graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    slots: Vec<Slot>,
    root: NodeId,
}

impl DynamicGraph {
    /// A graph holding only the root, `n0`.
    pub fn with_root() -> Self {
        let mut g = DynamicGraph {
            slots: Vec::new(),
            root: NodeId(0),
        };
        g.add_node();
        g
    }

    /// Builds a graph with nodes `0..n` (root `0`) and the given edges,
    /// labelling ports in edge order.
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Result<Self, GraphError> {
        let mut g = DynamicGraph::with_root();
        for _ in 1..n {
            g.add_node();
        }
        for &(u, v, w) in edges {
            g.add_edge(NodeId(u), NodeId(v), Weight::new(w)?)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.slots.len() as u32);
        self.slots.push(Slot {
            alive: true,
            next_port: 1,
            ..Slot::default()
        });
        id
    }

    /// Inserts an edge, giving each endpoint a fresh port label.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId, w: Weight) -> Result<(Port, Port), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        for x in [u, v] {
            if !self.contains(x) {
                return Err(GraphError::MissingSubject(format!("node {x}")));
            }
        }
        if self.slots[u.index()].by_peer.contains_key(&v) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let pu = self.attach(u, v, w);
        let pv = self.attach(v, u, w);
        Ok((pu, pv))
    }

    fn attach(&mut self, at: NodeId, peer: NodeId, weight: Weight) -> Port {
        let slot = &mut self.slots[at.index()];
        let port = Port(slot.next_port);
        slot.next_port += 1;
        slot.ports.insert(port, Link { peer, weight });
        slot.by_peer.insert(peer, port);
        port
    }

    fn detach(&mut self, at: NodeId, peer: NodeId) {
        let slot = &mut self.slots[at.index()];
        if let Some(port) = slot.by_peer.remove(&peer) {
            slot.ports.remove(&port);
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.slots.get(v.index()).is_some_and(|s| s.alive)
    }

    /// Upper bound on node indices ever allocated; size of dense per-node tables.
    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn node_count(&self) -> usize {
        self.slots.iter().filter(|s| s.alive).count()
    }

    pub fn edge_count(&self) -> usize {
        self.slots.iter().map(|s| s.ports.len()).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(i, _)| NodeId(i as u32))
    }

    /// Edges as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Weight)> + '_ {
        self.nodes().flat_map(move |u| {
            self.slots[u.index()]
                .ports
                .values()
                .filter(move |l| u < l.peer)
                .map(move |l| (u, l.peer, l.weight))
        })
    }

    /// `(port, neighbour, weight)` in increasing port order.
    pub fn ports(&self, v: NodeId) -> impl Iterator<Item = (Port, NodeId, Weight)> + '_ {
        self.slots
            .get(v.index())
            .into_iter()
            .flat_map(|s| s.ports.iter().map(|(p, l)| (*p, l.peer, l.weight)))
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.ports(v).map(|(_, u, _)| u)
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.slots.get(v.index()).map_or(0, |s| s.ports.len())
    }

    /// Neighbour reached through `port` at `v`, if that edge exists.
    pub fn neighbor(&self, v: NodeId, port: Port) -> Option<NodeId> {
        self.slots.get(v.index())?.ports.get(&port).map(|l| l.peer)
    }

    /// Port at `v` leading to `u`.
    pub fn port_to(&self, v: NodeId, u: NodeId) -> Option<Port> {
        self.slots.get(v.index())?.by_peer.get(&u).copied()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<Weight> {
        let port = self.port_to(u, v)?;
        self.slots[u.index()].ports.get(&port).map(|l| l.weight)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.port_to(u, v).is_some()
    }

    /// True iff every node is reachable from the root.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.capacity()];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root.index()] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for u in self.neighbors(v) {
                if !seen[u.index()] {
                    seen[u.index()] = true;
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        reached == self.node_count()
    }

    /// Subgraph keeping only the edges accepted by `keep`, with every port
    /// label preserved. The result may be disconnected.
    pub fn filtered(&self, mut keep: impl FnMut(NodeId, NodeId) -> bool) -> DynamicGraph {
        let mut g = self.clone();
        for (u, v, _) in self.edges().collect::<Vec<_>>() {
            if !keep(u, v) {
                g.detach(u, v);
                g.detach(v, u);
            }
        }
        g
    }

    /// Applies one topology change and returns the new snapshot.
    ///
    /// Rejects events that would crash the root, reference missing elements,
    /// duplicate existing ones, or leave the network disconnected.
    pub fn apply_event(&self, event: &TopologyEvent) -> Result<DynamicGraph, GraphError> {
        let mut g = self.clone();
        match &event.kind {
            EventKind::CrashEdge { u, v } => {
                if !self.has_edge(*u, *v) {
                    return Err(GraphError::MissingSubject(format!("edge {u}-{v}")));
                }
                g.detach(*u, *v);
                g.detach(*v, *u);
            }
            EventKind::RecoverEdge { u, v, weight } => {
                g.add_edge(*u, *v, *weight)?;
            }
            EventKind::CrashNode { u } => {
                if *u == self.root {
                    return Err(GraphError::RootCrash);
                }
                if !self.contains(*u) {
                    return Err(GraphError::MissingSubject(format!("node {u}")));
                }
                for peer in self.neighbors(*u).collect::<Vec<_>>() {
                    g.detach(peer, *u);
                }
                let slot = &mut g.slots[u.index()];
                slot.alive = false;
                slot.ports.clear();
                slot.by_peer.clear();
            }
            EventKind::RecoverNode { u, links } => {
                if self.contains(*u) {
                    return Err(GraphError::DuplicateNode(*u));
                }
                if links.is_empty() {
                    return Err(GraphError::MissingSubject(format!(
                        "neighbours of recovered node {u}"
                    )));
                }
                while g.slots.len() <= u.index() {
                    g.slots.push(Slot {
                        next_port: 1,
                        ..Slot::default()
                    });
                }
                let slot = &mut g.slots[u.index()];
                slot.alive = true;
                slot.next_port = slot.next_port.max(1);
                for (peer, w) in links {
                    g.add_edge(*u, *peer, *w)?;
                }
            }
        }
        if !g.is_connected() {
            return Err(GraphError::DisconnectingEvent);
        }
        Ok(g)
    }
}

/// Kind and subjects of a topology change.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    CrashEdge { u: NodeId, v: NodeId },
    RecoverEdge { u: NodeId, v: NodeId, weight: Weight },
    CrashNode { u: NodeId },
    RecoverNode { u: NodeId, links: Vec<(NodeId, Weight)> },
}

/// A topology change scheduled to fire just before step `at_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyEvent {
    pub at_step: u64,
    pub kind: EventKind,
}

impl TopologyEvent {
    pub fn new(at_step: u64, kind: EventKind) -> Self {
        TopologyEvent { at_step, kind }
    }

    /// Crash events form the class the passage predicate is stated for.
    pub fn in_crash_class(&self) -> bool {
        matches!(
            self.kind,
            EventKind::CrashEdge { .. } | EventKind::CrashNode { .. }
        )
    }
}

impl fmt::Display for TopologyEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::CrashEdge { u, v } => write!(f, "crash_edge {u} {v}"),
            EventKind::RecoverEdge { u, v, weight } => write!(f, "recov_edge {u} {v} {weight}"),
            EventKind::CrashNode { u } => write!(f, "crash_node {u}"),
            EventKind::RecoverNode { u, links } => {
                write!(f, "recov_node {u}")?;
                for (peer, w) in links {
                    write!(f, " {peer}:{w}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: f64) -> Weight {
        Weight::new(x).unwrap()
    }

    #[test]
    fn ports_are_labelled_from_one_in_insertion_order() {
        let g = DynamicGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(g.port_to(NodeId(0), NodeId(1)), Some(Port(1)));
        assert_eq!(g.port_to(NodeId(0), NodeId(2)), Some(Port(2)));
        assert_eq!(g.port_to(NodeId(2), NodeId(1)), Some(Port(2)));
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn crashing_a_bridge_is_rejected() {
        let g = DynamicGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(2) });
        assert_eq!(g.apply_event(&e), Err(GraphError::DisconnectingEvent));
    }

    #[test]
    fn triangle_edge_crash_leaves_a_path() {
        let g = DynamicGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(2) });
        let h = g.apply_event(&e).unwrap();
        assert!(h.is_connected());
        assert_eq!(h.edge_count(), 2);
        assert!(h.has_edge(NodeId(0), NodeId(1)) && h.has_edge(NodeId(0), NodeId(2)));
        // surviving labels untouched
        assert_eq!(h.port_to(NodeId(0), NodeId(2)), Some(Port(2)));
    }

    #[test]
    fn root_crash_and_missing_subjects() {
        let g = DynamicGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let e = TopologyEvent::new(0, EventKind::CrashNode { u: NodeId(0) });
        assert_eq!(g.apply_event(&e), Err(GraphError::RootCrash));
        let e = TopologyEvent::new(0, EventKind::CrashNode { u: NodeId(7) });
        assert!(matches!(g.apply_event(&e), Err(GraphError::MissingSubject(_))));
        let e = TopologyEvent::new(
            0,
            EventKind::RecoverEdge { u: NodeId(1), v: NodeId(2), weight: w(1.0) },
        );
        assert_eq!(g.apply_event(&e), Err(GraphError::DuplicateEdge(NodeId(1), NodeId(2))));
    }

    #[test]
    fn recovered_edges_get_fresh_labels() {
        let g = DynamicGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let crash = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(0), v: NodeId(1) });
        let g = g.apply_event(&crash).unwrap();
        let back = TopologyEvent::new(
            1,
            EventKind::RecoverEdge { u: NodeId(0), v: NodeId(1), weight: w(2.0) },
        );
        let g = g.apply_event(&back).unwrap();
        assert_eq!(g.port_to(NodeId(0), NodeId(1)), Some(Port(3)));
        assert_eq!(g.port_to(NodeId(1), NodeId(0)), Some(Port(3)));
        assert_eq!(g.weight(NodeId(1), NodeId(0)), Some(w(2.0)));
    }

    #[test]
    fn node_crash_and_recovery() {
        let g = DynamicGraph::from_edges(
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let crash = TopologyEvent::new(0, EventKind::CrashNode { u: NodeId(1) });
        let h = g.apply_event(&crash).unwrap();
        assert!(!h.contains(NodeId(1)));
        assert_eq!(h.node_count(), 3);
        assert_eq!(h.degree(NodeId(2)), 1);
        let recov = TopologyEvent::new(
            3,
            EventKind::RecoverNode { u: NodeId(1), links: vec![(NodeId(0), w(1.0))] },
        );
        let k = h.apply_event(&recov).unwrap();
        assert!(k.contains(NodeId(1)));
        assert_eq!(k.port_to(NodeId(1), NodeId(0)), Some(Port(3)));
        assert_eq!(k.port_to(NodeId(0), NodeId(1)), Some(Port(3)));
        let brand_new = TopologyEvent::new(
            4,
            EventKind::RecoverNode { u: NodeId(9), links: vec![(NodeId(2), w(1.0))] },
        );
        let m = k.apply_event(&brand_new).unwrap();
        assert_eq!(m.node_count(), 5);
        assert_eq!(m.port_to(NodeId(9), NodeId(2)), Some(Port(1)));
    }

    #[test]
    fn single_node_is_connected_and_two_components_are_not() {
        assert!(DynamicGraph::with_root().is_connected());
        let g = DynamicGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!g.is_connected());
    }

    #[test]
    fn rejects_bad_weights_and_self_loops() {
        assert!(Weight::new(0.0).is_err());
        assert!(Weight::new(f64::NAN).is_err());
        assert!(DynamicGraph::from_edges(2, &[(1, 1, 1.0)]).is_err());
    }
}
