use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;
use crate::graph::{DynamicGraph, NodeId, Port};
use crate::protocol::{self, Guards, LocalView, NeighborRegister, NodeState, RuleSet, Status};

/// A graph snapshot plus one [`NodeState`] per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    graph: Arc<DynamicGraph>,
    states: Vec<Option<NodeState>>,
    guards: Guards,
}

impl Configuration {
    /// Fails unless `states` covers exactly the nodes of `graph`.
    pub fn new(
        graph: impl Into<Arc<DynamicGraph>>,
        states: impl IntoIterator<Item = (NodeId, NodeState)>,
    ) -> Result<Self, EngineError> {
        let graph = graph.into();
        let mut table = vec![None; graph.capacity()];
        for (v, s) in states {
            if !graph.contains(v) {
                return Err(EngineError::UnknownNode(v));
            }
            table[v.index()] = Some(s);
        }
        if let Some(v) = graph.nodes().find(|v| table[v.index()].is_none()) {
            return Err(EngineError::MissingState(v));
        }
        Ok(Configuration {
            graph,
            states: table,
            guards: Guards::Literal,
        })
    }

    pub fn from_fn(
        graph: impl Into<Arc<DynamicGraph>>,
        mut f: impl FnMut(NodeId) -> NodeState,
    ) -> Self {
        let graph = graph.into();
        let mut states = vec![None; graph.capacity()];
        for v in graph.nodes() {
            states[v.index()] = Some(f(v));
        }
        Configuration {
            graph,
            states,
            guards: Guards::Literal,
        }
    }

    /// Arbitrary (corrupted) starting point: parent drawn from ports ∪ {⊥},
    /// status from {N, P}, level and NewLevel from `0..=2n`.
    pub fn random(graph: impl Into<Arc<DynamicGraph>>, seed: u64) -> Self {
        let graph = graph.into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = 2 * graph.node_count() as u32;
        let g = Arc::clone(&graph);
        Configuration::from_fn(graph, |v| {
            let ports: Vec<Port> = g.ports(v).map(|(p, _, _)| p).collect();
            let pick = rng.gen_range(0..=ports.len());
            let parent = ports.get(pick).copied();
            let status = if rng.gen_bool(0.5) { Status::N } else { Status::P };
            NodeState::new(parent, status, rng.gen_range(0..=top), rng.gen_range(0..=top))
        })
    }

    pub fn guards(&self) -> Guards {
        self.guards
    }

    /// Same states, evaluated under another reading of the guards.
    pub fn with_guards(mut self, guards: Guards) -> Self {
        self.guards = guards;
        self
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<DynamicGraph> {
        &self.graph
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.graph.nodes()
    }

    /// # Panics
    /// If `v` is not a node of the current graph.
    pub fn state(&self, v: NodeId) -> NodeState {
        self.get(v).unwrap_or_else(|| panic!("no state for {v}"))
    }

    pub fn get(&self, v: NodeId) -> Option<NodeState> {
        self.states.get(v.index()).copied().flatten()
    }

    pub fn states(&self) -> impl Iterator<Item = (NodeId, NodeState)> + '_ {
        self.graph.nodes().map(|v| (v, self.state(v)))
    }

    pub(crate) fn set(&mut self, v: NodeId, s: NodeState) {
        self.states[v.index()] = Some(s);
    }

    pub fn with_state(mut self, v: NodeId, s: NodeState) -> Self {
        self.set(v, s);
        self
    }

    /// The node that `v`'s parent port designates, if that edge exists.
    pub fn parent_of(&self, v: NodeId) -> Option<NodeId> {
        self.graph.neighbor(v, self.get(v)?.parent?)
    }

    /// Readable registers of `v`'s neighbours, sorted by port.
    pub fn registers(&self, v: NodeId) -> Vec<NeighborRegister> {
        self.graph
            .ports(v)
            .map(|(port, u, _)| NeighborRegister {
                port,
                state: self.state(u),
                points_here: self.parent_of(u) == Some(v),
            })
            .collect()
    }

    /// Evaluates `f` on `v`'s local view.
    pub fn with_view<T>(&self, v: NodeId, f: impl FnOnce(&LocalView) -> T) -> T {
        let regs = self.registers(v);
        let view = LocalView::new(v == self.graph.root(), self.state(v), &regs).with_guards(self.guards);
        f(&view)
    }

    pub fn enabled(&self, v: NodeId) -> RuleSet {
        self.with_view(v, protocol::enabled_rules)
    }

    pub fn privileged(&self) -> Vec<NodeId> {
        self.nodes().filter(|v| !self.enabled(*v).is_empty()).collect()
    }

    pub fn is_terminal(&self) -> bool {
        self.nodes().all(|v| self.enabled(v).is_empty())
    }

    /// Stable hash of every node's registers.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (v, s) in self.states() {
            v.hash(&mut h);
            s.hash(&mut h);
        }
        h.finish()
    }

    /// Moves onto a new graph snapshot: removed nodes lose their state,
    /// new nodes start as fresh orphans `(⊥, N, 0, 0)`.
    pub fn rebase(&self, graph: impl Into<Arc<DynamicGraph>>) -> Configuration {
        let old = self;
        Configuration::from_fn(graph, |v| old.get(v).unwrap_or(NodeState::new(None, Status::N, 0, 0)))
            .with_guards(self.guards)
    }

    /// Same states over a different neighbourhood relation on the same nodes.
    pub fn with_graph(&self, graph: impl Into<Arc<DynamicGraph>>) -> Configuration {
        Configuration {
            graph: graph.into(),
            states: self.states.clone(),
            guards: self.guards,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: u32) -> DynamicGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        DynamicGraph::from_edges(n as usize, &edges).unwrap()
    }

    #[test]
    fn random_is_deterministic_and_valid() {
        let g = Arc::new(ring(6));
        let a = Configuration::random(Arc::clone(&g), 42);
        let b = Configuration::random(Arc::clone(&g), 42);
        assert_eq!(a, b);
        assert_eq!(a.states().count(), 6);
        for (v, s) in a.states() {
            assert!(s.level <= 12 && s.new_level <= 12);
            if let Some(p) = s.parent {
                assert!(g.neighbor(v, p).is_some());
            }
        }
    }

    #[test]
    fn seed_sweep_covers_both_statuses_everywhere() {
        let g = Arc::new(ring(5));
        let mut seen = [[false; 2]; 5];
        for seed in 0..1000 {
            let c = Configuration::random(Arc::clone(&g), seed);
            for (v, s) in c.states() {
                seen[v.index()][(s.status == Status::P) as usize] = true;
            }
        }
        assert!(seen.iter().all(|s| s[0] && s[1]));
    }

    #[test]
    fn missing_state_is_rejected() {
        let g = ring(3);
        let err = Configuration::new(g, [(NodeId(0), NodeState::ROOT)]).unwrap_err();
        assert!(matches!(err, EngineError::MissingState(_)));
    }
}
