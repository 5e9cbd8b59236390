use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::graph::{DynamicGraph, NodeId, Weight};

/// Undirected edge set, each edge stored as `(min, max)`.
pub type EdgeSet = BTreeSet<(NodeId, NodeId)>;

pub fn edge(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Bottleneck value on the extended weight line `⊥ < w < ⊤`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Flow {
    Bottom,
    Value(Weight),
    Top,
}

impl Flow {
    pub fn min(self, w: Weight) -> Flow {
        std::cmp::min(self, Flow::Value(w))
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flow::Bottom => f.write_str("bottom"),
            Flow::Value(w) => write!(f, "{w}"),
            Flow::Top => f.write_str("top"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("graph has {0} nodes; the exhaustive oracle stops at {1}")]
    TooLarge(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
}

/// Hop distance from the root for every node reachable from it.
pub fn bfs_oracle(g: &DynamicGraph) -> BTreeMap<NodeId, u32> {
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(g.root(), 0);
    queue.push_back(g.root());
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for w in g.neighbors(u) {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

#[derive(PartialEq, Eq)]
struct Entry {
    flow: Flow,
    hops: u32,
    node: NodeId,
    via: Option<NodeId>,
}

impl Ord for Entry {
    // max-heap: larger flow first, then fewer hops, then smaller ids
    fn cmp(&self, other: &Self) -> Ordering {
        self.flow
            .cmp(&other.flow)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
            .then(other.via.cmp(&self.via))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-bottleneck Dijkstra from the root. Returns the settled flow and the
/// node it was settled through.
fn widest(g: &DynamicGraph) -> BTreeMap<NodeId, (Flow, Option<NodeId>)> {
    let mut done: BTreeMap<NodeId, (Flow, Option<NodeId>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        flow: Flow::Top,
        hops: 0,
        node: g.root(),
        via: None,
    });
    while let Some(Entry { flow, hops, node, via }) = heap.pop() {
        if done.contains_key(&node) {
            continue;
        }
        done.insert(node, (flow, via));
        for (_, w, weight) in g.ports(node) {
            if !done.contains_key(&w) {
                heap.push(Entry {
                    flow: flow.min(weight),
                    hops: hops + 1,
                    node: w,
                    via: Some(node),
                });
            }
        }
    }
    done
}

/// Best bottleneck `mfw_v` over all root paths; `⊤` at the root.
pub fn widest_path_oracle(g: &DynamicGraph) -> BTreeMap<NodeId, Flow> {
    widest(g).into_iter().map(|(v, (f, _))| (v, f)).collect()
}

/// A spanning tree in which every node's root path is a widest path.
/// Ties go to fewer hops, then to the smaller node id.
pub fn widest_path_tree(g: &DynamicGraph) -> EdgeSet {
    widest(g)
        .into_iter()
        .filter_map(|(v, (_, via))| via.map(|u| edge(u, v)))
        .collect()
}

pub fn max_degree(tree: &EdgeSet) -> usize {
    let mut deg: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &(u, v) in tree {
        *deg.entry(u).or_default() += 1;
        *deg.entry(v).or_default() += 1;
    }
    deg.into_values().max().unwrap_or(0)
}

const MAX_EXHAUSTIVE: usize = 10;

/// Every spanning tree of `g`, by include/exclude recursion over edges.
pub fn all_spanning_trees(g: &DynamicGraph) -> Result<Vec<EdgeSet>, OracleError> {
    let n = g.node_count();
    if n > MAX_EXHAUSTIVE {
        return Err(OracleError::TooLarge(n, MAX_EXHAUSTIVE));
    }
    let edges: Vec<(NodeId, NodeId)> = g.edges().map(|(u, v, _)| (u, v)).collect();
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    enumerate(g, &edges, 0, &mut chosen, &mut out);
    Ok(out)
}

fn enumerate(
    g: &DynamicGraph,
    edges: &[(NodeId, NodeId)],
    i: usize,
    chosen: &mut Vec<(NodeId, NodeId)>,
    out: &mut Vec<EdgeSet>,
) {
    let need = g.node_count() - 1;
    if chosen.len() == need {
        if acyclic(g, chosen) {
            out.push(chosen.iter().copied().collect());
        }
        return;
    }
    if edges.len() - i < need - chosen.len() {
        return;
    }
    chosen.push(edges[i]);
    if acyclic(g, chosen) {
        enumerate(g, edges, i + 1, chosen, out);
    }
    chosen.pop();
    enumerate(g, edges, i + 1, chosen, out);
}

fn acyclic(g: &DynamicGraph, edges: &[(NodeId, NodeId)]) -> bool {
    let mut parent: Vec<usize> = (0..g.capacity()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u.index()), find(&mut parent, v.index()));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

/// A spanning tree of minimum maximum degree, found by trying bounds
/// `1, 2, …` with a degree-capped backtracking search.
pub fn min_degree_tree_oracle(g: &DynamicGraph) -> Result<(EdgeSet, usize), OracleError> {
    let n = g.node_count();
    if n > MAX_EXHAUSTIVE {
        return Err(OracleError::TooLarge(n, MAX_EXHAUSTIVE));
    }
    if !g.is_connected() {
        return Err(OracleError::Disconnected);
    }
    if n == 1 {
        return Ok((EdgeSet::new(), 0));
    }
    let edges: Vec<(NodeId, NodeId)> = g.edges().map(|(u, v, _)| (u, v)).collect();
    for bound in 1..n {
        let mut deg = vec![0usize; g.capacity()];
        let mut chosen = Vec::new();
        if bounded(g, &edges, 0, bound, &mut deg, &mut chosen) {
            return Ok((chosen.into_iter().collect(), bound));
        }
    }
    unreachable!("a connected graph has a spanning tree of degree below n")
}

fn bounded(
    g: &DynamicGraph,
    edges: &[(NodeId, NodeId)],
    i: usize,
    bound: usize,
    deg: &mut [usize],
    chosen: &mut Vec<(NodeId, NodeId)>,
) -> bool {
    let need = g.node_count() - 1;
    if chosen.len() == need {
        return true;
    }
    if i == edges.len() || edges.len() - i < need - chosen.len() {
        return false;
    }
    let (u, v) = edges[i];
    if deg[u.index()] < bound && deg[v.index()] < bound {
        chosen.push((u, v));
        if acyclic(g, chosen) {
            deg[u.index()] += 1;
            deg[v.index()] += 1;
            if bounded(g, edges, i + 1, bound, deg, chosen) {
                return true;
            }
            deg[u.index()] -= 1;
            deg[v.index()] -= 1;
        }
        chosen.pop();
    }
    bounded(g, edges, i + 1, bound, deg, chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn bfs_distances_on_cycle() {
        let d = bfs_oracle(&generate::cycle(6));
        let got: Vec<u32> = d.values().copied().collect();
        assert_eq!(got, vec![0, 1, 2, 3, 2, 1]);
    }

    #[test]
    fn spanning_tree_counts_match_cayley() {
        // K_n has n^(n-2) spanning trees; C_n has n
        for n in 2..=6 {
            let trees = all_spanning_trees(&generate::complete(n)).unwrap();
            assert_eq!(trees.len(), n.pow(n as u32 - 2));
        }
        assert_eq!(all_spanning_trees(&generate::cycle(7)).unwrap().len(), 7);
    }

    #[test]
    fn min_degree_matches_enumeration() {
        for n in 1..=5 {
            for g in generate::connected_graphs(n) {
                let (tree, d) = min_degree_tree_oracle(&g).unwrap();
                assert_eq!(tree.len(), n - 1);
                assert_eq!(max_degree(&tree), d);
                let best = all_spanning_trees(&g)
                    .unwrap()
                    .iter()
                    .map(max_degree)
                    .min()
                    .unwrap();
                assert_eq!(d, best);
            }
        }
    }

    #[test]
    fn min_degree_refuses_large_graphs() {
        assert_eq!(
            min_degree_tree_oracle(&generate::path(11)),
            Err(OracleError::TooLarge(11, 10))
        );
    }

    /// Best bottleneck by brute force over all simple root paths.
    fn brute_widest(g: &DynamicGraph, target: NodeId) -> Flow {
        fn go(g: &DynamicGraph, at: NodeId, target: NodeId, seen: &mut Vec<NodeId>, acc: Flow) -> Flow {
            if at == target {
                return acc;
            }
            let mut best = Flow::Bottom;
            for (_, w, wt) in g.ports(at) {
                if !seen.contains(&w) {
                    seen.push(w);
                    best = best.max(go(g, w, target, seen, acc.min(wt)));
                    seen.pop();
                }
            }
            best
        }
        go(g, g.root(), target, &mut vec![g.root()], Flow::Top)
    }

    #[test]
    fn widest_paths_match_brute_force() {
        for seed in 0..40 {
            let g = generate::random_connected(7, 0.4, 5, seed);
            let oracle = widest_path_oracle(&g);
            for v in g.nodes() {
                assert_eq!(oracle[&v], brute_widest(&g, v), "seed {seed} node {v}");
            }
            let tree = widest_path_tree(&g);
            assert_eq!(tree.len(), 6);
            assert!(acyclic(&g, &tree.iter().copied().collect::<Vec<_>>()));
        }
    }

    #[test]
    fn flow_order() {
        let w = Weight::new(2.0).unwrap();
        assert!(Flow::Bottom < Flow::Value(w));
        assert!(Flow::Value(w) < Flow::Top);
        assert_eq!(Flow::Top.min(w), Flow::Value(w));
    }
}
