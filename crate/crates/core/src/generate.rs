//! Graph generators for sweeps, tests and exhaustive checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DynamicGraph, NodeId};

/// Random connected graph on `n` nodes (root `n0`): a random recursive
/// tree plus every other pair independently with probability `extra`.
/// Weights are integers in `1..=max_weight`, so ties occur.
pub fn random_connected(n: usize, extra: f64, max_weight: u32, seed: u64) -> DynamicGraph {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (1..n as u32).collect();
    order.shuffle(&mut rng);
    order.insert(0, 0);
    let mut pairs = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        pairs.push(ordered(order[i], order[j]));
    }
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            if !pairs.contains(&(a, b)) && rng.gen_bool(extra) {
                pairs.push((a, b));
            }
        }
    }
    pairs.shuffle(&mut rng);
    let edges: Vec<(u32, u32, f64)> = pairs
        .into_iter()
        .map(|(a, b)| (a, b, rng.gen_range(1..=max_weight) as f64))
        .collect();
    DynamicGraph::from_edges(n, &edges).expect("generated edges are valid")
}

fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Every connected simple graph on nodes `0..n` with root `n0`, edges
/// inserted in lexicographic order. Unit weights.
pub fn connected_graphs(n: usize) -> Vec<DynamicGraph> {
    let pairs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|a| (a + 1..n as u32).map(move |b| (a, b)))
        .collect();
    (0u64..1 << pairs.len())
        .filter_map(|mask| {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &(a, b))| (a, b, 1.0))
                .collect();
            let g = DynamicGraph::from_edges(n, &edges).ok()?;
            g.is_connected().then_some(g)
        })
        .collect()
}

pub fn path(n: usize) -> DynamicGraph {
    let edges: Vec<_> = (1..n as u32).map(|i| (i - 1, i, 1.0)).collect();
    DynamicGraph::from_edges(n, &edges).expect("path")
}

pub fn star(leaves: usize) -> DynamicGraph {
    let edges: Vec<_> = (1..=leaves as u32).map(|i| (0, i, 1.0)).collect();
    DynamicGraph::from_edges(leaves + 1, &edges).expect("star")
}

pub fn cycle(n: usize) -> DynamicGraph {
    let edges: Vec<_> = (0..n as u32).map(|i| (i, (i + 1) % n as u32, 1.0)).collect();
    DynamicGraph::from_edges(n, &edges).expect("cycle")
}

pub fn complete(n: usize) -> DynamicGraph {
    let edges: Vec<_> = (0..n as u32)
        .flat_map(|a| (a + 1..n as u32).map(move |b| (a, b, 1.0)))
        .collect();
    DynamicGraph::from_edges(n, &edges).expect("complete")
}

/// Union-find connectivity, independent of [`DynamicGraph::is_connected`].
pub fn connected_by_union_find(g: &DynamicGraph) -> bool {
    let mut parent: Vec<usize> = (0..g.capacity()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for (u, v, _) in g.edges() {
        let (a, b) = (find(&mut parent, u.index()), find(&mut parent, v.index()));
        parent[a] = b;
    }
    let root = find(&mut parent, g.root().index());
    let nodes: Vec<NodeId> = g.nodes().collect();
    nodes.into_iter().all(|v| find(&mut parent, v.index()) == root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graphs_are_connected() {
        for seed in 0..200 {
            let g = random_connected(10, 0.2, 9, seed);
            assert_eq!(g.node_count(), 10);
            assert!(g.is_connected());
            assert!(connected_by_union_find(&g));
        }
    }

    #[test]
    fn union_find_detects_components() {
        let g = DynamicGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!connected_by_union_find(&g));
        assert!(!g.is_connected());
    }

    #[test]
    fn connected_graph_counts() {
        // labelled connected graphs on 1..=4 vertices: 1, 1, 4, 38
        let counts: Vec<usize> = (1..=4).map(|n| connected_graphs(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 4, 38]);
    }
}
