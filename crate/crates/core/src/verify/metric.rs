use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::oracles::{max_degree, min_degree_tree_oracle, widest_path_oracle, EdgeSet, Flow};
use super::Verdict;
use crate::graph::{DynamicGraph, NodeId};

/// Flow of every node along its tree path in `tree`: `⊤` at the root,
/// `min(fw(p), w(p, v))` below. Nodes the tree does not reach are absent.
pub fn tree_flows(g: &DynamicGraph, tree: &EdgeSet) -> BTreeMap<NodeId, Flow> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(u, v) in tree {
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut fw = BTreeMap::new();
    fw.insert(g.root(), Flow::Top);
    let mut queue = VecDeque::from([g.root()]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(&u).into_iter().flatten() {
            if fw.contains_key(&v) {
                continue;
            }
            let Some(w) = g.weight(u, v) else { continue };
            fw.insert(v, fw[&u].min(w));
            queue.push_back(v);
        }
    }
    fw
}

/// `|S| = n − 1`, `V = V_S`, and `S` is a tree of edges of `g` reaching every node.
fn spanning_tree_clauses(g: &DynamicGraph, s: &EdgeSet) -> Option<String> {
    let n = g.node_count();
    if s.len() + 1 != n {
        return Some(format!("|S|={} but n-1={}", s.len(), n.saturating_sub(1)));
    }
    let mut covered: BTreeSet<NodeId> = s.iter().flat_map(|&(u, v)| [u, v]).collect();
    covered.insert(g.root());
    if let Some(v) = g.nodes().find(|v| !covered.contains(v)) {
        return Some(format!("{v} not covered by S"));
    }
    if let Some(&(u, v)) = s.iter().find(|&&(u, v)| !g.has_edge(u, v)) {
        return Some(format!("{u}-{v} is not an edge"));
    }
    let reached = tree_flows(g, s);
    if let Some(v) = g.nodes().find(|v| !reached.contains_key(v)) {
        return Some(format!("{v} not connected to the root in S"));
    }
    None
}

/// Maximum-flow tree predicate on `S`: spanning tree clauses, then for every
/// non-root `v`, `fw(v) = max{min(fw(u), w(u,v)) : u ∈ N(v)}` and
/// `fw(v) = mfw_v`. The root keeps the `⊤` sentinel.
pub fn check_m_maxflow(g: &DynamicGraph, s: &EdgeSet) -> Verdict {
    const NAME: &str = "M_maxflow";
    if let Some(w) = spanning_tree_clauses(g, s) {
        return Verdict::fail(NAME, w);
    }
    let fw = tree_flows(g, s);
    let mfw = widest_path_oracle(g);
    for v in g.nodes().filter(|&v| v != g.root()) {
        let local = g
            .ports(v)
            .map(|(_, u, w)| fw[&u].min(w))
            .max()
            .unwrap_or(Flow::Bottom);
        if fw[&v] != local {
            return Verdict::fail(NAME, format!("{v} fw={} local max={local}", fw[&v]));
        }
        if fw[&v] != mfw[&v] {
            return Verdict::fail(NAME, format!("{v} fw={} mfw={}", fw[&v], mfw[&v]));
        }
    }
    Verdict::pass(NAME)
}

/// Minimum-degree predicate on `S`: spanning tree clauses and
/// `deg(S) = min{deg(T') : T' spanning tree of g}`.
pub fn check_m_mindeg(g: &DynamicGraph, s: &EdgeSet) -> Verdict {
    const NAME: &str = "M_mindeg";
    if let Some(w) = spanning_tree_clauses(g, s) {
        return Verdict::fail(NAME, w);
    }
    match min_degree_tree_oracle(g) {
        Ok((_, best)) => {
            let d = max_degree(s);
            if d == best {
                Verdict::pass(NAME)
            } else {
                Verdict::fail(NAME, format!("deg(S)={d} optimum={best}"))
            }
        }
        Err(e) => Verdict::fail(NAME, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::verify::oracles::{edge, widest_path_tree};

    fn triangle() -> DynamicGraph {
        // r=0, a=1, b=2
        DynamicGraph::from_edges(3, &[(0, 1, 5.0), (0, 2, 3.0), (1, 2, 4.0)]).unwrap()
    }

    fn set(pairs: &[(u32, u32)]) -> EdgeSet {
        pairs.iter().map(|&(u, v)| edge(NodeId(u), NodeId(v))).collect()
    }

    #[test]
    fn widest_tree_on_triangle() {
        let g = triangle();
        let tree = widest_path_tree(&g);
        assert_eq!(tree, set(&[(0, 1), (1, 2)]));
        assert!(check_m_maxflow(&g, &tree).holds);
        let direct = set(&[(0, 1), (0, 2)]);
        let v = check_m_maxflow(&g, &direct);
        assert!(!v.holds);
        assert!(v.witness.unwrap().starts_with("n2"));
    }

    #[test]
    fn cardinality_and_coverage() {
        let g = triangle();
        assert!(check_m_maxflow(&g, &set(&[(0, 1)])).witness.unwrap().starts_with("|S|=1"));
        assert!(!check_m_mindeg(&g, &set(&[(0, 1), (0, 2), (1, 2)])).holds);
        let g = generate::path(4);
        // right size but one edge repeated as a cycle is impossible in a set; use a non-edge
        assert!(!check_m_mindeg(&g, &set(&[(0, 1), (1, 2), (0, 3)])).holds);
    }

    #[test]
    fn perturbed_widest_tree_fails() {
        let mut failures = 0;
        for seed in 0..30 {
            let g = generate::random_connected(8, 0.5, 9, seed);
            let tree = widest_path_tree(&g);
            assert!(check_m_maxflow(&g, &tree).holds, "seed {seed}");
            // swap one tree edge for a non-tree edge that keeps a spanning tree
            for (u, v, _) in g.edges() {
                if tree.contains(&edge(u, v)) {
                    continue;
                }
                for &out in &tree {
                    let mut t = tree.clone();
                    t.remove(&out);
                    t.insert(edge(u, v));
                    if tree_flows(&g, &t).len() == g.node_count() {
                        let oracle = widest_path_oracle(&g);
                        let worse = tree_flows(&g, &t).iter().any(|(x, f)| oracle[x] != *f);
                        assert_eq!(!check_m_maxflow(&g, &t).holds, worse);
                        failures += usize::from(worse);
                    }
                }
            }
        }
        assert!(failures > 0);
    }

    #[test]
    fn mindeg_on_cycle_and_star() {
        let c4 = generate::cycle(4);
        assert!(check_m_mindeg(&c4, &set(&[(0, 1), (1, 2), (2, 3)])).holds);
        let k4 = generate::complete(4);
        assert!(!check_m_mindeg(&k4, &set(&[(0, 1), (0, 2), (0, 3)])).holds);
        assert!(check_m_mindeg(&k4, &set(&[(0, 1), (1, 2), (2, 3)])).holds);
        let star = generate::star(3);
        assert!(check_m_mindeg(&star, &set(&[(0, 1), (0, 2), (0, 3)])).holds);
    }
}
