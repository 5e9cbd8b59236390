//! Explicit-state counterpart of the symbolic checker, driven by the
//! engine's own rule evaluation. Only usable on tiny instances; it exists
//! to cross-check the BDD encoding.

use std::collections::HashMap;

use super::{check_bounds, describe, describe_graph, extended_limit, ModelCheckError, ModelCheckReport};
use crate::engine::{fire_nodes, Configuration};
use crate::graph::{DynamicGraph, NodeId, Port};
use crate::protocol::{Guards, NodeState, Status};
use crate::verify::{level_ordered, loop_free, LegitimacyCheck, Verdict};

const MAX_INITIAL: u128 = 5_000_000;
const FIELD: u32 = 16;

struct Space {
    graph: std::sync::Arc<DynamicGraph>,
    ids: Vec<NodeId>,
    ports: Vec<Vec<Port>>,
    max: u32,
    guards: Guards,
}

impl Space {
    fn pack(&self, c: &Configuration) -> Option<u64> {
        let mut key = 0u64;
        for (i, &v) in self.ids.iter().enumerate() {
            let s = c.state(v);
            if s.level > self.max || s.new_level > self.max {
                return None;
            }
            let code = s
                .parent
                .and_then(|p| self.ports[i].iter().position(|&q| q == p))
                .map_or(0, |k| k as u64 + 1);
            let status = u64::from(s.status == Status::P);
            let field = code | status << 3 | u64::from(s.level) << 4 | u64::from(s.new_level) << 10;
            key |= field << (FIELD * i as u32);
        }
        Some(key)
    }

    fn unpack(&self, key: u64) -> Configuration {
        let states = self.ids.iter().enumerate().map(|(i, &v)| {
            let field = key >> (FIELD * i as u32) & 0xffff;
            let code = (field & 7) as usize;
            let parent = code.checked_sub(1).map(|k| self.ports[i][k]);
            let status = if field >> 3 & 1 == 1 { Status::P } else { Status::N };
            let s = NodeState::new(parent, status, (field >> 4 & 63) as u32, (field >> 10 & 63) as u32);
            (v, s)
        });
        Configuration::new(std::sync::Arc::clone(&self.graph), states)
            .expect("all nodes")
            .with_guards(self.guards)
    }
}

/// Explicit-state version of [`super::model_check_with`]; at most 4 nodes
/// and five million initial states.
pub fn model_check_explicit(
    g: &DynamicGraph,
    cap: u32,
    guards: Guards,
) -> Result<ModelCheckReport, ModelCheckError> {
    explicit_check(g, cap, cap, guards)
}

/// Explicit-state version of [`super::model_check_extended`].
pub fn model_check_explicit_extended(
    g: &DynamicGraph,
    cap: u32,
    guards: Guards,
) -> Result<ModelCheckReport, ModelCheckError> {
    explicit_check(g, cap, extended_limit(cap), guards)
}

fn explicit_check(g: &DynamicGraph, cap: u32, max: u32, guards: Guards) -> Result<ModelCheckReport, ModelCheckError> {
    check_bounds(g, cap)?;
    if g.node_count() > 4 {
        return Err(ModelCheckError::StateSpaceTooLarge("explicit search stops at 4 nodes".into()));
    }
    let ids: Vec<NodeId> = g.nodes().collect();
    let space = Space {
        graph: std::sync::Arc::new(g.clone()),
        ports: ids.iter().map(|&v| g.ports(v).map(|(p, _, _)| p).collect()).collect(),
        ids,
        max,
        guards,
    };
    let radix: Vec<u128> = space
        .ports
        .iter()
        .map(|p| (p.len() as u128 + 1) * 2 * u128::from(cap + 1).pow(2))
        .collect();
    let initial_states: u128 = radix.iter().product();
    if initial_states > MAX_INITIAL {
        return Err(ModelCheckError::StateSpaceTooLarge(format!(
            "{initial_states} initial states"
        )));
    }

    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut keys: Vec<u64> = Vec::new();
    for mut k in 0..initial_states {
        let mut key = 0u64;
        for (i, (r, ports)) in radix.iter().zip(&space.ports).enumerate() {
            let mut digit = k % r;
            k /= r;
            let code = digit % (ports.len() as u128 + 1);
            digit /= ports.len() as u128 + 1;
            let status = digit % 2;
            digit /= 2;
            let level = digit % u128::from(cap + 1);
            let new_level = digit / u128::from(cap + 1);
            let field = code | status << 3 | level << 4 | new_level << 10;
            key |= (field as u64) << (FIELD * i as u32);
        }
        index.insert(key, keys.len() as u32);
        keys.push(key);
    }

    let n = space.ids.len();
    let mut edges: Vec<Vec<(u32, u8)>> = Vec::new();
    let mut enabled: Vec<u8> = Vec::new();
    let mut truncated = false;
    let mut at = 0usize;
    while at < keys.len() {
        let c = space.unpack(keys[at]);
        let mut out = Vec::new();
        let mut mask = 0u8;
        for (i, &v) in space.ids.iter().enumerate() {
            let (next, firings) = fire_nodes(&c, &[v]);
            if firings.is_empty() {
                continue;
            }
            mask |= 1 << i;
            match space.pack(&next) {
                Some(key) => {
                    let id = *index.entry(key).or_insert_with(|| {
                        keys.push(key);
                        keys.len() as u32 - 1
                    });
                    out.push((id, i as u8));
                }
                None => truncated = true,
            }
        }
        edges.push(out);
        enabled.push(mask);
        at += 1;
    }
    let total = keys.len();

    let mut legit_check = LegitimacyCheck::new();
    let configs: Vec<Configuration> = keys.iter().map(|&k| space.unpack(k)).collect();
    let legit: Vec<bool> = configs.iter().map(|c| legit_check.holds(c)).collect();

    let closure = |name: &str, holds: &[bool]| {
        let bad = (0..total).find_map(|s| {
            let &(_, node) = edges[s].iter().find(|(t, _)| holds[s] && !holds[*t as usize])?;
            Some(format!("{} then {} moves", describe(&configs[s]), space.ids[node as usize]))
        });
        Verdict::from_witness(name, bad)
    };
    let lf: Vec<bool> = configs.iter().map(|c| loop_free(c).holds).collect();
    let ord: Vec<bool> = configs.iter().map(|c| level_ordered(c).holds).collect();
    let loop_free_closure = closure("loop_free_closure", &lf);
    let ordered_closure = closure("ordered_closure", &ord);
    let legitimacy_closure = closure("legitimacy_closure", &legit);

    let convergence = match (0..total).find(|&s| !legit[s] && enabled[s] == 0) {
        Some(s) => Verdict::fail("convergence", format!("deadlock {}", describe(&configs[s]))),
        None => Verdict::from_witness(
            "convergence",
            fair_component(&edges, &enabled, &legit, n)
                .map(|s| format!("fair cycle through {}", describe(&configs[s as usize]))),
        ),
    };

    Ok(ModelCheckReport {
        graph: describe_graph(g),
        guards,
        nodes: n,
        cap,
        max_level: max,
        initial_states,
        reachable_states: total as u128,
        truncated,
        convergence,
        loop_free_closure,
        ordered_closure,
        legitimacy_closure,
    })
}

/// A state of a strongly connected set of illegitimate states in which
/// every node is somewhere disabled or moves along an internal edge.
fn fair_component(edges: &[Vec<(u32, u8)>], enabled: &[u8], legit: &[bool], n: usize) -> Option<u32> {
    let total = edges.len();
    let inside = |s: usize| !legit[s];
    let mut comp = vec![u32::MAX; total];
    let mut low = vec![0u32; total];
    let mut num = vec![u32::MAX; total];
    let mut on_stack = vec![false; total];
    let mut stack: Vec<u32> = Vec::new();
    let mut counter = 0u32;
    let mut comps = 0u32;
    let mut found = None;
    for root in (0..total).filter(|&s| inside(s)) {
        if num[root] != u32::MAX {
            continue;
        }
        // frames of (state, next edge index)
        let mut call: Vec<(u32, usize)> = vec![(root as u32, 0)];
        num[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root as u32);
        on_stack[root] = true;
        while let Some(&mut (s, ref mut i)) = call.last_mut() {
            let s_us = s as usize;
            if let Some(&(t, _)) = edges[s_us].get(*i) {
                *i += 1;
                let t_us = t as usize;
                if !inside(t_us) {
                    continue;
                }
                if num[t_us] == u32::MAX {
                    num[t_us] = counter;
                    low[t_us] = counter;
                    counter += 1;
                    stack.push(t);
                    on_stack[t_us] = true;
                    call.push((t, 0));
                } else if on_stack[t_us] {
                    low[s_us] = low[s_us].min(num[t_us]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[s_us]);
            }
            if low[s_us] == num[s_us] {
                let mut members = Vec::new();
                loop {
                    let x = stack.pop().expect("tarjan stack");
                    on_stack[x as usize] = false;
                    comp[x as usize] = comps;
                    members.push(x);
                    if x == s {
                        break;
                    }
                }
                if found.is_none() && is_fair(&members, comps, &comp, edges, enabled, n) {
                    found = Some(s);
                }
                comps += 1;
            }
        }
    }
    found
}

fn is_fair(members: &[u32], id: u32, comp: &[u32], edges: &[Vec<(u32, u8)>], enabled: &[u8], n: usize) -> bool {
    let mut served = 0u32;
    let mut internal = false;
    for &s in members {
        served |= u32::from(!enabled[s as usize]) & ((1 << n) - 1);
        for &(t, node) in &edges[s as usize] {
            if comp[t as usize] == id {
                internal = true;
                served |= 1 << node;
            }
        }
    }
    internal && served == (1 << n) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn pack_round_trip() {
        let g = generate::complete(3);
        let ids: Vec<NodeId> = g.nodes().collect();
        let space = Space {
            graph: std::sync::Arc::new(g.clone()),
            ports: ids.iter().map(|&v| g.ports(v).map(|(p, _, _)| p).collect()).collect(),
            ids,
            max: 15,
            guards: Guards::Repaired,
        };
        for seed in 0..50 {
            let c = Configuration::random(g.clone(), seed).with_guards(Guards::Repaired);
            let key = space.pack(&c).unwrap();
            assert_eq!(space.unpack(key), c);
        }
    }

    #[test]
    fn single_edge_converges() {
        let r = model_check_explicit(&generate::path(2), 2, Guards::Literal).unwrap();
        assert!(r.holds(), "{r}");
        assert_eq!(r.initial_states, 36 * 36);
    }

    #[test]
    fn fairness_of_components() {
        // two states swapping by node 0 and node 1 moves: fair for n = 2
        let edges = vec![vec![(1, 0)], vec![(0, 1)]];
        let comp = vec![0, 0];
        assert!(is_fair(&[0, 1], 0, &comp, &edges, &[1, 2], 2));
        // node 1 enabled everywhere but never moves
        let edges = vec![vec![(1, 0)], vec![(0, 0)]];
        assert!(!is_fair(&[0, 1], 0, &comp, &edges, &[3, 3], 2));
        // ...unless it is disabled somewhere
        assert!(is_fair(&[0, 1], 0, &comp, &edges, &[3, 1], 2));
    }
}
