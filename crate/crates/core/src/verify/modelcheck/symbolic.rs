//! BDD encoding of the protocol under a central daemon.
//!
//! Every node owns a parent code (0 for ⊥, `i` for its `i`-th port), a
//! status bit (set for P) and two counters ranging over `0..=limit`, stored
//! in `bits(limit)` bits. Moves that would push a counter past `limit` are
//! left out of the relation. Each state bit `x`
//! has its next-state copy `x'` placed right after it, so renaming between
//! the two never reorders a BDD.

use std::collections::{BTreeMap, HashMap};

use biodivine_lib_bdd::{op_function, Bdd, BddValuation, BddVariable, BddVariableSet, BddVariableSetBuilder};

use crate::engine::Configuration;
use crate::graph::{DynamicGraph, NodeId, Port};
use crate::protocol::{Guards, NodeState, Status};
use crate::verify::bfs_oracle;

#[derive(Debug, Clone, Copy)]
struct Pair {
    x: BddVariable,
    next: BddVariable,
}

/// Little-endian bit vector of BDDs.
type Bits = Vec<Bdd>;

#[derive(Debug)]
struct NodeVars {
    id: NodeId,
    /// LSB first.
    parent: Vec<Pair>,
    status: Pair,
    level: Vec<Pair>,
    new_level: Vec<Pair>,
    /// Dense positions of neighbours, in port order.
    neighbours: Vec<usize>,
    ports: Vec<Port>,
}

impl NodeVars {
    fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.parent
            .iter()
            .chain(std::iter::once(&self.status))
            .chain(&self.level)
            .chain(&self.new_level)
            .copied()
    }
}

/// Per-node transition relation and guard.
struct NodeRelation {
    relation: Bdd,
    enabled: Bdd,
    overflow: Bdd,
    current: Vec<BddVariable>,
    primed: Vec<BddVariable>,
    to_primed: HashMap<BddVariable, BddVariable>,
    to_current: HashMap<BddVariable, BddVariable>,
}

pub(super) struct Encoding {
    vars: BddVariableSet,
    nodes: Vec<NodeVars>,
    rel: Vec<NodeRelation>,
    graph: DynamicGraph,
    guards: Guards,
    width: usize,
    limit: u32,
    primed_count: usize,
}

fn bits_for(max: u32) -> usize {
    (u32::BITS - max.leading_zeros()) as usize
}

impl Encoding {
    /// Counters range over `0..=limit`.
    pub(super) fn new(g: &DynamicGraph, limit: u32, guards: Guards) -> Encoding {
        let width = bits_for(limit).max(1);
        let ids: Vec<NodeId> = g.nodes().collect();
        let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut b = BddVariableSetBuilder::new();
        let pair = |b: &mut BddVariableSetBuilder, name: String| Pair {
            x: b.make_variable(&name),
            next: b.make_variable(&format!("{name}'")),
        };
        let mut heads = Vec::new();
        for &v in &ids {
            let k = bits_for(g.degree(v) as u32);
            let parent: Vec<Pair> = (0..k).map(|i| pair(&mut b, format!("p{}_{i}", v.0))).collect();
            let status = pair(&mut b, format!("s{}", v.0));
            heads.push((parent, status));
        }
        let mut level = vec![vec![None; width]; ids.len()];
        let mut new_level = vec![vec![None; width]; ids.len()];
        for bit in (0..width).rev() {
            for (i, v) in ids.iter().enumerate() {
                level[i][bit] = Some(pair(&mut b, format!("l{}_{bit}", v.0)));
                new_level[i][bit] = Some(pair(&mut b, format!("nl{}_{bit}", v.0)));
            }
        }
        let vars = b.build();
        let nodes: Vec<NodeVars> = heads
            .into_iter()
            .enumerate()
            .map(|(i, (parent, status))| {
                let v = ids[i];
                NodeVars {
                    id: v,
                    parent,
                    status,
                    level: level[i].iter().map(|p| p.expect("built")).collect(),
                    new_level: new_level[i].iter().map(|p| p.expect("built")).collect(),
                    neighbours: g.ports(v).map(|(_, u, _)| pos[&u]).collect(),
                    ports: g.ports(v).map(|(p, _, _)| p).collect(),
                }
            })
            .collect();
        let primed_count = nodes.iter().map(|n| n.pairs().count()).sum();
        let mut enc = Encoding {
            vars,
            nodes,
            rel: Vec::new(),
            graph: g.clone(),
            guards,
            width,
            limit,
            primed_count,
        };
        enc.rel = (0..enc.nodes.len()).map(|i| enc.relation(i)).collect();
        enc
    }

    pub(super) fn limit(&self) -> u32 {
        self.limit
    }

    pub(super) fn root(&self) -> usize {
        self.nodes.iter().position(|n| n.id == self.graph.root()).expect("root")
    }

    pub(super) fn node_count(&self) -> usize {
        self.nodes.len()
    }

    // ---- bit-vector helpers ----

    fn t(&self) -> Bdd {
        self.vars.mk_true()
    }

    fn f(&self) -> Bdd {
        self.vars.mk_false()
    }

    fn constant(&self, k: u32, w: usize) -> Bits {
        (0..w).map(|i| if k >> i & 1 == 1 { self.t() } else { self.f() }).collect()
    }

    fn read(&self, pairs: &[Pair]) -> Bits {
        pairs.iter().map(|p| self.vars.mk_var(p.x)).collect()
    }

    fn extend(&self, a: &Bits, w: usize) -> Bits {
        let mut out = a.clone();
        out.resize(w, self.f());
        out
    }

    /// `a + 1`, one bit wider than `a`.
    fn inc(&self, a: &Bits) -> Bits {
        let mut carry = self.t();
        let mut out = Vec::with_capacity(a.len() + 1);
        for bit in a {
            out.push(bit.xor(&carry));
            carry = bit.and(&carry);
        }
        out.push(carry);
        out
    }

    fn eq(&self, a: &Bits, b: &Bits) -> Bdd {
        let w = a.len().max(b.len());
        let (a, b) = (self.extend(a, w), self.extend(b, w));
        a.iter().zip(&b).fold(self.t(), |acc, (x, y)| acc.and(&x.iff(y)))
    }

    /// Unsigned `a < b`.
    fn lt(&self, a: &Bits, b: &Bits) -> Bdd {
        let w = a.len().max(b.len());
        let (a, b) = (self.extend(a, w), self.extend(b, w));
        a.iter().zip(&b).fold(self.f(), |below, (x, y)| {
            x.not().and(y).or(&x.iff(y).and(&below))
        })
    }

    fn mux(&self, c: &Bdd, a: &Bits, b: &Bits) -> Bits {
        let w = a.len().max(b.len());
        let (a, b) = (self.extend(a, w), self.extend(b, w));
        a.iter().zip(&b).map(|(x, y)| Bdd::if_then_else(c, x, y)).collect()
    }

    fn min(&self, a: &Bits, b: &Bits) -> Bits {
        self.mux(&self.lt(a, b), a, b)
    }

    fn code_is(&self, v: usize, k: u32) -> Bdd {
        let n = &self.nodes[v];
        self.eq(&self.read(&n.parent), &self.constant(k, n.parent.len()))
    }

    fn is_p(&self, v: usize) -> Bdd {
        self.vars.mk_var(self.nodes[v].status.x)
    }

    fn level(&self, v: usize) -> Bits {
        self.read(&self.nodes[v].level)
    }

    fn new_level(&self, v: usize) -> Bits {
        self.read(&self.nodes[v].new_level)
    }

    /// Code that neighbour `u` uses for the port leading back to `v`.
    fn back_code(&self, u: usize, v: usize) -> u32 {
        let i = self.nodes[u].neighbours.iter().position(|&x| x == v).expect("symmetric");
        i as u32 + 1
    }

    /// Registers of the node `v`'s parent code designates (zero when ⊥).
    fn parent_registers(&self, v: usize) -> (Bits, Bdd, Bits) {
        let w = self.width;
        let mut level = self.constant(0, w);
        let mut status = self.f();
        let mut new_level = self.constant(0, w);
        for (i, &u) in self.nodes[v].neighbours.iter().enumerate() {
            let sel = self.code_is(v, i as u32 + 1);
            level = self.mux(&sel, &self.level(u), &level);
            new_level = self.mux(&sel, &self.new_level(u), &new_level);
            status = Bdd::if_then_else(&sel, &self.is_p(u), &status);
        }
        (level, status, new_level)
    }

    /// The graph's parent edges among non-roots: `v → u` when `v`'s code names `u`.
    fn points_to(&self, v: usize, u: usize) -> Bdd {
        match self.nodes[v].neighbours.iter().position(|&x| x == u) {
            Some(i) => self.code_is(v, i as u32 + 1),
            None => self.f(),
        }
    }

    fn relation(&self, v: usize) -> NodeRelation {
        let node = &self.nodes[v];
        let w = self.width;
        let code = self.read(&node.parent);
        let s = self.is_p(v);
        let lv = self.level(v);
        let nl = self.new_level(v);

        let (next_code, next_s, next_l, next_nl, enabled, overflow);
        if node.id == self.graph.root() {
            enabled = self
                .eq(&code, &self.constant(0, code.len()))
                .and(&s.not())
                .and(&self.eq(&lv, &self.constant(0, w)))
                .and(&self.eq(&nl, &self.constant(0, w)))
                .not();
            next_code = self.constant(0, code.len());
            next_s = self.f();
            next_l = self.constant(0, w);
            next_nl = self.constant(0, w);
            overflow = self.f();
        } else {
            let nbrs = &node.neighbours;
            let m = nbrs[1..]
                .iter()
                .fold(self.level(nbrs[0]), |acc, &u| self.min(&acc, &self.level(u)));
            let hat = self.inc(&m);
            let mut ph_exists = self.f();
            let mut ph = self.constant(0, code.len());
            for (i, &u) in nbrs.iter().enumerate().rev() {
                let cand = self.eq(&self.level(u), &m).and(&self.is_p(u).not());
                ph_exists = ph_exists.or(&cand);
                ph = self.mux(&cand, &self.constant(i as u32 + 1, code.len()), &ph);
            }
            let pc = ph_exists.and(
                &self
                    .lt(&hat, &lv)
                    .or(&self.eq(&lv, &hat).and(&self.eq(&code, &ph).not())),
            );
            let in_nbhd = self.code_is(v, 0).not();
            let (lp, sp, nlp) = self.parent_registers(v);
            let nlp1 = self.inc(&nlp);
            let level_up = in_nbhd.and(&match self.guards {
                Guards::Literal => self
                    .eq(&lv, &self.inc(&lp))
                    .not()
                    .or(&sp.and(&self.eq(&lv, &nlp1).not())),
                Guards::Repaired => self.lt(&lv, &self.inc(&self.mux(&sp, &nlp, &lp))),
            });
            let mut propag_end = self.t();
            let mut ubl_ok = self.t();
            for &u in nbrs {
                let child = self
                    .code_is(u, self.back_code(u, v))
                    .and(&self.lt(&lv, &self.level(u)));
                propag_end = propag_end.and(&child.imp(&self.is_p(u).not()));
                ubl_ok = ubl_ok.and(&child.imp(&self.lt(&nl, &self.level(u))));
            }
            let neutral = s.not();
            let en_lc = self.lt(&nl, &lv);
            let en_sc = neutral.and(&pc);
            let en_lpp = neutral.and(&in_nbhd).and(&pc.not()).and(&level_up);
            let en_ep = s.and(&propag_end).and(&ubl_ok);
            let en_dy = neutral.and(&in_nbhd.not()).and(&pc.not());

            let sel_lc = en_lc.clone();
            let taken = en_lc;
            let sel_sc = en_sc.and(&taken.not());
            let taken = taken.or(&en_sc);
            let sel_lpp = en_lpp.and(&taken.not());
            let taken = taken.or(&en_lpp);
            let sel_ep = en_ep.and(&taken.not());
            let taken = taken.or(&en_ep);
            let sel_dy = en_dy.and(&taken.not());
            enabled = taken.or(&en_dy);

            let hat_l: Bits = hat[..w].to_vec();
            let nlp1_l: Bits = nlp1[..w].to_vec();
            next_code = self.mux(&sel_sc, &ph, &code);
            next_s = sel_lpp.or(&sel_dy).or(&s.and(&sel_ep.not()));
            next_l = self.mux(&sel_sc, &hat_l, &self.mux(&sel_ep, &nl, &lv));
            next_nl = self.mux(
                &sel_lc,
                &lv,
                &self.mux(
                    &sel_sc,
                    &hat_l,
                    &self.mux(&sel_lpp, &nlp1_l, &self.mux(&sel_dy, &hat_l, &nl)),
                ),
            );
            let limit = self.constant(self.limit, w + 1);
            overflow = sel_sc
                .or(&sel_dy)
                .and(&self.lt(&limit, &hat))
                .or(&sel_lpp.and(&self.lt(&limit, &nlp1)));
        }

        let mut relation = enabled.and(&overflow.not());
        let targets = node
            .parent
            .iter()
            .zip(&next_code)
            .chain(std::iter::once((&node.status, &next_s)))
            .chain(node.level.iter().zip(&next_l))
            .chain(node.new_level.iter().zip(&next_nl));
        for (pair, value) in targets {
            relation = relation.and(&self.vars.mk_var(pair.next).iff(value));
        }
        let pairs: Vec<Pair> = node.pairs().collect();
        NodeRelation {
            relation,
            enabled,
            overflow,
            current: pairs.iter().map(|p| p.x).collect(),
            primed: pairs.iter().map(|p| p.next).collect(),
            to_primed: pairs.iter().map(|p| (p.x, p.next)).collect(),
            to_current: pairs.iter().map(|p| (p.next, p.x)).collect(),
        }
    }

    // ---- state sets ----

    /// Parent codes name existing ports and counters are within the limit.
    pub(super) fn domain(&self) -> Bdd {
        let codes = (0..self.nodes.len()).fold(self.t(), |acc, v| {
            let n = &self.nodes[v];
            let code = self.read(&n.parent);
            let max = self.constant(n.neighbours.len() as u32 + 1, code.len() + 1);
            acc.and(&self.lt(&code, &max))
        });
        codes.and(&self.counters_up_to(self.limit))
    }

    /// Domain states whose counters are all at most `cap`.
    pub(super) fn initial(&self, cap: u32) -> Bdd {
        self.domain().and(&self.counters_up_to(cap))
    }

    fn counters_up_to(&self, k: u32) -> Bdd {
        let c = self.constant(k + 1, self.width + 2);
        (0..self.nodes.len()).fold(self.t(), |acc, v| {
            acc.and(&self.lt(&self.level(v), &c))
                .and(&self.lt(&self.new_level(v), &c))
        })
    }

    pub(super) fn legitimate(&self) -> Bdd {
        let dist = bfs_oracle(&self.graph);
        let w = self.width;
        (0..self.nodes.len()).fold(self.t(), |acc, v| {
            let n = &self.nodes[v];
            let neutral = self.is_p(v).not();
            let lv = self.level(v);
            let clause = if n.id == self.graph.root() {
                self.code_is(v, 0)
                    .and(&neutral)
                    .and(&self.eq(&lv, &self.constant(0, w)))
                    .and(&self.eq(&self.new_level(v), &self.constant(0, w)))
            } else {
                let (lp, _, _) = self.parent_registers(v);
                neutral
                    .and(&self.eq(&lv, &self.constant(dist[&n.id], w + 1)))
                    .and(&self.code_is(v, 0).not())
                    .and(&self.eq(&self.inc(&lp), &lv))
            };
            acc.and(&clause)
        })
    }

    /// No directed cycle of parent pointers among non-root nodes.
    pub(super) fn loop_free(&self) -> Bdd {
        let root = self.nodes.iter().position(|n| n.id == self.graph.root()).expect("root");
        let mut any_cycle = self.f();
        for cycle in simple_cycles(&self.nodes, root) {
            let mut all = self.t();
            for (i, &v) in cycle.iter().enumerate() {
                all = all.and(&self.points_to(v, cycle[(i + 1) % cycle.len()]));
            }
            any_cycle = any_cycle.or(&all);
        }
        any_cycle.not()
    }

    /// Every non-root with a parent sits strictly below it.
    pub(super) fn ordered(&self) -> Bdd {
        let root = self.nodes.iter().position(|n| n.id == self.graph.root()).expect("root");
        (0..self.nodes.len()).filter(|&v| v != root).fold(self.t(), |acc, v| {
            let (lp, _, _) = self.parent_registers(v);
            acc.and(&self.code_is(v, 0).not().imp(&self.lt(&lp, &self.level(v))))
        })
    }

    pub(super) fn enabled(&self, v: usize) -> &Bdd {
        &self.rel[v].enabled
    }

    pub(super) fn overflow_any(&self) -> Bdd {
        self.rel.iter().fold(self.f(), |acc, r| acc.or(&r.overflow))
    }

    pub(super) fn deadlock(&self) -> Bdd {
        self.rel.iter().fold(self.t(), |acc, r| acc.and(&r.enabled.not()))
    }

    // ---- images ----

    /// States with a move of `v` into `s`.
    pub(super) fn pre(&self, v: usize, s: &Bdd) -> Bdd {
        let r = &self.rel[v];
        let mut shifted = s.clone();
        // Safety: every current bit of `v` maps onto the primed bit right
        // after it, and `s` mentions no primed bit, so the order is kept.
        unsafe { shifted.rename_variables(&r.to_primed) };
        Bdd::binary_op_with_exists(&r.relation, &shifted, op_function::and, &r.primed)
    }

    /// States reached from `s` by one move of `v`.
    pub(super) fn post(&self, v: usize, s: &Bdd) -> Bdd {
        let r = &self.rel[v];
        let mut image = Bdd::binary_op_with_exists(s, &r.relation, op_function::and, &r.current);
        // Safety: `v`'s current bits were quantified away, so each primed bit
        // moves onto the free slot right before it.
        unsafe { image.rename_variables(&r.to_current) };
        image
    }

    pub(super) fn pre_any(&self, s: &Bdd) -> Bdd {
        (0..self.nodes.len()).fold(self.f(), |acc, v| acc.or(&self.pre(v, s)))
    }

    pub(super) fn post_any(&self, s: &Bdd) -> Bdd {
        (0..self.nodes.len()).fold(self.f(), |acc, v| acc.or(&self.post(v, s)))
    }

    // ---- concrete states ----

    /// Number of states in `s` (primed bits are unconstrained in state sets).
    pub(super) fn count(&self, s: &Bdd) -> u128 {
        let exact = s.exact_cardinality() >> self.primed_count;
        exact.to_string().parse().expect("count fits in u128")
    }

    #[cfg(test)]
    pub(super) fn state_of(&self, c: &Configuration) -> Bdd {
        let mut out = self.t();
        for (v, n) in self.nodes.iter().enumerate() {
            let s = c.state(n.id);
            let code = match s.parent {
                None => 0,
                Some(p) => n.ports.iter().position(|&q| q == p).map_or(0, |i| i as u32 + 1),
            };
            let fix = |out: Bdd, pairs: &[Pair], k: u32| {
                out.and(&self.eq(&self.read(pairs), &self.constant(k, pairs.len() + 1)))
            };
            out = fix(out, &n.parent, code);
            out = out.and(&if s.status == Status::P { self.is_p(v) } else { self.is_p(v).not() });
            out = fix(out, &n.level, s.level);
            out = fix(out, &n.new_level, s.new_level);
        }
        out
    }

    pub(super) fn decode(&self, val: &BddValuation) -> Configuration {
        let num = |pairs: &[Pair]| {
            pairs
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, p)| acc | (u32::from(val.value(p.x)) << i))
        };
        let states: BTreeMap<NodeId, NodeState> = self
            .nodes
            .iter()
            .map(|n| {
                let code = num(&n.parent) as usize;
                let parent = code.checked_sub(1).and_then(|i| n.ports.get(i).copied());
                let status = if val.value(n.status.x) { Status::P } else { Status::N };
                (n.id, NodeState::new(parent, status, num(&n.level), num(&n.new_level)))
            })
            .collect();
        Configuration::new(self.graph.clone(), states)
            .expect("every node decoded")
            .with_guards(self.guards)
    }

    pub(super) fn sample(&self, s: &Bdd) -> Option<Configuration> {
        s.sat_witness().map(|v| self.decode(&v))
    }
}

/// Simple directed cycles of length ≥ 2 avoiding `root`, each listed once
/// starting from its smallest position.
fn simple_cycles(nodes: &[NodeVars], root: usize) -> Vec<Vec<usize>> {
    fn extend(nodes: &[NodeVars], root: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let start = path[0];
        let last = *path.last().expect("non-empty");
        for &u in &nodes[last].neighbours {
            if u == root || u < start {
                continue;
            }
            if u == start && path.len() >= 2 {
                out.push(path.clone());
            } else if !path.contains(&u) {
                path.push(u);
                extend(nodes, root, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for s in (0..nodes.len()).filter(|&s| s != root) {
        extend(nodes, root, &mut vec![s], &mut out);
    }
    out
}
