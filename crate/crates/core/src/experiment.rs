//! Run harness shared by the CLI sweeps, the acceptance suite and the
//! benches: run to legitimacy (or to rest) while auditing loop-freedom at
//! every recorded configuration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_observed, Configuration, Daemon, DaemonKind, EngineError, ExecutionTrace, RunOptions};
use crate::generate;
use crate::graph::{DynamicGraph, EventKind, NodeId, TopologyEvent, Weight};
use crate::protocol::Guards;
use crate::verify::{loop_free, LegitimacyCheck, Verdict};

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// At the first legitimate configuration once every event is in.
    Legitimate,
    /// Only when no node is privileged (or the budget is spent).
    Terminal,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub trace: ExecutionTrace,
    /// Loop-freedom audit over every configuration the engine produced,
    /// post-event ones included. Named `loop_free_all_steps` when the start
    /// is loop-free; otherwise `loop_free_after_entry`, checked from the
    /// first loop-free configuration on. The witness names the offending
    /// configuration by its position in the observed sequence.
    pub loop_free: Verdict,
    /// Legitimacy of the final configuration.
    pub legitimate: Verdict,
}

impl Execution {
    pub fn rounds(&self) -> u64 {
        self.trace.rounds_to_end()
    }

    pub fn steps(&self) -> usize {
        self.trace.step_count()
    }

    /// Final levels against the BFS oracle.
    pub fn levels_exact(&self) -> bool {
        let c = &self.trace.final_config;
        let dist = crate::verify::bfs_oracle(c.graph());
        c.states().all(|(v, s)| dist.get(&v) == Some(&s.level))
    }
}

pub fn execute(
    c0: &Configuration,
    daemon: Daemon,
    events: &[TopologyEvent],
    stop: Stop,
    opts: RunOptions,
) -> Result<Execution, EngineError> {
    let mut check = LegitimacyCheck::new();
    let mut seen = 0u64;
    let mut entered = false;
    let mut first_loop: Option<String> = None;
    let trace = run_observed(
        c0,
        daemon,
        events,
        |c| stop == Stop::Legitimate && check.holds(c),
        opts,
        |c| {
            if first_loop.is_none() {
                match loop_free(c).witness {
                    None => entered = true,
                    Some(w) if entered => first_loop = Some(format!("{w} at configuration {seen}")),
                    Some(_) => {}
                }
            }
            seen += 1;
        },
    )?;
    let name = if loop_free(c0).holds { "loop_free_all_steps" } else { "loop_free_after_entry" };
    let legitimate = crate::verify::legitimate(&trace.final_config);
    Ok(Execution {
        trace,
        loop_free: Verdict::from_witness(name, first_loop),
        legitimate,
    })
}

/// Outcome of one sweep instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub instance: Instance,
    pub steps: usize,
    pub rounds: u64,
    /// Topology events injected after the first legitimacy.
    pub events: usize,
    pub legitimate: bool,
    pub levels_exact: bool,
    pub loop_free: Verdict,
}

/// Runs `inst` from its random configuration to legitimacy; then, when
/// `events > 0`, injects that many random topology events `n` steps apart
/// and runs back to legitimacy. Steps, rounds and the loop-freedom audit
/// cover the phase that ends the run: the static one without events, the
/// dynamic one (which starts legitimate) with them. `None` for an unknown
/// daemon name.
pub fn sweep_run(inst: Instance, daemon: &str, guards: Guards, events: usize) -> Option<SweepRow> {
    let (n, seed) = (inst.n, inst.daemon_seed());
    let c0 = inst.configuration(guards);
    let opts = sweep_options(n);
    let run = |c: &Configuration, ev: &[TopologyEvent]| {
        execute(c, sweep_daemon(daemon, n, seed)?, ev, Stop::Legitimate, opts).ok()
    };
    let first = run(&c0, &[])?;
    let (last, injected) = if events == 0 || !first.legitimate.holds {
        (first, 0)
    } else {
        let schedule = random_events(first.trace.final_config.graph(), events, 0, n as u64, seed ^ 0xe7e7);
        let count = schedule.len();
        (run(&first.trace.final_config, &schedule)?, count)
    };
    Some(SweepRow {
        instance: inst,
        steps: last.steps(),
        rounds: last.rounds(),
        events: injected,
        legitimate: last.legitimate.holds,
        levels_exact: last.levels_exact(),
        loop_free: last.loop_free,
    })
}

/// Extra-edge probability used for sweep graphs: about three extra edges
/// per node, so large graphs stay sparse.
pub fn sweep_density(n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (3.0 / n as f64).min(0.5)
    }
}

pub fn sweep_graph(n: usize, seed: u64) -> DynamicGraph {
    generate::random_connected(n, sweep_density(n), 9, seed)
}

/// Daemon for sweep instance `seed`; the adversary's fairness bound is `n`.
pub fn sweep_daemon(kind: &str, n: usize, seed: u64) -> Option<Daemon> {
    Some(match kind {
        "central" => Daemon::central(),
        "synchronous" => Daemon::synchronous(),
        "adversarial" => Daemon::new(DaemonKind::Adversarial {
            seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ n as u64,
            fairness_bound: n.max(1) as u32,
        }),
        _ => return None,
    })
}

/// Rounds-per-`n²` constant of the convergence bound. Calibrated on the
/// n = 5 sweep (worst run: 16 rounds, 0.64·n²) and rounded up.
pub const ROUND_CONSTANT: f64 = 1.0;

/// Round budget for a sweep run: twice the `C·n²` bound plus slack, so a
/// run that exhausts it has clearly failed to converge.
pub fn sweep_round_budget(n: usize) -> u64 {
    (2.0 * ROUND_CONSTANT * (n * n) as f64) as u64 + 100
}

/// `max_rounds ≤ C·n²`.
pub fn within_round_bound(n: usize, rounds: u64, c: f64) -> bool {
    rounds as f64 <= c * (n * n) as f64
}

/// Budget for a sweep run: the round budget, with a step cap far beyond
/// what it allows under any of the sweep daemons.
pub fn sweep_options(n: usize) -> RunOptions {
    let rounds = sweep_round_budget(n);
    RunOptions::new(rounds * (n as u64 + 1) * 4).with_max_rounds(rounds)
}

/// Identifies one random instance: graph `graph_seed`, initial
/// configuration `config_seed` on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instance {
    pub n: usize,
    pub graph_seed: u64,
    pub config_seed: u64,
}

impl Instance {
    pub fn new(n: usize, graph_seed: u64, config_seed: u64) -> Self {
        Instance { n, graph_seed, config_seed }
    }

    pub fn configuration(&self, guards: Guards) -> Configuration {
        let seed = self.graph_seed.wrapping_mul(1_000_003) ^ self.config_seed ^ 0x5eed;
        Configuration::random(sweep_graph(self.n, self.graph_seed), seed).with_guards(guards)
    }

    fn daemon_seed(&self) -> u64 {
        self.graph_seed.wrapping_mul(31).wrapping_add(self.config_seed)
    }
}

/// `count` topology events that apply in sequence to `g` without
/// disconnecting it, scheduled `spacing` steps apart from step `start`.
/// Recovered nodes get fresh ids.
pub fn random_events(g: &DynamicGraph, count: usize, start: u64, spacing: u64, seed: u64) -> Vec<TopologyEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = g.clone();
    let mut crashed: Vec<NodeId> = Vec::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 200 {
        attempts += 1;
        let at = start + spacing * out.len() as u64;
        let nodes: Vec<NodeId> = g.nodes().filter(|&v| v != g.root()).collect();
        let edges: Vec<(NodeId, NodeId)> = g.edges().map(|(u, v, _)| (u, v)).collect();
        let weight = Weight::new(rng.gen_range(1..=9) as f64).expect("positive");
        let kind = match rng.gen_range(0..4) {
            0 => {
                let &(u, v) = edges.choose(&mut rng).expect("connected graph with n >= 2");
                EventKind::CrashEdge { u, v }
            }
            1 => match nodes.choose(&mut rng) {
                Some(&u) => EventKind::CrashNode { u },
                None => continue,
            },
            2 => {
                let (Some(&u), Some(&v)) = (nodes.choose(&mut rng), g.nodes().collect::<Vec<_>>().choose(&mut rng)) else {
                    continue;
                };
                EventKind::RecoverEdge { u, v, weight }
            }
            _ => {
                let u = crashed.pop().unwrap_or(NodeId(g.capacity() as u32));
                let peers: Vec<NodeId> = g.nodes().collect();
                let k = rng.gen_range(1..=peers.len().min(3));
                let links = peers
                    .choose_multiple(&mut rng, k)
                    .map(|&p| (p, Weight::new(rng.gen_range(1..=9) as f64).expect("positive")))
                    .collect();
                EventKind::RecoverNode { u, links }
            }
        };
        let e = TopologyEvent::new(at, kind);
        if let Ok(next) = g.apply_event(&e) {
            if let EventKind::CrashNode { u } = e.kind {
                crashed.push(u);
            }
            g = next;
            out.push(e);
        }
    }
    out
}

/// Crash events that apply to `g`: every non-disconnecting edge crash and
/// non-root node crash.
pub fn crash_events(g: &DynamicGraph) -> Vec<TopologyEvent> {
    let mut out: Vec<TopologyEvent> = g
        .edges()
        .map(|(u, v, _)| TopologyEvent::new(0, EventKind::CrashEdge { u, v }))
        .collect();
    out.extend(
        g.nodes()
            .filter(|&u| u != g.root())
            .map(|u| TopologyEvent::new(0, EventKind::CrashNode { u })),
    );
    out.retain(|e| g.apply_event(e).is_ok());
    out
}

/// A node leaving another node's subtree by a parent change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtreeExit {
    pub step: u64,
    pub node: NodeId,
    pub rule: crate::protocol::Rule,
    pub new_parent: NodeId,
}

/// Every parent change by which a node of `top`'s subtree (top excluded)
/// attaches outside it. Needs a trace recorded with snapshots.
pub fn subtree_exits(trace: &ExecutionTrace, top: NodeId) -> Vec<SubtreeExit> {
    let Some(snaps) = trace.snapshots.as_ref() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (step, after) in trace.steps.iter().zip(snaps) {
        let mut before = after.clone();
        for f in &step.firings {
            before = before.with_state(f.node, f.before);
        }
        let below = descendants(&before, top);
        for f in step.firings.iter().filter(|f| f.before.parent != f.after.parent) {
            let Some(p) = after.parent_of(f.node) else { continue };
            if below.contains(&f.node) && p != top && !below.contains(&p) {
                out.push(SubtreeExit { step: step.index, node: f.node, rule: f.rule, new_parent: p });
            }
        }
    }
    out
}

fn descendants(c: &Configuration, top: NodeId) -> std::collections::BTreeSet<NodeId> {
    let root = c.graph().root();
    let mut out = std::collections::BTreeSet::new();
    let mut stack = vec![top];
    while let Some(x) = stack.pop() {
        for w in c.nodes().filter(|&w| w != root && c.parent_of(w) == Some(x)) {
            if w != top && out.insert(w) {
                stack.push(w);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{bfs_oracle, canonical_legitimate};

    #[test]
    fn sweep_instances_are_reproducible() {
        let a = Instance::new(12, 5, 0).configuration(Guards::Literal);
        let b = Instance::new(12, 5, 0).configuration(Guards::Literal);
        assert_eq!(a, b);
        assert!(a.graph().is_connected());
        let c = Instance::new(12, 5, 1).configuration(Guards::Literal);
        assert_eq!(a.graph(), c.graph());
        assert_ne!(a, c);
        assert_ne!(a.graph(), Instance::new(12, 6, 0).configuration(Guards::Literal).graph());
    }

    #[test]
    fn events_apply_in_sequence() {
        for seed in 0..30 {
            let g = sweep_graph(8, seed);
            let events = random_events(&g, 3, 10, 4, seed);
            assert!(!events.is_empty());
            let mut h = g.clone();
            for (i, e) in events.iter().enumerate() {
                assert_eq!(e.at_step, 10 + 4 * i as u64);
                h = h.apply_event(e).unwrap();
                assert!(h.is_connected());
            }
        }
    }

    #[test]
    fn crash_events_keep_the_graph_connected() {
        let g = generate::cycle(5);
        // every edge of a cycle can go; every non-root node too
        assert_eq!(crash_events(&g).len(), 5 + 4);
        let p = generate::path(4);
        // every edge is a bridge; only the far end can crash
        assert_eq!(
            crash_events(&p),
            vec![TopologyEvent::new(0, EventKind::CrashNode { u: NodeId(3) })]
        );
    }

    #[test]
    fn execution_reaches_the_bfs_tree() {
        for seed in 0..10 {
            let c0 = Instance::new(10, seed, seed).configuration(Guards::Repaired);
            let x = execute(&c0, Daemon::adversarial(seed, 10), &[], Stop::Legitimate, sweep_options(10)).unwrap();
            assert!(x.legitimate.holds, "seed {seed}");
            let dist = bfs_oracle(x.trace.final_config.graph());
            for (v, s) in x.trace.final_config.states() {
                assert_eq!(s.level, dist[&v]);
            }
        }
    }

    #[test]
    fn exits_from_a_crashed_subtree() {
        // r=0; 0-1, 1-2, 2-3, 0-4, 4-3: node 3 hangs under 2 and can move to 4
        let g = DynamicGraph::from_edges(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 4, 1.0), (4, 3, 1.0)]).unwrap();
        let mut c = canonical_legitimate(&g);
        let p2 = g.port_to(NodeId(3), NodeId(2)).unwrap();
        c = c.with_state(NodeId(3), crate::protocol::NodeState::new(Some(p2), crate::protocol::Status::N, 3, 3));
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(2) });
        let t = crate::engine::run(&c, Daemon::central(), &[e], |_| false, RunOptions::new(1000).with_snapshots()).unwrap();
        assert!(crate::verify::legitimate(&t.final_config).holds);
        let exits = subtree_exits(&t, NodeId(2));
        assert!(exits.iter().any(|x| x.node == NodeId(3) && x.new_parent == NodeId(4)), "{exits:?}");
        assert!(subtree_exits(&t, NodeId(4)).is_empty());
    }

    #[test]
    fn sweep_rows_with_events() {
        for seed in 0..5 {
            let row = sweep_run(Instance::new(9, seed, 0), "adversarial", Guards::Repaired, 2).unwrap();
            assert!(row.events > 0);
            assert!(row.legitimate && row.levels_exact, "{row:?}");
            assert_eq!(row.loop_free.name, "loop_free_all_steps");
            assert!(row.loop_free.holds, "{row:?}");
        }
        assert!(sweep_run(Instance::new(9, 0, 0), "sideways", Guards::Literal, 0).is_none());
    }

    #[test]
    fn legitimate_start_stops_at_once() {
        let c = canonical_legitimate(&sweep_graph(9, 1));
        let x = execute(&c, Daemon::central(), &[], Stop::Legitimate, RunOptions::new(100)).unwrap();
        assert_eq!(x.steps(), 0);
        assert!(x.loop_free.holds);
    }
}
