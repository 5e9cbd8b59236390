//! `loopfree`: run, check, model-check, compose and sweep scenarios.
//!
//! Every subcommand prints `VERDICT <name> <holds>` lines and exits with 0
//! iff all of them hold, 1 if one fails, 2 on usage or input errors.

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use loopfree::composition::{run_composed, Composed, Slave, SlaveKind};
use loopfree::engine::RunOptions;
use loopfree::experiment::{self, execute, subtree_exits, Instance, Stop};
use loopfree::generate;
use loopfree::scenario::{bundled, Scenario};
use loopfree::verify::{
    legitimate, legitimate_strict, model_check_explicit, model_check_explicit_extended, model_check_extended,
    model_check_with, passage_holds,
    passage_strict, widest_path_oracle, Verdict,
};
use loopfree::{Guards, Rule};

#[derive(Parser)]
#[command(name = "loopfree", version, about = "Loop-free super-stabilizing BFS: simulator and checkers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and print its trace and verdicts.
    Run {
        /// Scenario file, or `@fig1` / `@legitimate` for a bundled one.
        scenario: String,
        #[arg(long, value_enum, default_value_t = TraceLevel::Summary)]
        trace_level: TraceLevel,
        /// Override the scenario's guard variant.
        #[arg(long)]
        guards: Option<Guards>,
    },
    /// Execute a scenario and print only its verdicts.
    Check {
        scenario: String,
        #[arg(long)]
        guards: Option<Guards>,
    },
    /// Exhaustive small-scope check of every connected graph on `n` nodes,
    /// or of one scenario's graph.
    Modelcheck {
        /// Number of nodes (node 0 is the root).
        #[arg(long, required_unless_present = "graph", conflicts_with = "graph")]
        n: Option<usize>,
        /// Scenario whose graph is checked instead.
        #[arg(long)]
        graph: Option<String>,
        /// Level cap; defaults to min(8, 2n).
        #[arg(long)]
        cap: Option<u32>,
        #[arg(long, default_value_t = Guards::Literal)]
        guards: Guards,
        /// Use the explicit-state checker (at most 4 nodes, small caps).
        #[arg(long)]
        explicit: bool,
        /// Let counters grow one bit past the cap instead of dropping such moves.
        #[arg(long)]
        extended: bool,
    },
    /// Run the BFS master on the output of a slave protocol.
    Compose {
        scenario: String,
        #[arg(long)]
        slave: SlaveKind,
        /// Corrupt the slave's registers with this seed before running.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        guards: Option<Guards>,
    },
    /// Convergence-round statistics over random instances.
    Sweep {
        /// Nodes per graph.
        #[arg(long)]
        n: usize,
        /// Number of instances; instance `s` uses graph seed `s`.
        #[arg(long)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = DaemonArg::Central)]
        daemon: DaemonArg,
        #[arg(long, default_value_t = Guards::Literal)]
        guards: Guards,
        /// Random topology events injected after the first legitimacy.
        #[arg(long, default_value_t = 0)]
        events: usize,
        /// Constant C of the round bound C·n².
        #[arg(long, default_value_t = experiment::ROUND_CONSTANT)]
        c: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceLevel {
    Full,
    Summary,
}

#[derive(Clone, Copy, ValueEnum)]
enum DaemonArg {
    Central,
    Synchronous,
    Adversarial,
}

impl DaemonArg {
    fn name(self) -> &'static str {
        match self {
            DaemonArg::Central => "central",
            DaemonArg::Synchronous => "synchronous",
            DaemonArg::Adversarial => "adversarial",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            trace_level,
            guards,
        } => run(&scenario, guards, Some(trace_level)),
        Command::Check { scenario, guards } => run(&scenario, guards, None),
        Command::Modelcheck {
            n,
            graph,
            cap,
            guards,
            explicit,
            extended,
        } => modelcheck(n, graph.as_deref(), cap, guards, explicit, extended),
        Command::Compose {
            scenario,
            slave,
            seed,
            guards,
        } => compose(&scenario, slave, seed, guards),
        Command::Sweep {
            n,
            seeds,
            daemon,
            guards,
            events,
            c,
        } => sweep(n, seeds, daemon, guards, events, c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(arg: &str) -> Result<Scenario> {
    let (text, origin) = match arg.strip_prefix('@') {
        Some("fig1") => (bundled::FIG1.to_string(), arg.to_string()),
        Some("legitimate") => (bundled::LEGITIMATE.to_string(), arg.to_string()),
        Some(other) => bail!("no bundled scenario {other:?}; try @fig1 or @legitimate"),
        None => (
            std::fs::read_to_string(Path::new(arg)).with_context(|| format!("reading {arg}"))?,
            arg.to_string(),
        ),
    };
    Scenario::parse(&text).with_context(|| origin)
}

fn report(out: &mut String, verdicts: &[Verdict]) -> bool {
    for v in verdicts {
        let _ = writeln!(out, "{v}");
    }
    verdicts.iter().all(|v| v.holds)
}

fn run(path: &str, guards: Option<Guards>, trace: Option<TraceLevel>) -> Result<bool> {
    let mut s = load(path)?;
    if let Some(g) = guards {
        s.guards = g;
    }
    let c0 = s.configuration();
    let opts = RunOptions::new(s.budget).with_snapshots();
    let x = execute(&c0, s.daemon(), &s.events, Stop::Terminal, opts)?;
    let t = &x.trace;
    let name = |v| s.name(v);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {path} nodes={} edges={} daemon={} guards={} events={}",
        c0.graph().node_count(),
        c0.graph().edge_count(),
        s.daemon,
        s.guards,
        s.events.len()
    );
    if let Some(level) = trace {
        out.push_str(&t.render(&name, matches!(level, TraceLevel::Full)));
        let mut dynamic = Vec::new();
        for step in &t.steps {
            for f in step.firings.iter().filter(|f| f.rule == Rule::Dynamic) {
                let _ = writeln!(
                    out,
                    "dynamic {} step {} new_level {}",
                    name(f.node),
                    step.index,
                    f.after.new_level
                );
                dynamic.push(f.node);
            }
        }
        dynamic.sort();
        dynamic.dedup();
        for top in dynamic {
            for e in subtree_exits(t, top) {
                let _ = writeln!(
                    out,
                    "leaves_subtree {} of {} step {} by {} to {}",
                    name(e.node),
                    name(top),
                    e.step,
                    e.rule,
                    name(e.new_parent)
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "outcome {} steps {} rounds {}",
        t.outcome,
        x.steps(),
        x.rounds()
    );

    let mut verdicts = vec![x.loop_free.clone(), x.legitimate.clone()];
    if let [e] = s.events.as_slice() {
        if e.in_crash_class() && legitimate(&c0).holds {
            verdicts.push(passage_holds(t, e)?);
            if c0.is_terminal() {
                verdicts.push(passage_strict(t, e)?);
            }
        }
    }
    let ok = report(&mut out, &verdicts);
    let strict = legitimate_strict(&t.final_config);
    let _ = writeln!(out, "info legitimate_strict {}", strict.holds);
    print!("{out}");
    Ok(ok)
}

fn modelcheck(
    n: Option<usize>,
    graph: Option<&str>,
    cap: Option<u32>,
    guards: Guards,
    explicit: bool,
    extended: bool,
) -> Result<bool> {
    let graphs = match (n, graph) {
        (Some(n), _) => generate::connected_graphs(n),
        (None, Some(path)) => vec![load(path)?.graph()],
        (None, None) => bail!("give --n or --graph"),
    };
    let reports: Vec<_> = graphs
        .par_iter()
        .map(|g| {
            let cap = cap.unwrap_or_else(|| (2 * g.node_count() as u32).min(8));
            match (explicit, extended) {
                (false, false) => model_check_with(g, cap, guards),
                (false, true) => model_check_extended(g, cap, guards),
                (true, false) => model_check_explicit(g, cap, guards),
                (true, true) => model_check_explicit_extended(g, cap, guards),
            }
        })
        .collect::<Result<_, _>>()?;
    let mut out = String::new();
    for r in &reports {
        let _ = write!(out, "{r}");
    }
    let passed = reports.iter().filter(|r| r.holds()).count();
    let _ = writeln!(
        out,
        "SUMMARY graphs={} holds={} failed={}",
        reports.len(),
        passed,
        reports.len() - passed
    );
    print!("{out}");
    Ok(passed == reports.len())
}

fn compose(path: &str, kind: SlaveKind, seed: Option<u64>, guards: Option<Guards>) -> Result<bool> {
    let mut s = load(path)?;
    if let Some(g) = guards {
        s.guards = g;
    }
    if !s.events.is_empty() {
        eprintln!("note: compose runs on the static graph; {} event(s) ignored", s.events.len());
    }
    let master = s.configuration();
    let g = master.graph().clone();
    let slave = match seed {
        Some(seed) => Slave::random(kind, &g, seed)?,
        None => Slave::new(kind, &g)?,
    };
    let t = run_composed(&Composed::new(master, slave), s.daemon(), RunOptions::new(s.budget));
    let end = &t.final_state;
    let output = end.output();

    let mut out = String::new();
    let _ = writeln!(
        out,
        "compose {path} slave={kind} nodes={} daemon={} guards={}",
        g.node_count(),
        s.daemon,
        s.guards
    );
    let _ = writeln!(out, "outcome {} steps {} rounds {}", t.outcome, t.steps, t.rounds);
    let mut tree: Vec<String> = output
        .iter()
        .map(|&(a, b)| format!("{}-{}", s.name(a), s.name(b)))
        .collect();
    tree.sort();
    let _ = writeln!(out, "tree {}", tree.join(" "));
    let mut verdicts = vec![
        kind.check(&g, &output),
        t.loop_free.clone(),
        legitimate(&end.view()).renamed("composed_legitimate"),
        Verdict::from_witness(
            "master_tree_is_output",
            (end.master_tree() != output).then(|| "master parent edges differ from S_A".to_string()),
        ),
    ];
    if kind == SlaveKind::DistributedMaxflow {
        let oracle = widest_path_oracle(&g);
        let bad = g
            .nodes()
            .find(|v| end.slave.flow(*v).map(|f| f.flow) != Some(oracle[v]))
            .map(|v| format!("{} flow differs from the widest-path value", s.name(v)));
        verdicts.push(Verdict::from_witness("flows_match_oracle", bad));
    }
    let ok = report(&mut out, &verdicts);
    print!("{out}");
    Ok(ok)
}

fn sweep(n: usize, seeds: u64, daemon: DaemonArg, guards: Guards, events: usize, c: f64) -> Result<bool> {
    if n < 2 || seeds == 0 {
        bail!("need n >= 2 and at least one seed");
    }
    let rows: Vec<_> = (0..seeds)
        .into_par_iter()
        .map(|seed| experiment::sweep_run(Instance::new(n, seed, 0), daemon.name(), guards, events))
        .collect::<Option<_>>()
        .context("unknown daemon")?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "sweep n={n} seeds={seeds} daemon={} guards={guards} events={events}",
        daemon.name()
    );
    let _ = writeln!(out, "{:>6} {:>8} {:>7} {:>6} {:>10} {:>9} {:>9}", "seed", "steps", "rounds", "events", "legitimate", "bfs_exact", "loop_free");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:>6} {:>8} {:>7} {:>6} {:>10} {:>9} {:>9}",
            r.instance.graph_seed,
            r.steps,
            r.rounds,
            r.events,
            r.legitimate,
            r.levels_exact,
            if r.loop_free.name == "loop_free_all_steps" { r.loop_free.holds.to_string() } else { "-".into() }
        );
    }
    let max = rows.iter().map(|r| r.rounds).max().unwrap_or(0);
    let mean = rows.iter().map(|r| r.rounds as f64).sum::<f64>() / rows.len() as f64;
    let bound = c * (n * n) as f64;
    let _ = writeln!(out, "max_rounds {max} mean_rounds {mean:.2} bound {bound:.0} (C={c})");
    let starts = rows.iter().filter(|r| r.loop_free.name == "loop_free_all_steps");
    let broken = starts.clone().filter(|r| !r.loop_free.holds).count();
    let _ = writeln!(out, "info loop_free_starts {} violations {}", starts.count(), broken);

    let unconverged = rows.iter().find(|r| !(r.legitimate && r.levels_exact));
    let verdicts = [
        Verdict::from_witness(
            "converged",
            unconverged.map(|r| format!("seed {} after {} rounds", r.instance.graph_seed, r.rounds)),
        ),
        Verdict::from_witness(
            "rounds_within_bound",
            (!experiment::within_round_bound(n, max, c)).then(|| format!("max_rounds {max} > {bound:.0}")),
        ),
    ];
    let ok = report(&mut out, &verdicts);
    print!("{out}");
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bundled_names_resolve() {
        assert!(load("@fig1").is_ok());
        assert!(load("@legitimate").is_ok());
        assert!(load("@nope").is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = load_text("node r root\nedge r x 1\n").unwrap_err();
        assert!(format!("{e:#}").contains("line 2"), "{e:#}");
    }

    fn load_text(text: &str) -> Result<Scenario> {
        Ok(Scenario::parse(text)?)
    }

    #[test]
    fn verdict_report_is_conjunctive() {
        let mut out = String::new();
        assert!(report(&mut out, &[Verdict::pass("a")]));
        assert!(!report(&mut out, &[Verdict::pass("a"), Verdict::fail("b", "x")]));
        assert!(out.contains("VERDICT b false witness=x"));
    }
}
