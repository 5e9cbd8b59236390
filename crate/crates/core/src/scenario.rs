//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! node r root
//! node a
//! edge r a 1
//! initial legitimate            # or: random <seed> | explicit
//! init a parent=1 status=N level=1 newlevel=1
//! event 0 crash_edge r a        # also crash_node, recov_edge, recov_node
//! daemon central                # synchronous | adversarial <seed> <bound>
//! guards literal                # or: repaired
//! budget 10000
//! ```
//!
//! The root becomes `n0`; other nodes are numbered in declaration order.
//! Ports are labelled in edge order. `init` lines imply `initial explicit`.
//! `recov_node x a 2 b 3` may name a fresh node, which gets the next id.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::engine::{Configuration, Daemon, DaemonKind};
use crate::graph::{DynamicGraph, EventKind, NodeId, Port, TopologyEvent, Weight};
use crate::protocol::{Guards, NodeState, Status};
use crate::verify::canonical_legitimate;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Explicit(BTreeMap<NodeId, NodeState>),
    Random(u64),
    Legitimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Node names, indexed by id; `names[0]` is the root.
    pub names: Vec<String>,
    /// Nodes declared in the topology; later names only appear through
    /// `recov_node`.
    pub declared: usize,
    pub edges: Vec<(NodeId, NodeId, f64)>,
    pub initial: InitialSpec,
    pub events: Vec<TopologyEvent>,
    pub daemon: DaemonKind,
    pub guards: Guards,
    pub budget: u64,
}

pub const DEFAULT_BUDGET: u64 = 100_000;

/// Scenario files shipped with the crate.
pub mod bundled {
    /// A node crash that forces its orphaned child through two rounds of
    /// `R_Dynamic` propagation before it can reattach.
    pub const FIG1: &str = include_str!("../scenarios/fig1.scn");
    /// A weighted graph already in its terminal BFS configuration.
    pub const LEGITIMATE: &str = include_str!("../scenarios/legitimate.scn");
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Parser::default().parse(text)
    }

    pub fn name(&self, v: NodeId) -> String {
        self.names.get(v.index()).cloned().unwrap_or_else(|| v.to_string())
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(|i| NodeId(i as u32))
    }

    pub fn graph(&self) -> DynamicGraph {
        let mut g = DynamicGraph::from_edges(self.declared, &[]).expect("no edges");
        for &(u, v, w) in &self.edges {
            g.add_edge(u, v, Weight::new(w).expect("validated while parsing"))
                .expect("validated while parsing");
        }
        g
    }

    pub fn configuration(&self) -> Configuration {
        let g = self.graph();
        let c = match &self.initial {
            InitialSpec::Explicit(states) => Configuration::from_fn(g, |v| states[&v]),
            InitialSpec::Random(seed) => Configuration::random(g, *seed),
            InitialSpec::Legitimate => canonical_legitimate(&g),
        };
        c.with_guards(self.guards)
    }

    pub fn daemon(&self) -> Daemon {
        Daemon::new(self.daemon)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |v: NodeId| self.name(v);
        for (i, n) in self.names[..self.declared].iter().enumerate() {
            if i == 0 {
                writeln!(f, "node {n} root")?;
            } else {
                writeln!(f, "node {n}")?;
            }
        }
        for &(u, v, w) in &self.edges {
            writeln!(f, "edge {} {} {w}", name(u), name(v))?;
        }
        match &self.initial {
            InitialSpec::Legitimate => writeln!(f, "initial legitimate")?,
            InitialSpec::Random(seed) => writeln!(f, "initial random {seed}")?,
            InitialSpec::Explicit(states) => {
                writeln!(f, "initial explicit")?;
                for (v, s) in states {
                    let parent = s.parent.map_or("none".to_string(), |p| p.0.to_string());
                    writeln!(
                        f,
                        "init {} parent={parent} status={} level={} newlevel={}",
                        name(*v),
                        s.status,
                        s.level,
                        s.new_level
                    )?;
                }
            }
        }
        for e in &self.events {
            let mut line = format!("event {} ", e.at_step);
            match &e.kind {
                EventKind::CrashEdge { u, v } => write!(line, "crash_edge {} {}", name(*u), name(*v))?,
                EventKind::CrashNode { u } => write!(line, "crash_node {}", name(*u))?,
                EventKind::RecoverEdge { u, v, weight } => {
                    write!(line, "recov_edge {} {} {}", name(*u), name(*v), weight.get())?
                }
                EventKind::RecoverNode { u, links } => {
                    write!(line, "recov_node {}", name(*u))?;
                    for (peer, w) in links {
                        write!(line, " {} {}", name(*peer), w.get())?;
                    }
                }
            }
            writeln!(f, "{line}")?;
        }
        match self.daemon {
            DaemonKind::Synchronous => writeln!(f, "daemon synchronous")?,
            DaemonKind::Central => writeln!(f, "daemon central")?,
            DaemonKind::Adversarial {
                seed,
                fairness_bound,
            } => writeln!(f, "daemon adversarial {seed} {fairness_bound}")?,
        }
        writeln!(f, "guards {}", self.guards)?;
        writeln!(f, "budget {}", self.budget)
    }
}

#[derive(Default)]
struct Parser {
    root: Option<String>,
    others: Vec<String>,
    edge_lines: Vec<(usize, String, String, f64)>,
    initial: Option<(usize, InitialSpec)>,
    inits: Vec<(usize, String, NodeState)>,
    event_lines: Vec<(usize, u64, Vec<String>)>,
    daemon: Option<DaemonKind>,
    guards: Option<Guards>,
    budget: Option<u64>,
}

fn number<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, ScenarioError> {
    s.parse()
        .map_err(|_| ScenarioError { line, message: format!("bad {what} {s:?}") })
}

fn weight(line: usize, s: &str) -> Result<f64, ScenarioError> {
    let w: f64 = number(line, "weight", s)?;
    Weight::new(w).map_err(|e| ScenarioError { line, message: e.to_string() })?;
    Ok(w)
}

impl Parser {
    fn parse(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            self.directive(line, &words)?;
        }
        self.finish()
    }

    fn directive(&mut self, line: usize, words: &[&str]) -> Result<(), ScenarioError> {
        match words {
            ["node", name] => self.declare(line, name, false),
            ["node", name, "root"] => self.declare(line, name, true),
            ["edge", u, v, w] => {
                let w = weight(line, w)?;
                self.edge_lines.push((line, u.to_string(), v.to_string(), w));
                Ok(())
            }
            ["initial", rest @ ..] => {
                let spec = match rest {
                    ["legitimate"] => InitialSpec::Legitimate,
                    ["explicit"] => InitialSpec::Explicit(BTreeMap::new()),
                    ["random", seed] => InitialSpec::Random(number(line, "seed", seed)?),
                    _ => return err(line, "expected `initial legitimate|explicit|random <seed>`"),
                };
                if self.initial.is_some() {
                    return err(line, "initial state given twice");
                }
                self.initial = Some((line, spec));
                Ok(())
            }
            ["init", name, fields @ ..] => {
                let s = self.state(line, fields)?;
                self.inits.push((line, name.to_string(), s));
                Ok(())
            }
            ["event", step, rest @ ..] => {
                let step = number(line, "step", step)?;
                self.event_lines
                    .push((line, step, rest.iter().map(|s| s.to_string()).collect()));
                Ok(())
            }
            ["daemon", rest @ ..] => {
                let d = match rest {
                    ["central"] => DaemonKind::Central,
                    ["synchronous"] => DaemonKind::Synchronous,
                    ["adversarial", seed, bound] => {
                        let fairness_bound: u32 = number(line, "fairness bound", bound)?;
                        if fairness_bound == 0 {
                            return err(line, "fairness bound must be positive");
                        }
                        DaemonKind::Adversarial {
                            seed: number(line, "seed", seed)?,
                            fairness_bound,
                        }
                    }
                    _ => return err(line, "expected `daemon central|synchronous|adversarial <seed> <bound>`"),
                };
                self.daemon = Some(d);
                Ok(())
            }
            ["guards", g] => {
                self.guards = Some(g.parse().map_err(|e: String| ScenarioError { line, message: e })?);
                Ok(())
            }
            ["budget", n] => {
                self.budget = Some(number(line, "budget", n)?);
                Ok(())
            }
            _ => err(line, format!("unrecognised directive {:?}", words.join(" "))),
        }
    }

    fn declare(&mut self, line: usize, name: &str, root: bool) -> Result<(), ScenarioError> {
        if self.root.as_deref() == Some(name) || self.others.iter().any(|n| n == name) {
            return err(line, format!("node {name} declared twice"));
        }
        if root {
            if self.root.is_some() {
                return err(line, "second root");
            }
            self.root = Some(name.to_string());
        } else {
            self.others.push(name.to_string());
        }
        Ok(())
    }

    fn state(&self, line: usize, fields: &[&str]) -> Result<NodeState, ScenarioError> {
        let mut map = BTreeMap::new();
        for f in fields {
            let Some((k, v)) = f.split_once('=') else {
                return err(line, format!("expected key=value, got {f:?}"));
            };
            if map.insert(k, v).is_some() {
                return err(line, format!("{k} given twice"));
            }
        }
        let get = |k: &str| map.get(k).copied().ok_or(ScenarioError { line, message: format!("missing {k}") });
        let parent = match get("parent")? {
            "none" => None,
            p => Some(Port(number(line, "port", p)?)),
        };
        let status = match get("status")? {
            "N" => Status::N,
            "P" => Status::P,
            s => return err(line, format!("bad status {s:?}")),
        };
        if map.len() != 4 {
            return err(line, "expected exactly parent, status, level and newlevel");
        }
        Ok(NodeState::new(
            parent,
            status,
            number(line, "level", get("level")?)?,
            number(line, "newlevel", get("newlevel")?)?,
        ))
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let Some(root) = self.root else {
            return err(0, "no root declared");
        };
        let mut names = vec![root];
        names.extend(self.others);
        let declared = names.len();
        let lookup = |names: &[String], line: usize, n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .map(|i| NodeId(i as u32))
                .ok_or(ScenarioError { line, message: format!("unknown node {n}") })
        };

        let mut g = DynamicGraph::from_edges(declared, &[]).expect("no edges");
        let mut edges = Vec::new();
        for (line, u, v, w) in &self.edge_lines {
            let (a, b) = (lookup(&names, *line, u)?, lookup(&names, *line, v)?);
            g.add_edge(a, b, Weight::new(*w).expect("checked"))
                .map_err(|e| ScenarioError { line: *line, message: e.to_string() })?;
            edges.push((a, b, *w));
        }

        let initial = match (self.initial, self.inits.is_empty()) {
            (Some((line, spec)), false) if !matches!(spec, InitialSpec::Explicit(_)) => {
                return err(line, "init lines need `initial explicit`")
            }
            (Some((_, spec)), true) if !matches!(spec, InitialSpec::Explicit(_)) => spec,
            (None, true) => InitialSpec::Legitimate,
            (spec, _) => {
                let fallback = spec.as_ref().map_or(0, |(l, _)| *l);
                let mut states = BTreeMap::new();
                for (line, name, s) in &self.inits {
                    let v = lookup(&names, *line, name)?;
                    if let Some(p) = s.parent {
                        if g.neighbor(v, p).is_none() {
                            return err(*line, format!("{name} has no port {p}"));
                        }
                    }
                    if states.insert(v, *s).is_some() {
                        return err(*line, format!("{name} initialised twice"));
                    }
                }
                if let Some(missing) = names.iter().take(declared).enumerate().find(|(i, _)| !states.contains_key(&NodeId(*i as u32))) {
                    return err(fallback, format!("no init line for {}", missing.1));
                }
                InitialSpec::Explicit(states)
            }
        };

        let mut events: Vec<TopologyEvent> = Vec::new();
        for (line, step, words) in &self.event_lines {
            let words: Vec<&str> = words.iter().map(String::as_str).collect();
            let kind = match words.as_slice() {
                ["crash_edge", u, v] => EventKind::CrashEdge {
                    u: lookup(&names, *line, u)?,
                    v: lookup(&names, *line, v)?,
                },
                ["crash_node", u] => EventKind::CrashNode { u: lookup(&names, *line, u)? },
                ["recov_edge", u, v, w] => EventKind::RecoverEdge {
                    u: lookup(&names, *line, u)?,
                    v: lookup(&names, *line, v)?,
                    weight: Weight::new(weight(*line, w)?).expect("checked"),
                },
                ["recov_node", u, rest @ ..] if !rest.is_empty() && rest.len() % 2 == 0 => {
                    let u = match lookup(&names, *line, u) {
                        Ok(id) => id,
                        Err(_) => {
                            names.push(u.to_string());
                            NodeId(names.len() as u32 - 1)
                        }
                    };
                    let mut links = Vec::new();
                    for pair in rest.chunks(2) {
                        let peer = lookup(&names, *line, pair[0])?;
                        links.push((peer, Weight::new(weight(*line, pair[1])?).expect("checked")));
                    }
                    EventKind::RecoverNode { u, links }
                }
                _ => return err(*line, format!("bad event {:?}", words.join(" "))),
            };
            if events.last().is_some_and(|e| e.at_step > *step) {
                return err(*line, "events must be listed in step order");
            }
            events.push(TopologyEvent::new(*step, kind));
        }

        Ok(Scenario {
            names,
            declared,
            edges,
            initial,
            events,
            daemon: self.daemon.unwrap_or(DaemonKind::Central),
            guards: self.guards.unwrap_or_default(),
            budget: self.budget.unwrap_or(DEFAULT_BUDGET),
        })
    }
}
