use std::collections::BTreeSet;

use super::{legitimate, Verdict, VerifyError};
use crate::engine::{Configuration, ExecutionTrace};
use crate::graph::{EventKind, NodeId, TopologyEvent};

/// Nodes hanging below the crashed edge or node in the tree of `c`. The
/// crashed node itself is not included; a non-tree edge detaches nothing.
pub fn detached_subtree(c: &Configuration, e: &TopologyEvent) -> BTreeSet<NodeId> {
    let top: Vec<NodeId> = match e.kind {
        EventKind::CrashEdge { u, v } => {
            if c.get(u).is_some() && c.parent_of(u) == Some(v) {
                vec![u]
            } else if c.get(v).is_some() && c.parent_of(v) == Some(u) {
                vec![v]
            } else {
                Vec::new()
            }
        }
        EventKind::CrashNode { u } => children_of(c, u),
        _ => Vec::new(),
    };
    let mut out = BTreeSet::new();
    let mut stack = top;
    while let Some(x) = stack.pop() {
        if out.insert(x) {
            stack.extend(children_of(c, x));
        }
    }
    out
}

fn children_of(c: &Configuration, x: NodeId) -> Vec<NodeId> {
    let root = c.graph().root();
    c.nodes()
        .filter(|&w| w != root && w != x && c.parent_of(w) == Some(x))
        .collect()
}

/// Checks the trace shape and returns the configuration the event hit and
/// the index of the first step after it.
fn event_point(t: &ExecutionTrace, e: &TopologyEvent) -> Result<(Configuration, u64), VerifyError> {
    if !e.in_crash_class() {
        return Err(VerifyError::PreconditionViolated(format!(
            "event {e} is not a crash"
        )));
    }
    match t.events.as_slice() {
        [only] if only.event == *e => {}
        _ => {
            return Err(VerifyError::PreconditionViolated(
                "the event must be the only one in the trace".into(),
            ))
        }
    }
    let at = t.events[0].before_step;
    let start = legitimate(&t.initial);
    if !start.holds {
        return Err(VerifyError::PreconditionViolated(format!(
            "trace does not start legitimate: {}",
            start.witness.unwrap_or_default()
        )));
    }
    let mut c = t.initial.clone();
    for s in t.steps.iter().take_while(|s| s.index < at) {
        for f in &s.firings {
            c = c.with_state(f.node, f.after);
        }
    }
    Ok((c, at))
}

/// Passage predicate: after the crash, only nodes of the detached subtree
/// change their parent.
pub fn passage_holds(t: &ExecutionTrace, e: &TopologyEvent) -> Result<Verdict, VerifyError> {
    let (c, at) = event_point(t, e)?;
    let inside = detached_subtree(&c, e);
    let bad = t.steps.iter().filter(|s| s.index >= at).find_map(|s| {
        s.firings
            .iter()
            .find(|f| f.before.parent != f.after.parent && !inside.contains(&f.node))
            .map(|f| format!("{} changed parent by {} at step {}", f.node, f.rule, s.index))
    });
    Ok(Verdict::from_witness("passage", bad))
}

/// Stronger diff check: after the crash, nodes outside the detached subtree
/// do not move at all. Needs a terminal legitimate start, in which every
/// parent is the smallest port one level up.
pub fn passage_strict(t: &ExecutionTrace, e: &TopologyEvent) -> Result<Verdict, VerifyError> {
    let (c, at) = event_point(t, e)?;
    if !t.initial.is_terminal() {
        return Err(VerifyError::PreconditionViolated(
            "strict passage needs a terminal start".into(),
        ));
    }
    let inside = detached_subtree(&c, e);
    let bad = t.steps.iter().filter(|s| s.index >= at).find_map(|s| {
        s.firings
            .iter()
            .find(|f| !inside.contains(&f.node))
            .map(|f| format!("{} fired {} at step {}", f.node, f.rule, s.index))
    });
    Ok(Verdict::from_witness("passage_strict", bad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, Daemon, RunOptions};
    use crate::graph::{DynamicGraph, Port};
    use crate::protocol::{NodeState, Status};

    /// r=0; 0-1, 0-2, 1-3, 2-3, 3-4: tree 1<-0, 2<-0, 3<-1, 4<-3.
    fn house() -> Configuration {
        let g = DynamicGraph::from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0), (3, 4, 1.0)])
            .unwrap();
        Configuration::from_fn(g, |v| match v.0 {
            0 => NodeState::ROOT,
            1 | 2 => NodeState::new(Some(Port(1)), Status::N, 1, 1),
            3 => NodeState::new(Some(Port(1)), Status::N, 2, 2),
            _ => NodeState::new(Some(Port(1)), Status::N, 3, 3),
        })
    }

    #[test]
    fn subtree_of_crashed_edge() {
        let c = house();
        assert!(legitimate(&c).holds);
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(3) });
        let sub = detached_subtree(&c, &e);
        assert_eq!(sub, [NodeId(3), NodeId(4)].into_iter().collect());
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(2), v: NodeId(3) });
        assert!(detached_subtree(&c, &e).is_empty());
        let e = TopologyEvent::new(0, EventKind::CrashNode { u: NodeId(1) });
        assert_eq!(detached_subtree(&c, &e), [NodeId(3), NodeId(4)].into_iter().collect());
    }

    #[test]
    fn crash_under_subtree_passes() {
        let c = house();
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(3) });
        let t = run(&c, Daemon::central(), std::slice::from_ref(&e), |_| false, RunOptions::new(1000)).unwrap();
        assert!(legitimate(&t.final_config).holds);
        assert!(passage_holds(&t, &e).unwrap().holds);
        assert!(passage_strict(&t, &e).unwrap().holds);
        assert_eq!(t.final_config.parent_of(NodeId(3)), Some(NodeId(2)));
    }

    #[test]
    fn recovery_events_are_rejected() {
        let c = house();
        let e = TopologyEvent::new(
            0,
            EventKind::RecoverEdge {
                u: NodeId(0),
                v: NodeId(4),
                weight: crate::graph::Weight::new(1.0).unwrap(),
            },
        );
        let t = run(&c, Daemon::central(), std::slice::from_ref(&e), |_| false, RunOptions::new(1000)).unwrap();
        assert!(matches!(passage_holds(&t, &e), Err(VerifyError::PreconditionViolated(_))));
    }

    #[test]
    fn illegitimate_start_is_rejected() {
        let c = house().with_state(NodeId(4), NodeState::new(Some(Port(1)), Status::N, 7, 7));
        let e = TopologyEvent::new(0, EventKind::CrashEdge { u: NodeId(1), v: NodeId(3) });
        let t = run(&c, Daemon::central(), std::slice::from_ref(&e), |_| false, RunOptions::new(1000)).unwrap();
        assert!(passage_holds(&t, &e).is_err());
    }
}
