//! Simulator and verification harness for a loop-free, super-stabilizing
//! BFS spanning-tree protocol on dynamic networks, and for the fair
//! composition that lends those properties to metric-optimizing trees.
//!
//! Layout:
//! - [`graph`]: the dynamic network and topology events.
//! - [`protocol`]: the node program as pure functions of a local view.
//! - [`engine`]: daemons, steps, runs, traces and rounds.
//! - [`verify`]: predicates, oracles, the passage check and model checking.
//! - [`composition`]: slave protocols and the filtered master.
//! - [`scenario`]: the text scenario format.
//! - [`experiment`]: the run-and-audit harness behind sweeps and benches.

pub mod composition;
pub mod engine;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod protocol;
pub mod scenario;
pub mod verify;

pub use engine::{Configuration, Daemon, DaemonKind, ExecutionTrace, Outcome, RunOptions};
pub use graph::{DynamicGraph, EventKind, GraphError, NodeId, Port, TopologyEvent, Weight};
pub use protocol::{Guards, NodeState, Rule, Status};
pub use verify::Verdict;
