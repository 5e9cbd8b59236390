//! Predicates over configurations and traces, brute-force oracles, and
//! exhaustive small-scope model checking.

mod metric;
pub mod modelcheck;
mod oracles;
mod passage;
mod predicates;

use std::fmt;

use thiserror::Error;

pub use metric::{check_m_maxflow, check_m_mindeg, tree_flows};
pub use modelcheck::{
    extended_limit, model_check, model_check_explicit, model_check_explicit_extended, model_check_extended, model_check_with,
    ModelCheckError, ModelCheckReport,
};
pub use oracles::{
    all_spanning_trees, bfs_oracle, edge, max_degree, min_degree_tree_oracle, widest_path_oracle,
    widest_path_tree, EdgeSet, Flow, OracleError,
};
pub use passage::{detached_subtree, passage_holds, passage_strict};
pub use predicates::{
    canonical_legitimate, coherent, legitimate, legitimate_strict, level_ordered, loop_free, LegitimacyCheck,
};

/// Outcome of one check, with a counterexample when it fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: String,
    pub holds: bool,
    pub witness: Option<String>,
}

impl Verdict {
    pub fn pass(name: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            holds: true,
            witness: None,
        }
    }

    pub fn fail(name: impl Into<String>, witness: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            holds: false,
            witness: Some(witness.into()),
        }
    }

    /// `fail` when `witness` is `Some`, `pass` otherwise.
    pub fn from_witness(name: impl Into<String>, witness: Option<String>) -> Self {
        match witness {
            Some(w) => Verdict::fail(name, w),
            None => Verdict::pass(name),
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Machine-readable summary line: `VERDICT <name> <holds> [witness=...]`.
impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VERDICT {} {}", self.name, self.holds)?;
        if let Some(w) = &self.witness {
            write!(f, " witness={w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}
