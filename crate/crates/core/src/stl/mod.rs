//! Signal temporal logic fragment: `true`, atoms, `not`, `and`, `or` and
//! bounded eventually `F[a,b]` over integer time steps.
//!
//! Atoms are margin functions of a single state. Boolean semantics are
//! derived from the margin (`margin > 0`), so the two semantics share a
//! single source of truth and agree in sign whenever robustness is nonzero.

mod ast;
mod monitor;
mod parser;
mod trace;

use thiserror::Error;

pub use ast::{conjoin, MarginFn, Predicate, PredicateKind, Spec};
pub use monitor::{
    evaluate_boolean, prefix_robustness, prefix_robustness_with_floor, robustness,
    robustness_trace, DEFAULT_FLOOR,
};
pub use parser::{parse_spec, PredicateRegistry};
pub use trace::{Frame, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown atom '{name}' at offset {pos}")]
    UnknownAtom { name: String, pos: usize },
    #[error("negative window bound in F[{lo},{hi}] at offset {pos}")]
    NegativeWindow { lo: i64, hi: i64, pos: usize },
    #[error("inverted window F[{lo},{hi}]{}", pos.map(|p| format!(" at offset {p}")).unwrap_or_default())]
    InvertedWindow { lo: i64, hi: i64, pos: Option<usize> },
    #[error("cannot conjoin an empty list of formulas")]
    EmptyConjunction,
    #[error("entity '{0}' is missing from the state")]
    MissingEntity(String),
    #[error("time {t} is outside a trace of length {len}")]
    TimeOutOfRange { t: usize, len: usize },
    #[error("formula at time {t} needs index {needed} but the trace has length {len}")]
    WindowPastEnd { t: usize, needed: usize, len: usize },
    #[error("prefix must contain at least one state")]
    EmptyPrefix,
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
}
