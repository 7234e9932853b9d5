//! The narrow interface the steering algorithms need from a database.
//!
//! Mapping and search never look inside an engine: they ask it to plan a
//! query under a hint set and to execute it under a latency bound. The
//! synthetic executor implements this for tests and evaluation; a driver for
//! a real DBMS would implement the same two calls.

use alloc::string::String;
use core::fmt;

use crate::hints::HintSet;
use crate::plan::ExecutionPlan;

/// Outcome of one bounded execution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Execution {
    Completed { latency_ms: f64 },
    /// The run was aborted because its latency exceeded the given bound.
    TimedOut,
}

impl Execution {
    pub fn latency_ms(&self) -> Option<f64> {
        match self {
            Execution::Completed { latency_ms } => Some(*latency_ms),
            Execution::TimedOut => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineError {
    /// The hint set disables every join operator or every scan operator, so
    /// no plan exists. Searches skip such configurations.
    Infeasible { hints: HintSet },
    /// Anything else the engine could not recover from; aborts the caller.
    Failed { detail: String },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Infeasible { hints } => {
                write!(f, "no plan exists under hint set {hints}")
            }
            EngineError::Failed { detail } => write!(f, "engine failure: {detail}"),
        }
    }
}

impl core::error::Error for EngineError {}

/// A planner and executor bound to one query.
pub trait QueryEngine {
    /// The plan the optimizer chooses when the operators in `hints` are
    /// disabled. Pure: same hints, same plan.
    fn plan(&self, hints: &HintSet) -> Result<ExecutionPlan, EngineError>;

    /// Runs the query under `hints`. With a bound, the run is aborted as
    /// soon as it is known to exceed `timeout_ms`; without one it always
    /// completes.
    fn execute(&self, hints: &HintSet, timeout_ms: Option<f64>) -> Result<Execution, EngineError>;
}
