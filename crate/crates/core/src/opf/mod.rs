//! Multi-period optimal power flow with voltage-support tariffs.

pub mod bnb;
mod breakdown;
pub mod conic;
mod iterate;
mod problem;
mod solve;

pub use bnb::{branch_and_bound, BnbOptions, MipResult, MipStatus, PrimalHeuristic, Rounding};
pub use breakdown::{exact_costs, objective_breakdown, step_violations, CostRow, CostTable, CostTotals, ExactStep};
pub use conic::{backend_from_env, ClarabelBackend, ConicBackend, ConicSolution, ConicStatus, SolverError};
pub use iterate::{
    evaluate_exact, injections, no_control, solve_iterative, ConvergenceReport, ExactEvaluation, IterativeOutcome,
    OuterStatus,
};
pub use problem::{
    build_period, build_problem, CostCoefficients, Fixings, HorizonInputs, Linearization, OpfContext, OpfOptions,
    OpfProblem, StepCost, StepVars, VsMode,
};
pub use solve::{
    decompose, extract, fix_and_solve, round_integers, round_preserving_sum, solve_mip, solve_relaxed, OpfSolution,
    StepBinaries, StepDispatch, StructuredRounding,
};

use crate::der::DerError;
use crate::powerflow::PowerFlowError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("invalid OPF input: {0}")]
    Input(String),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
