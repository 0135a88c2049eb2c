//! Backward equations driven by the chain: regularization, data truncation,
//! finite-horizon backward integration, the random-horizon ladder, and
//! martingale extraction.
//!
//! On the chain filtration the solution of the backward equation is
//! `Y_t = v(t, X_t)` with `∂_t v = (L v)/m − f(·, v) − ρ`, `ρ = μ/m`, so all
//! the machinery here works on node vectors.

mod backward;
mod comparison;
mod driver;
mod ladder;
mod martingale;

use thiserror::Error;

use crate::form::FormError;
use crate::markov::McError;

pub use backward::{solve_finite_horizon, BsdeSolution, StepDiagnostics};
pub use comparison::{bsde_comparison_check, ComparisonReport, ComparisonSide};
pub use driver::{truncate_data, yosida_regularize, Driver, Yosida, YosidaGrid};
pub use ladder::{solve_random_horizon_ladder, LadderConfig, LadderLevel, LadderOutcome};
pub use martingale::{
    extract_martingale, martingale_residual_check, MartingaleCheckConfig, MartingaleEntry, MartingaleReport,
    ValueSurface,
};

#[derive(Debug, Error)]
pub enum BsdeError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inner solve failed at step {step} (t = {time}) near node {node}")]
    InnerSolve { step: usize, time: f64, node: usize },
    #[error("non-finite value at step {step}, node {node}")]
    NonFinite { step: usize, node: usize },
    #[error("ladder did not stabilize within {} levels; sup-increments {increments:?}", increments.len() + 1)]
    LadderNotStabilized { increments: Vec<f64> },
}
