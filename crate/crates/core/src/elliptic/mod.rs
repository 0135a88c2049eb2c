//! Solvers for `L u = M f(·, u) + μ` (node form of `−A u = f(·, u) + μ`)
//! and the estimate suite checked on their output.

mod checks;
mod mc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsde::{solve_random_horizon_ladder, BsdeError, Driver, LadderConfig, LadderLevel};
use crate::form::{DirichletForm, FormError};
use crate::linalg::sup_norm;
use crate::markov::McError;
use crate::measure::SignedMeasure;
use crate::relax::{NodeSystem, SweepFailure};

pub use checks::{
    duality_check, green_bound_check, l1_bound_check, truncation_energy_check, tv_comparison_check,
    vanishing_energy_check, weak_form_check, BoundReport, DualityReport, TruncationReport, TruncationRow, TvReport,
};
pub use mc::{solve_elliptic_mc, McSolveConfig};

#[derive(Debug, Error)]
pub enum EllipticError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Bsde(#[from] BsdeError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("solution unbounded: no root of the node equation at node {node} within the bracket")]
    Unbounded { node: usize },
    #[error("no convergence after {sweeps} sweeps (change {change:e}, residual {residual:e})")]
    NotConverged { sweeps: usize, change: f64, residual: f64 },
    #[error("driver is not monotone at node {node} between y = {y1} and y = {y2}")]
    NotMonotone { node: usize, y1: f64, y2: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GaussSeidel,
    Ladder,
    Mc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GaussSeidel => "gauss-seidel",
            Method::Ladder => "ladder",
            Method::Mc => "mc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gauss-seidel" | "gs" => Ok(Method::GaussSeidel),
            "ladder" => Ok(Method::Ladder),
            "mc" => Ok(Method::Mc),
            other => Err(format!("unknown method '{other}' (expected gauss-seidel, ladder or mc)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Per-node standard errors of a Monte Carlo solution.
    pub se: Option<Vec<f64>>,
    pub capped_fraction: Option<f64>,
    pub ladder: Option<Vec<LadderLevel>>,
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub u: Vec<f64>,
    /// `f(x, u(x))`.
    pub f_u: Vec<f64>,
    /// `‖L u − M f_u − μ‖_∞`.
    pub residual: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl EllipticSolution {
    /// Wraps a candidate `u`, recomputing `f_u` and the residual.
    pub fn from_vector(
        form: &DirichletForm,
        driver: &Driver,
        mu: &SignedMeasure,
        u: Vec<f64>,
        method: Method,
    ) -> Result<Self, EllipticError> {
        form.check_len("solution", u.len())?;
        form.check_len("driver", driver.len())?;
        form.check_len("measure", mu.len())?;
        let f_u = driver.eval_vec(&u);
        let residual = sup_norm(&defect(form, &u, &f_u, mu));
        Ok(Self { u, f_u, residual, method, diagnostics: Diagnostics::default() })
    }

    pub fn max_se(&self) -> Option<f64> {
        self.diagnostics.se.as_ref().map(|s| s.iter().copied().fold(0.0, f64::max))
    }
}

/// `L u − M f_u − μ`.
pub(crate) fn defect(form: &DirichletForm, u: &[f64], f_u: &[f64], mu: &SignedMeasure) -> Vec<f64> {
    let lu = form.apply_laplacian(u);
    let m = form.measure();
    (0..u.len()).map(|x| lu[x] - m[x] * f_u[x] - mu.mass(x)).collect()
}

fn require_monotone(driver: &Driver) -> Result<(), EllipticError> {
    if driver.is_monotone() {
        return Ok(());
    }
    let ys: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
    match driver.monotonicity_violation(&ys) {
        Some((node, y1, y2)) => Err(EllipticError::NotMonotone { node, y1, y2 }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussSeidelConfig {
    /// Sup-change stopping tolerance; the residual must reach `10 · tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Node roots are sought in `[−bracket_bound, bracket_bound]`.
    pub bracket_bound: f64,
    pub initial: Option<Vec<f64>>,
    /// Relaxation factor applied to each node update.
    pub omega: f64,
}

impl Default for GaussSeidelConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 1_000_000, bracket_bound: 1e12, initial: None, omega: 1.0 }
    }
}

/// Nonlinear Gauss–Seidel: each sweep solves the scalar node equations
/// `d_x u_x − Σ_y w_xy u_y = m_x f(x, u_x) + μ({x})` by bracketing.
pub fn solve_elliptic_gauss_seidel(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    cfg: &GaussSeidelConfig,
) -> Result<EllipticSolution, EllipticError> {
    form.check_len("driver", driver.len())?;
    form.check_len("measure", mu.len())?;
    if !(cfg.tol > 0.0) || !(cfg.bracket_bound > 0.0) {
        return Err(EllipticError::InvalidParameter("tol and bracket_bound must be positive".into()));
    }
    if !(cfg.omega > 0.0 && cfg.omega < 2.0) {
        return Err(EllipticError::InvalidParameter(format!("omega must lie in (0, 2), got {}", cfg.omega)));
    }
    require_monotone(driver)?;
    let n = form.len();
    let mut u = match &cfg.initial {
        Some(v) => {
            form.check_len("initial guess", v.len())?;
            v.clone()
        }
        None => vec![0.0; n],
    };
    let extra = vec![0.0; n];
    let system = NodeSystem { form, driver, extra: &extra, rhs: mu.masses() };
    let stats = system.gauss_seidel(&mut u, cfg.tol, cfg.max_sweeps, cfg.bracket_bound, cfg.omega).map_err(|e| match e {
        SweepFailure::Unbounded { node } => EllipticError::Unbounded { node },
        SweepFailure::NotConverged { sweeps, change, residual } => EllipticError::NotConverged { sweeps, change, residual },
    })?;
    let mut sol = EllipticSolution::from_vector(form, driver, mu, u, Method::GaussSeidel)?;
    sol.diagnostics.iterations = stats.sweeps;
    Ok(sol)
}

/// `u = E_· Y_0` from the random-horizon ladder.
pub fn solve_elliptic_ladder(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    cfg: &LadderConfig,
) -> Result<EllipticSolution, EllipticError> {
    require_monotone(driver)?;
    let out = solve_random_horizon_ladder(form, driver, mu, cfg)?;
    let mut sol = EllipticSolution::from_vector(form, driver, mu, out.u().to_vec(), Method::Ladder)?;
    sol.diagnostics.iterations = out.trace.len();
    sol.diagnostics.ladder = Some(out.trace);
    Ok(sol)
}
