use std::io::Write;

use serde::Serialize;

use crate::form::DirichletForm;
use crate::linalg::{sup_diff, sup_norm};
use crate::measure::SignedMeasure;

use super::{solve_finite_horizon, truncate_data, yosida_regularize, BsdeError, BsdeSolution, Driver, YosidaGrid};

/// Gap `f − f_n` at the level solution below which the regularization is
/// treated as inactive.
const GAP_TOLERANCE: f64 = 1e-12;

/// Survival bound above which the finite horizon still truncates the
/// random one. Below it, doubling the horizon shrinks the increments.
const HORIZON_ACTIVE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    /// Maximum number of levels `n = 1, 2, …`.
    pub levels: usize,
    /// Implicit Euler steps per level (`dt = T_n / steps_per_level`).
    pub steps_per_level: usize,
    /// Stop once the sup-increment is at most this and no truncation acts.
    pub tol_outer: f64,
    /// Yosida grid; derived from the linear a priori bound when absent.
    pub grid: Option<YosidaGrid>,
    /// Time unit `T_n = 2ⁿ · base_time`; defaults to `1 / min positive λ`.
    pub base_time: Option<f64>,
    /// Extra levels to run after the stop rule fires.
    pub extra_levels: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self { levels: 40, steps_per_level: 64, tol_outer: 1e-8, grid: None, base_time: None, extra_levels: 0 }
    }
}

/// Diagnostics of one ladder level.
#[derive(Debug, Clone, Serialize)]
pub struct LadderLevel {
    pub level: usize,
    pub horizon: f64,
    pub penalty: f64,
    pub truncation: f64,
    /// `‖u⁽ⁿ⁾ − u⁽ⁿ⁻¹⁾‖_∞`, absent at the first level.
    pub increment: Option<f64>,
    pub newton_iterations: usize,
    pub fallback_steps: usize,
    /// Data truncation changed the driver or the measure.
    pub data_truncated: bool,
    /// `max_x f(x, u⁽ⁿ⁾(x)) − f_n(x, u⁽ⁿ⁾(x))`.
    pub yosida_gap: f64,
    /// Bound on the relative influence of the zero terminal value on `u⁽ⁿ⁾`.
    pub survival_bound: f64,
    pub u: Vec<f64>,
}

impl LadderLevel {
    /// Data truncation, regularization or the finite horizon still alters
    /// the problem at this level.
    pub fn truncations_active(&self) -> bool {
        self.data_truncated || self.yosida_gap > GAP_TOLERANCE || self.survival_bound > HORIZON_ACTIVE
    }
}

#[derive(Debug, Clone)]
pub struct LadderOutcome {
    /// Value surface of the last level run.
    pub solution: BsdeSolution,
    pub trace: Vec<LadderLevel>,
    /// Level at which the stop rule fired.
    pub converged_at: usize,
    pub grid: YosidaGrid,
}

impl LadderOutcome {
    /// Final `u = v(0, ·)`.
    pub fn u(&self) -> &[f64] {
        self.solution.initial()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.trace.iter().filter_map(|l| l.increment).collect()
    }

    /// First level from which no truncation acts any more.
    pub fn deactivation_level(&self) -> Option<usize> {
        let last_active = self.trace.iter().rposition(|l| l.truncations_active());
        match last_active {
            None => self.trace.first().map(|l| l.level),
            Some(i) => self.trace.get(i + 1).map(|l| l.level),
        }
    }

    /// Increments from the deactivation level on are nonincreasing, up to
    /// `slack`.
    pub fn increments_nonincreasing_after_deactivation(&self, slack: f64) -> bool {
        let Some(start) = self.deactivation_level() else { return false };
        let incs: Vec<f64> = self.trace.iter().filter(|l| l.level > start).filter_map(|l| l.increment).collect();
        incs.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    /// CSV columns `level,horizon,sup_increment,inner_iterations`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "horizon", "sup_increment", "inner_iterations"])?;
        for l in &self.trace {
            w.write_record([
                l.level.to_string(),
                format!("{:e}", l.horizon),
                l.increment.map(|v| format!("{v:e}")).unwrap_or_default(),
                l.newton_iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A priori bound `‖L⁻¹(M|f(·,0)| + |μ|)‖_∞` on the solution of a monotone
/// problem over a transient form.
pub(crate) fn linear_bound(form: &DirichletForm, driver: &Driver, mu: &SignedMeasure) -> Result<f64, BsdeError> {
    let rhs: Vec<f64> = (0..form.len()).map(|x| form.measure()[x] * driver.eval(x, 0.0).abs() + mu.mass(x).abs()).collect();
    let rhs = SignedMeasure::new(rhs)?;
    Ok(sup_norm(&form.potential(&rhs, 0.0)?))
}

/// Random-horizon ladder: for `n = 1, 2, …` regularize the driver at penalty
/// `2ⁿ`, truncate the data at level `n`, and integrate backward from
/// terminal 0 at `T_n = 2ⁿ · base_time`. The absorption of the chain plays
/// the role of the indicator of `[0, ζ]`.
pub fn solve_random_horizon_ladder(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    cfg: &LadderConfig,
) -> Result<LadderOutcome, BsdeError> {
    form.check_len("driver", driver.len())?;
    form.check_len("measure", mu.len())?;
    if cfg.levels == 0 || cfg.steps_per_level == 0 {
        return Err(BsdeError::InvalidParameter("ladder needs at least one level and one step".into()));
    }
    if !(cfg.tol_outer > 0.0) {
        return Err(BsdeError::InvalidParameter(format!("tol_outer must be positive, got {}", cfg.tol_outer)));
    }
    let transient = form.is_transient().0;
    let grid = match cfg.grid {
        Some(g) => g,
        None if transient => YosidaGrid::from_bound(linear_bound(form, driver, mu)?),
        None => {
            return Err(BsdeError::InvalidParameter(
                "a Yosida grid must be given when the form is not transient".into(),
            ))
        }
    };
    let base_time = match cfg.base_time {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(BsdeError::InvalidParameter(format!("base_time must be positive, got {t}"))),
        None => {
            let min_rate = form.exit_rates().into_iter().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
            if min_rate.is_finite() {
                1.0 / min_rate
            } else {
                1.0
            }
        }
    };
    let gamma = if transient { form.bottom_of_spectrum()? } else { 0.0 };
    let m = form.measure();
    let mass_ratio = (m.iter().sum::<f64>() / m.iter().copied().fold(f64::INFINITY, f64::min)).sqrt();
    let n = form.len();
    let zero = vec![0.0; n];

    let mut trace: Vec<LadderLevel> = Vec::new();
    let mut converged_at = None;
    let mut last = None;
    for level in 1..=cfg.levels {
        let penalty = 2f64.powi(level as i32);
        let horizon = penalty * base_time;
        let truncation = level as f64;
        let regular = yosida_regularize(driver, penalty, grid)?;
        let (level_driver, level_mu) = truncate_data(&regular, mu, truncation);
        let data_truncated = level_mu.masses() != mu.masses()
            || regular.f0().iter().any(|v| v.abs() > truncation);
        let k = cfg.steps_per_level;
        let sol = solve_finite_horizon(form, &level_driver, &level_mu, &zero, horizon, horizon / k as f64)?;
        let u = sol.initial().to_vec();
        let yosida_gap = (0..n).map(|x| driver.eval(x, u[x]) - regular.eval(x, u[x])).fold(0.0, f64::max);
        let survival_bound = if gamma > 0.0 {
            mass_ratio * (1.0 + gamma * horizon / k as f64).powf(-(k as f64))
        } else {
            0.0
        };
        let increment = trace.last().map(|p| sup_diff(&u, &p.u));
        let entry = LadderLevel {
            level,
            horizon,
            penalty,
            truncation,
            increment,
            newton_iterations: sol.diagnostics.newton_iterations,
            fallback_steps: sol.diagnostics.fallback_steps,
            data_truncated,
            yosida_gap,
            survival_bound,
            u,
        };
        let settled = !entry.truncations_active()
            && entry.survival_bound <= cfg.tol_outer
            && entry.increment.is_some_and(|d| d <= cfg.tol_outer);
        trace.push(entry);
        last = Some(sol);
        if converged_at.is_none() && settled {
            converged_at = Some(level);
        }
        if converged_at.is_some_and(|c| level >= c + cfg.extra_levels) {
            break;
        }
    }
    match converged_at {
        Some(converged_at) => Ok(LadderOutcome {
            solution: last.expect("at least one level ran"),
            trace,
            converged_at,
            grid,
        }),
        None => Err(BsdeError::LadderNotStabilized { increments: trace.iter().filter_map(|l| l.increment).collect() }),
    }
}
