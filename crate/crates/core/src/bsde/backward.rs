use crate::form::DirichletForm;
use crate::linalg::sup_norm;
use crate::measure::SignedMeasure;
use crate::relax::NodeSystem;

use super::{BsdeError, Driver};

/// Value surface `v(t, x)` on a uniform time grid, `Y_t = v(t, X_t)`.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub times: Vec<f64>,
    /// `values[k]` is `v(times[k], ·)`; the last row is the terminal data.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub steps: usize,
    pub newton_iterations: usize,
    /// Steps that needed the Gauss–Seidel fallback.
    pub fallback_steps: usize,
    pub max_step_residual: f64,
}

impl BsdeSolution {
    /// `u = v(0, ·)`.
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.last().expect("a solution has at least the terminal row")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }

    /// Row index of the grid cell `[t_k, t_{k+1})` containing `t`.
    pub fn cell(&self, t: f64) -> usize {
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return last;
        }
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `v(t, x)`, piecewise constant in time on the grid.
    pub fn value_at(&self, t: f64, x: usize) -> f64 {
        self.values[self.cell(t)][x]
    }
}

/// Integrates the backward system from `horizon` down to 0 with implicit
/// Euler steps of size at most `dt`.
///
/// Each step solves `(M + h L) v − h M f(·, v) = M v_next + h μ` by damped
/// Newton, falling back to node-wise Gauss–Seidel with bisection. The driver
/// should be Lipschitz in `y` (regularize it first otherwise).
pub fn solve_finite_horizon(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    terminal: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<BsdeSolution, BsdeError> {
    let n = form.len();
    form.check_len("driver", driver.len())?;
    form.check_len("measure", mu.len())?;
    form.check_len("terminal", terminal.len())?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(BsdeError::InvalidParameter(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(dt > 0.0) {
        return Err(BsdeError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let steps = if horizon == 0.0 { 0 } else { (horizon / dt).ceil() as usize };
    let h = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    let times: Vec<f64> = (0..=steps).map(|k| if k == steps { horizon } else { k as f64 * h }).collect();
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = terminal.to_vec();
    let mut diag = StepDiagnostics { steps, ..Default::default() };
    for k in (0..steps).rev() {
        let (v, iters, fallback, res) = implicit_step(form, driver, mu, &values[k + 1], h)
            .map_err(|node| BsdeError::InnerSolve { step: k, time: times[k], node })?;
        if let Some(node) = v.iter().position(|x| !x.is_finite()) {
            return Err(BsdeError::NonFinite { step: k, node });
        }
        diag.newton_iterations += iters;
        diag.fallback_steps += fallback as usize;
        diag.max_step_residual = diag.max_step_residual.max(res);
        values[k] = v;
    }
    let _ = n;
    Ok(BsdeSolution { times, values, diagnostics: diag })
}

/// One implicit Euler step. Returns the new values, Newton iterations,
/// whether the fallback ran, and the final scaled residual. On failure,
/// returns the offending node.
fn implicit_step(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    next: &[f64],
    h: f64,
) -> Result<(Vec<f64>, usize, bool, f64), usize> {
    let n = form.len();
    let m = form.measure();
    // residual divided by h: (L + M/h) v − M f(v) − (μ + M v_next / h)
    let extra: Vec<f64> = m.iter().map(|mx| mx / h).collect();
    let rhs: Vec<f64> = (0..n).map(|x| mu.mass(x) + extra[x] * next[x]).collect();
    let system = NodeSystem { form, driver, extra: &extra, rhs: &rhs };
    let scale_of = |v: &[f64]| -> f64 {
        (0..n)
            .map(|x| (form.diagonal(x) + extra[x]) * v[x].abs() + m[x] * driver.eval(x, v[x]).abs() + rhs[x].abs())
            .fold(f64::MIN_POSITIVE, f64::max)
    };
    let mut v = next.to_vec();
    let mut res = system.residual(&v);
    let mut norm = sup_norm(&res);
    let mut iters = 0;
    let mut converged = false;
    for _ in 0..60 {
        if norm <= 1e-14 * scale_of(&v) {
            converged = true;
            break;
        }
        iters += 1;
        let jac: Vec<f64> = (0..n).map(|x| extra[x] - m[x] * driver.slope(x, v[x])).collect();
        let Ok(fac) = form.factor_shifted(&jac) else { break };
        let delta: Vec<f64> = fac.solve(&res);
        let mut theta = 1.0;
        let mut accepted = false;
        while theta > 1e-6 {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a - theta * d).collect();
            let trial_res = system.residual(&trial);
            let trial_norm = sup_norm(&trial_res);
            if trial_norm <= (1.0 - 1e-4 * theta) * norm {
                let step = theta * sup_norm(&delta);
                v = trial;
                res = trial_res;
                norm = trial_norm;
                accepted = true;
                if step <= 4.0 * f64::EPSILON * sup_norm(&v).max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            theta *= 0.5;
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent left: either converged to round-off or Newton stalled
            converged = norm <= 1e-10 * scale_of(&v);
            break;
        }
    }
    if converged {
        let scaled = norm / scale_of(&v);
        return Ok((v, iters, false, scaled));
    }
    let mut u = next.to_vec();
    let tol = 1e-14 * sup_norm(next).max(1.0);
    match system.gauss_seidel(&mut u, tol, 200_000, 1e15, 1.0) {
        Ok(_) => {
            let scaled = sup_norm(&system.residual(&u)) / scale_of(&u);
            Ok((u, iters, true, scaled))
        }
        Err(crate::relax::SweepFailure::Unbounded { node }) => Err(node),
        Err(_) => Err(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{StateSpace, WeightMatrix};

    fn single() -> DirichletForm {
        DirichletForm::new(StateSpace::new(vec![1.0]).unwrap(), WeightMatrix::zeros(1), vec![1.0]).unwrap()
    }

    #[test]
    fn linear_scalar_decay_to_source() {
        // ∂_t v = v − 1, v(T) = 0  ⇒  v(0) = 1 − e^{−T}
        let t = 2.0_f64;
        let exact = 1.0 - (-t).exp();
        let mut prev_err = f64::INFINITY;
        for dt in [0.02, 0.01, 0.005] {
            let sol = solve_finite_horizon(&single(), &Driver::zero(1), &SignedMeasure::dirac(1, 0, 1.0), &[0.0], t, dt)
                .unwrap();
            let err = (sol.initial()[0] - exact).abs();
            assert!(err <= dt, "dt {dt}: err {err}");
            assert!(err < prev_err);
            prev_err = err;
        }
    }

    #[test]
    fn linear_damping() {
        // f(y) = −c y, μ = 0, v(T) = h  ⇒  v(0) = h e^{−(1+c)T}
        let (c, t, hval) = (0.5, 1.0, 2.0);
        let drv = Driver::Affine { a: vec![0.0], b: vec![-c] };
        let sol = solve_finite_horizon(&single(), &drv, &SignedMeasure::zeros(1), &[hval], t, 1e-4).unwrap();
        let exact = hval * (-(1.0 + c) * t).exp();
        assert!((sol.initial()[0] - exact).abs() < 1e-4);
    }

    #[test]
    fn zero_horizon_returns_terminal() {
        let sol = solve_finite_horizon(&single(), &Driver::zero(1), &SignedMeasure::dirac(1, 0, 1.0), &[0.3], 0.0, 0.1)
            .unwrap();
        assert_eq!(sol.initial(), &[0.3]);
        assert_eq!(sol.values.len(), 1);
    }

    #[test]
    fn terminal_row_is_bit_exact() {
        let drv = Driver::OddPower { c: vec![1.0], p: 3.0, g: vec![1.0] };
        let term = [0.1234567890123_f64];
        let sol = solve_finite_horizon(&single(), &drv, &SignedMeasure::zeros(1), &term, 1.0, 0.1).unwrap();
        assert_eq!(sol.terminal()[0].to_bits(), term[0].to_bits());
        assert_eq!(sol.value_at(1.0, 0).to_bits(), term[0].to_bits());
        assert_eq!(sol.value_at(0.0, 0), sol.initial()[0]);
    }

    #[test]
    fn invalid_parameters() {
        let f = single();
        let z = Driver::zero(1);
        let mu = SignedMeasure::zeros(1);
        assert!(solve_finite_horizon(&f, &z, &mu, &[0.0], 1.0, 0.0).is_err());
        assert!(solve_finite_horizon(&f, &z, &mu, &[0.0], -1.0, 0.1).is_err());
        assert!(solve_finite_horizon(&f, &z, &mu, &[0.0, 1.0], 1.0, 0.1).is_err());
    }
}
