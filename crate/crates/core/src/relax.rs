//! Scalar monotone root finding and nonlinear Gauss–Seidel sweeps.
//!
//! Every node equation met in this crate has the form
//! `(d_x + e_x) t − Σ_y w_xy u_y − m_x f(x, t) = r_x` with `d_x + e_x >= 0`
//! and `f` nonincreasing in `t`, so its left side is nondecreasing in `t` and
//! the root, when it exists, is unique.

use crate::bsde::Driver;
use crate::form::DirichletForm;
use crate::linalg::sup_norm;

/// Root of a nondecreasing function, bracketed outward from `start`.
/// Returns `None` when no sign change is found within `|t| <= bound`.
pub fn increasing_root(phi: impl Fn(f64) -> f64, start: f64, bound: f64) -> Option<f64> {
    let f0 = phi(start);
    if f0 == 0.0 {
        return Some(start);
    }
    if !f0.is_finite() {
        return None;
    }
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut step = 1e-3 * start.abs().max(1.0);
    let mut near = (start, f0);
    let far = loop {
        let t = start + dir * step;
        if t.abs() > bound {
            let t = dir * bound;
            let ft = phi(t);
            if ft.is_finite() && ft * f0 <= 0.0 {
                break (t, ft);
            }
            return None;
        }
        let ft = phi(t);
        if !ft.is_finite() {
            return None;
        }
        if ft * f0 <= 0.0 {
            break (t, ft);
        }
        near = (t, ft);
        step *= 2.0;
    };
    let (mut a, mut fa, mut b, mut fb) = if dir > 0.0 {
        (near.0, near.1, far.0, far.1)
    } else {
        (far.0, far.1, near.0, near.1)
    };
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    // Illinois false position with forced bisection when progress stalls.
    let mut side = 0i8;
    let mut width = b - a;
    for it in 0..400 {
        if b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) + f64::MIN_POSITIVE {
            break;
        }
        let mut t = b - fb * (b - a) / (fb - fa);
        if it % 3 == 2 && (b - a) > 0.5 * width || !(t > a && t < b) {
            t = 0.5 * (a + b);
            width = b - a;
        }
        let ft = phi(t);
        if ft == 0.0 {
            return Some(t);
        }
        if ft < 0.0 {
            a = t;
            fa = ft;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            fb = ft;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Some(if phi(a).abs() <= phi(b).abs() { a } else { b })
}

/// Node-wise nonlinear system `(L + diag(extra)) u − M f(u) = rhs`.
pub(crate) struct NodeSystem<'a> {
    pub form: &'a DirichletForm,
    pub driver: &'a Driver,
    pub extra: &'a [f64],
    pub rhs: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SweepFailure {
    Unbounded { node: usize },
    NotConverged { sweeps: usize, change: f64, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SweepStats {
    pub sweeps: usize,
    pub change: f64,
    pub residual: f64,
}

impl NodeSystem<'_> {
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let lu = self.form.apply_laplacian(u);
        let m = self.form.measure();
        (0..u.len())
            .map(|x| lu[x] + self.extra[x] * u[x] - m[x] * self.driver.eval(x, u[x]) - self.rhs[x])
            .collect()
    }

    /// Sweeps until the sup-change is at most `tol` and the residual at most
    /// `10 tol`.
    pub fn gauss_seidel(
        &self,
        u: &mut [f64],
        tol: f64,
        max_sweeps: usize,
        bracket_bound: f64,
        omega: f64,
    ) -> Result<SweepStats, SweepFailure> {
        let m = self.form.measure();
        let diag: Vec<f64> = (0..u.len()).map(|x| self.form.diagonal(x) + self.extra[x]).collect();
        let mut change = f64::INFINITY;
        let mut residual = f64::INFINITY;
        for sweep in 1..=max_sweeps {
            change = 0.0;
            for x in 0..u.len() {
                let s: f64 = self.form.neighbors(x).iter().map(|&(y, w)| w * u[y]).sum();
                let (d, mx, r) = (diag[x], m[x], self.rhs[x]);
                let phi = |t: f64| d * t - s - mx * self.driver.eval(x, t) - r;
                let root = increasing_root(phi, u[x], bracket_bound).ok_or(SweepFailure::Unbounded { node: x })?;
                let next = u[x] + omega * (root - u[x]);
                change = change.max((next - u[x]).abs());
                u[x] = next;
            }
            if change <= tol {
                residual = sup_norm(&self.residual(u));
                if residual <= 10.0 * tol {
                    return Ok(SweepStats { sweeps: sweep, change, residual });
                }
            }
        }
        Err(SweepFailure::NotConverged { sweeps: max_sweeps, change, residual })
    }
}
