//! Grid-refinement studies against closed-form references.

use crate::catalog::{build_catalog_problem, Coefficient, DriverSpec, Family, MeasureEntry, Position, Problem};
use crate::linalg::sup_norm;

use super::{num, HarnessError, Table};

/// Admissible range of the empirical order for the Green-function study.
pub const ORDER_RANGE: (f64, f64) = (0.75, 1.25);
/// Admissible range of the fitted boundary exponent, relative to `α/2`.
pub const EXPONENT_WINDOW: f64 = 0.1;
/// Tolerance of the nodal-exact study.
pub const NODAL_TOL: f64 = 1e-10;

/// Reference solution of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// One-dimensional Green function of `−(a u')'` with constant `a`.
    GreenFunction,
    /// Diagonal operator: `u = ρ / c` at every node.
    NodalExact,
    /// Exit-time profile `(1 − x²)^{α/2}` near the boundary.
    BoundaryExponent,
}

impl Oracle {
    pub fn for_catalog(id: &str) -> Option<Self> {
        match id {
            "lap1d-dirac" => Some(Oracle::GreenFunction),
            "diag-5.7" => Some(Oracle::NodalExact),
            "frac-a10" => Some(Oracle::BoundaryExponent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub error: f64,
    /// `log₂(err(h) / err(h/2))` against the previous grid.
    pub order: Option<f64>,
    /// Fitted boundary exponent, for the fractional family.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub id: String,
    pub oracle: Oracle,
    pub rows: Vec<ConvergenceRow>,
    pub pass: bool,
}

impl ConvergenceStudy {
    pub fn table(&self) -> Table {
        let mut t = Table::new(format!("{}.convergence", self.id), &["n", "h", "error", "order", "exponent"]);
        for r in &self.rows {
            t.push(vec![
                r.n.to_string(),
                num(r.h),
                num(r.error),
                r.order.map(num).unwrap_or_default(),
                r.exponent.map(num).unwrap_or_default(),
            ]);
        }
        t
    }

    pub fn summary(&self) -> String {
        let last = self.rows.last().expect("at least three grids");
        match self.oracle {
            Oracle::GreenFunction => {
                let orders: Vec<String> = self.rows.iter().filter_map(|r| r.order).map(|o| format!("{o:.3}")).collect();
                format!("{}: errors vs Green function, orders [{}]", self.id, orders.join(", "))
            }
            Oracle::NodalExact => format!("{}: max nodal error {:.3e}", self.id, self.rows.iter().map(|r| r.error).fold(0.0, f64::max)),
            Oracle::BoundaryExponent => {
                format!("{}: boundary exponent {:.4} on {} nodes", self.id, last.exponent.unwrap_or(f64::NAN), last.n)
            }
        }
    }
}

pub(super) fn check_sizes(sizes: &[usize]) -> Result<(), HarnessError> {
    if sizes.len() < 3 {
        return Err(HarnessError::usage("grid_sizes", "at least three grid sizes are required"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::usage("grid_sizes", "grid sizes must be strictly increasing"));
    }
    Ok(())
}

fn oracle_error(id: &str, reason: &str) -> HarnessError {
    HarnessError::Oracle { problem: id.to_string(), reason: reason.to_string() }
}

fn nodes_x(p: &Problem) -> Vec<f64> {
    p.form.space().coords().map(|c| c.iter().map(|x| x[0]).collect()).unwrap_or_default()
}

fn green_error(p: &Problem) -> Result<f64, HarnessError> {
    let d = &p.descriptor;
    let a = match &d.coeff {
        None => 1.0,
        Some(Coefficient::Constant { value }) => *value,
        Some(_) => return Err(oracle_error(&p.id, "coefficient must be constant")),
    };
    if !matches!(d.driver, DriverSpec::Zero {}) || d.g.is_some() {
        return Err(oracle_error(&p.id, "driver must vanish"));
    }
    let [lo, hi] = d.interval.unwrap_or([0.0, 1.0]);
    let atoms: Vec<(f64, f64)> = d
        .measure
        .iter()
        .map(|e| match e {
            MeasureEntry::Point(atom) => match &atom.x {
                Position::Scalar(x) => Ok((*x, atom.mass)),
                Position::Point(_) => Err(oracle_error(&p.id, "atoms must be scalar")),
            },
            _ => Err(oracle_error(&p.id, "measure must consist of point atoms")),
        })
        .collect::<Result<_, _>>()?;
    let green = |x: f64, y: f64| (x.min(y) - lo) * (hi - x.max(y)) / ((hi - lo) * a);
    let u = p.form.potential(&p.mu, 0.0).map_err(|source| HarnessError::Form { problem: p.id.clone(), source })?;
    let xs = nodes_x(p);
    Ok((0..u.len())
        .map(|i| (u[i] - atoms.iter().map(|&(y, q)| q * green(xs[i], y)).sum::<f64>()).abs())
        .fold(0.0, f64::max))
}

fn nodal_error(p: &Problem) -> Result<f64, HarnessError> {
    let d = &p.descriptor;
    let (Some(coeff), DriverSpec::Zero {}) = (&d.coeff, &d.driver) else {
        return Err(oracle_error(&p.id, "needs a coefficient and a vanishing driver"));
    };
    let density = match d.measure.as_slice() {
        [MeasureEntry::Density(part)] => &part.density,
        _ => return Err(oracle_error(&p.id, "measure must be a single density")),
    };
    let sol = super::solve_with(p, &super::RunConfig::new(super::Command::Solve), crate::elliptic::Method::GaussSeidel)?;
    let xs = nodes_x(p);
    Ok((0..xs.len())
        .map(|i| {
            let exact = density.eval(&[xs[i]]) / coeff.eval(&[xs[i]]);
            (sol.u[i] - exact).abs() / exact.abs().max(1.0)
        })
        .fold(0.0, f64::max))
}

/// Least-squares slope of `log u` against `log(1 − x²)` over the 10% of
/// nodes nearest each end of `(−1, 1)`, with `u` the expected exit time.
fn boundary_exponent(p: &Problem) -> Result<f64, HarnessError> {
    let n = p.form.len();
    let u = p.form.green(&vec![1.0; n]).map_err(|source| HarnessError::Form { problem: p.id.clone(), source })?;
    let xs = nodes_x(p);
    let band = (n / 10).max(2);
    let idx: Vec<usize> = (0..band).chain(n - band..n).collect();
    let lx: Vec<f64> = idx.iter().map(|&i| (1.0 - xs[i] * xs[i]).ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| u[i].ln()).collect();
    let k = idx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Solves the catalog problem `id` on each grid size and compares with the
/// oracle.
pub fn convergence_study(
    id: &str,
    sizes: &[usize],
    oracle: Oracle,
    alpha: Option<f64>,
) -> Result<ConvergenceStudy, HarnessError> {
    check_sizes(sizes)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let p = build_catalog_problem(id, Some(n), alpha)
            .map_err(|source| HarnessError::Problem { problem: id.to_string(), source })?;
        let xs = nodes_x(&p);
        let h = if xs.len() > 1 { xs[1] - xs[0] } else { f64::NAN };
        let (error, exponent) = match oracle {
            Oracle::GreenFunction => {
                if p.descriptor.family != Family::Lap1d {
                    return Err(oracle_error(id, "Green function oracle needs the lap1d family"));
                }
                (green_error(&p)?, None)
            }
            Oracle::NodalExact => (nodal_error(&p)?, None),
            Oracle::BoundaryExponent => {
                if p.descriptor.family != Family::Frac {
                    return Err(oracle_error(id, "boundary profile oracle needs the frac family"));
                }
                let a = p.descriptor.alpha.unwrap_or(1.0);
                let e = boundary_exponent(&p)?;
                ((e - a / 2.0).abs(), Some(e))
            }
        };
        if !error.is_finite() {
            return Err(oracle_error(id, "non-finite error"));
        }
        let order = match (oracle, rows.last()) {
            (Oracle::GreenFunction, Some(prev)) => Some((prev.error / error).log2()),
            _ => None,
        };
        rows.push(ConvergenceRow { n, h, error, order, exponent });
    }
    let pass = match oracle {
        Oracle::GreenFunction => {
            rows.iter().filter_map(|r| r.order).all(|o| (ORDER_RANGE.0..=ORDER_RANGE.1).contains(&o))
        }
        Oracle::NodalExact => sup_norm(&rows.iter().map(|r| r.error).collect::<Vec<_>>()) <= NODAL_TOL,
        Oracle::BoundaryExponent => rows.last().is_some_and(|r| r.error <= EXPONENT_WINDOW),
    };
    Ok(ConvergenceStudy { id: id.to_string(), oracle, rows, pass })
}
