//! Drivers `f(x, y)`, their inf-convolution (Yosida) regularization and data
//! truncation.

use crate::form::clamp_level;
use crate::measure::SignedMeasure;

use super::BsdeError;

/// The nonlinearity `f(x, y)` evaluated node-wise.
#[derive(Debug, Clone)]
pub enum Driver {
    /// `a(x) + b(x) y`.
    Affine { a: Vec<f64>, b: Vec<f64> },
    /// `g(x) − c(x) sign(y) |y|^p`.
    OddPower { c: Vec<f64>, p: f64, g: Vec<f64> },
    /// Piecewise-linear in `y` on a shared grid, linearly extrapolated.
    Tabulated { ys: Vec<f64>, values: Vec<Vec<f64>> },
    /// Inf-convolution `inf_z { n|y − z| + f(x, z) }`.
    Yosida(Box<Yosida>),
    /// `base(x, y) + shift(x)`.
    Shifted { base: Box<Driver>, shift: Vec<f64> },
}

/// Grid of candidate minimizers for the inf-convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaGrid {
    pub radius: f64,
    pub delta: f64,
}

impl YosidaGrid {
    /// `R = 2·bound`, `delta = R / 4096`.
    pub fn from_bound(bound: f64) -> Self {
        let radius = if bound > 0.0 { 2.0 * bound } else { 1.0 };
        Self { radius, delta: radius / 4096.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Yosida {
    base: Driver,
    penalty: f64,
    radius: f64,
    delta: f64,
    points: usize,
    /// Discrete inf-convolution at the grid points, row per node.
    table: Vec<f64>,
}

impl Yosida {
    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn base(&self) -> &Driver {
        &self.base
    }

    /// Bound on the gap between the grid infimum and the continuous one.
    pub fn quadrature_error(&self) -> f64 {
        self.penalty * self.delta
    }

    /// Candidate from the grid minimizers and its slope in `y`.
    fn grid_candidate(&self, x: usize, y: f64) -> (f64, f64) {
        let row = &self.table[x * (self.points + 1)..(x + 1) * (self.points + 1)];
        let n = self.penalty;
        if y <= -self.radius {
            return (row[0] + n * (-self.radius - y), -n);
        }
        if y >= self.radius {
            return (row[self.points] + n * (y - self.radius), n);
        }
        let i = (((y + self.radius) / self.delta).floor() as usize).min(self.points - 1);
        let zl = -self.radius + i as f64 * self.delta;
        let zr = -self.radius + (i + 1) as f64 * self.delta;
        let left = row[i] + n * (y - zl);
        let right = row[i + 1] + n * (zr - y);
        if right <= left {
            (right, -n)
        } else {
            (left, n)
        }
    }
}

impl Driver {
    pub fn zero(n: usize) -> Self {
        Driver::Affine { a: vec![0.0; n], b: vec![0.0; n] }
    }

    /// `f(x, y) = g(x)`, independent of `y`.
    pub fn source(g: Vec<f64>) -> Self {
        let n = g.len();
        Driver::Affine { a: g, b: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        match self {
            Driver::Affine { a, .. } => a.len(),
            Driver::OddPower { c, .. } => c.len(),
            Driver::Tabulated { values, .. } => values.len(),
            Driver::Yosida(y) => y.base.len(),
            Driver::Shifted { shift, .. } => shift.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, x: usize, y: f64) -> f64 {
        match self {
            Driver::Affine { a, b } => a[x] + b[x] * y,
            Driver::OddPower { c, p, g } => g[x] - c[x] * y.signum() * y.abs().powf(*p),
            Driver::Tabulated { ys, values } => {
                let (i, t) = locate(ys, y);
                let row = &values[x];
                row[i] + t * (row[i + 1] - row[i])
            }
            Driver::Yosida(yo) => yo.grid_candidate(x, y).0.min(yo.base.eval(x, y)),
            Driver::Shifted { base, shift } => base.eval(x, y) + shift[x],
        }
    }

    /// A derivative (or active one-sided slope) of `y ↦ f(x, y)`, used as the
    /// Newton Jacobian. Infinite slopes are clipped.
    pub fn slope(&self, x: usize, y: f64) -> f64 {
        const CLIP: f64 = 1e12;
        let s = match self {
            Driver::Affine { b, .. } => b[x],
            Driver::OddPower { c, p, .. } => {
                if c[x] == 0.0 {
                    0.0
                } else {
                    -c[x] * p * y.abs().max(1e-300).powf(p - 1.0)
                }
            }
            Driver::Tabulated { ys, values } => {
                let (i, _) = locate(ys, y);
                (values[x][i + 1] - values[x][i]) / (ys[i + 1] - ys[i])
            }
            Driver::Yosida(yo) => {
                let (cand, s) = yo.grid_candidate(x, y);
                if yo.base.eval(x, y) <= cand {
                    yo.base.slope(x, y)
                } else {
                    s
                }
            }
            Driver::Shifted { base, .. } => base.slope(x, y),
        };
        s.clamp(-CLIP, CLIP)
    }

    /// `f(·, 0)`.
    pub fn f0(&self) -> Vec<f64> {
        (0..self.len()).map(|x| self.eval(x, 0.0)).collect()
    }

    /// `f(x, u(x))` for every node.
    pub fn eval_vec(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(x, &y)| self.eval(x, y)).collect()
    }

    /// Structural monotonicity: `y ↦ f(x, y)` nonincreasing at every node.
    pub fn is_monotone(&self) -> bool {
        match self {
            Driver::Affine { b, .. } => b.iter().all(|&v| v <= 0.0),
            Driver::OddPower { c, p, .. } => *p > 0.0 && c.iter().all(|&v| v >= 0.0),
            Driver::Tabulated { values, .. } => values.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0])),
            Driver::Yosida(yo) => yo.base.is_monotone(),
            Driver::Shifted { base, .. } => base.is_monotone(),
        }
    }

    /// Sampled check of `(f(x,y₁) − f(x,y₂))(y₁ − y₂) <= 0`; returns the first
    /// violation `(node, y₁, y₂)`.
    pub fn monotonicity_violation(&self, ys: &[f64]) -> Option<(usize, f64, f64)> {
        for x in 0..self.len() {
            for w in ys.windows(2) {
                let (y1, y2) = (w[0], w[1]);
                if (self.eval(x, y1) - self.eval(x, y2)) * (y1 - y2) > 0.0 {
                    return Some((x, y1, y2));
                }
            }
        }
        None
    }

    /// Global Lipschitz constant in `y`, when one is known.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Driver::Affine { b, .. } => Some(b.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
            Driver::OddPower { c, p, .. } => {
                let cmax = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if cmax == 0.0 {
                    Some(0.0)
                } else if *p == 1.0 {
                    Some(cmax)
                } else {
                    None
                }
            }
            Driver::Tabulated { ys, values } => Some(values.iter().fold(0.0_f64, |m, row| {
                row.windows(2).zip(ys.windows(2)).fold(m, |m, (v, y)| m.max(((v[1] - v[0]) / (y[1] - y[0])).abs()))
            })),
            Driver::Yosida(yo) => Some(match yo.base.lipschitz() {
                Some(l) => l.min(yo.penalty),
                None => yo.penalty,
            }),
            Driver::Shifted { base, .. } => base.lipschitz(),
        }
    }

    /// `F_r(x) = sup_{|y| <= r} |f(x, y)|`.
    pub fn sup_abs(&self, x: usize, r: f64) -> f64 {
        if self.is_monotone() {
            return self.eval(x, -r).abs().max(self.eval(x, r).abs());
        }
        (0..=2000).map(|i| self.eval(x, -r + i as f64 * r / 1000.0).abs()).fold(0.0, f64::max)
    }
}

fn locate(ys: &[f64], y: f64) -> (usize, f64) {
    let last = ys.len() - 2;
    let i = match ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    };
    (i, (y - ys[i]) / (ys[i + 1] - ys[i]))
}

/// Inf-convolution regularization
/// `f_n(x, y) = min { f(x, y), min_{z ∈ grid} n|y − z| + f(x, z) }`.
///
/// Including `z = y` keeps `f_n <= f` exact off the grid; at grid points
/// `f_n` is exactly `n`-Lipschitz and nondecreasing in `n`.
pub fn yosida_regularize(driver: &Driver, n: f64, grid: YosidaGrid) -> Result<Driver, BsdeError> {
    if !(grid.delta > 0.0) {
        return Err(BsdeError::InvalidParameter(format!("yosida delta must be positive, got {}", grid.delta)));
    }
    if !(grid.radius > 0.0) {
        return Err(BsdeError::InvalidParameter(format!("yosida radius must be positive, got {}", grid.radius)));
    }
    if !(n > 0.0) {
        return Err(BsdeError::InvalidParameter(format!("yosida penalty must be positive, got {n}")));
    }
    let points = ((2.0 * grid.radius / grid.delta).round() as usize).max(1);
    let delta = 2.0 * grid.radius / points as f64;
    let step = n * delta;
    let nodes = driver.len();
    let mut table = Vec::with_capacity(nodes * (points + 1));
    for x in 0..nodes {
        let start = table.len();
        table.extend((0..=points).map(|i| driver.eval(x, -grid.radius + i as f64 * delta)));
        let row = &mut table[start..];
        for i in 1..row.len() {
            row[i] = row[i].min(row[i - 1] + step);
        }
        for i in (0..row.len() - 1).rev() {
            row[i] = row[i].min(row[i + 1] + step);
        }
    }
    Ok(Driver::Yosida(Box::new(Yosida {
        base: driver.clone(),
        penalty: n,
        radius: grid.radius,
        delta,
        points,
        table,
    })))
}

/// Data truncation at level `n`: `f(x, y) − f(x, 0) + T_n(f(x, 0))` and
/// node masses clamped to `[−n, n]`.
pub fn truncate_data(driver: &Driver, mu: &SignedMeasure, n: f64) -> (Driver, SignedMeasure) {
    let shift: Vec<f64> = driver.f0().iter().map(|&v| clamp_level(n, v) - v).collect();
    let truncated = if shift.iter().all(|&s| s == 0.0) {
        driver.clone()
    } else {
        Driver::Shifted { base: Box::new(driver.clone()), shift }
    };
    let masses = mu.masses().iter().map(|&m| clamp_level(n, m)).collect();
    (truncated, SignedMeasure::new(masses).expect("clamped masses are finite"))
}
