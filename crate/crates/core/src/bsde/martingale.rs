use rayon::prelude::*;

use crate::markov::{mean_and_se, path_rng, Chain, ChainPath, McError, PathStatus};
use crate::measure::SignedMeasure;

use super::{BsdeSolution, Driver};

/// The `Y` side of a solution: `Y_t = u(X_t)` or `Y_t = v(t, X_t)`.
#[derive(Debug, Clone, Copy)]
pub enum ValueSurface<'a> {
    Elliptic(&'a [f64]),
    Parabolic(&'a BsdeSolution),
}

impl ValueSurface<'_> {
    fn value(&self, t: f64, x: usize) -> f64 {
        match self {
            ValueSurface::Elliptic(u) => u[x],
            ValueSurface::Parabolic(sol) => sol.value_at(t, x),
        }
    }

    fn horizon(&self) -> f64 {
        match self {
            ValueSurface::Elliptic(_) => f64::INFINITY,
            ValueSurface::Parabolic(sol) => sol.horizon(),
        }
    }

    /// Breakpoints of `t ↦ v(t, x)` strictly inside `(a, b)`.
    fn breaks(&self, a: f64, b: f64) -> &[f64] {
        match self {
            ValueSurface::Elliptic(_) => &[],
            ValueSurface::Parabolic(sol) => {
                let lo = sol.times.partition_point(|&s| s <= a);
                let hi = sol.times.partition_point(|&s| s < b);
                &sol.times[lo..hi.max(lo)]
            }
        }
    }
}

/// `M_t = Y_t − Y_0 + ∫_0^t (f(X_s, Y_s) + ρ(X_s)) ds` at time 0, at every
/// jump time and at the end of the path, frozen after killing (where
/// `Y = 0`). Parabolic surfaces are followed up to their horizon.
pub fn extract_martingale(
    path: &ChainPath,
    surface: ValueSurface<'_>,
    driver: &Driver,
    mu: &SignedMeasure,
    measure: &[f64],
) -> Vec<(f64, f64)> {
    let rho: Vec<f64> = mu.masses().iter().zip(measure).map(|(a, m)| a / m).collect();
    let end = surface.horizon();
    let y0 = surface.value(0.0, path.start);
    let mut out = vec![(0.0, 0.0)];
    let mut t = 0.0;
    let mut integral = 0.0;
    let last = path.sojourns.len().saturating_sub(1);
    for (i, s) in path.sojourns.iter().enumerate() {
        let stop = (t + s.holding).min(end);
        let mut a = t;
        for &b in surface.breaks(t, stop).iter().chain(std::iter::once(&stop)) {
            if b > a {
                let y = surface.value(a, s.state);
                integral += (b - a) * (driver.eval(s.state, y) + rho[s.state]);
                a = b;
            }
        }
        if stop >= end {
            let y = surface.value(end, s.state);
            out.push((end, y - y0 + integral));
            return out;
        }
        t = stop;
        let y = if i < last {
            surface.value(t, path.sojourns[i + 1].state)
        } else if path.status == PathStatus::Absorbed {
            0.0
        } else {
            surface.value(t, s.state)
        };
        out.push((t, y - y0 + integral));
    }
    out
}

/// `M_t` for an elliptic solution at the requested (sorted) times.
fn martingale_at(path: &ChainPath, u: &[f64], f_u: &[f64], rho: &[f64], times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut t = 0.0;
    let mut integral = 0.0;
    let y0 = u[path.start];
    for s in &path.sojourns {
        let rate = f_u[s.state] + rho[s.state];
        let stop = t + s.holding;
        while next < times.len() && times[next] < stop {
            out.push(u[s.state] - y0 + integral + (times[next] - t) * rate);
            next += 1;
        }
        integral += s.holding * rate;
        t = stop;
    }
    // killed (or capped exactly at a checkpoint): frozen value with Y = 0 after death
    let frozen = match path.status {
        PathStatus::Absorbed => -y0 + integral,
        PathStatus::HorizonCapped => path.sojourns.last().map_or(0.0, |s| u[s.state]) - y0 + integral,
    };
    out.resize(times.len(), frozen);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleCheckConfig {
    pub paths: usize,
    pub seed: u64,
    /// Increment lag `h`; defaults to `1 / max λ`.
    pub lag: Option<f64>,
    /// Checkpoints in units of the lag.
    pub checkpoints: Vec<f64>,
    /// Start nodes; all nodes when absent.
    pub starts: Option<Vec<usize>>,
    pub gate: f64,
}

impl Default for MartingaleCheckConfig {
    fn default() -> Self {
        Self { paths: 100_000, seed: 0, lag: None, checkpoints: vec![0.0, 2.0, 8.0, 32.0], starts: None, gate: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MartingaleEntry {
    pub start: usize,
    pub time: f64,
    pub estimate: f64,
    pub se: f64,
    /// `|estimate| / se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MartingaleReport {
    pub entries: Vec<MartingaleEntry>,
    pub max_z: f64,
    pub gate: f64,
    pub lag: f64,
}

impl MartingaleReport {
    /// Every increment estimate is within `gate` standard errors of zero.
    pub fn passes(&self) -> bool {
        self.max_z <= self.gate
    }
}

/// Monte Carlo test of the martingale property of `M` for `Y = u(X)`:
/// estimates `E_x[M_{t+h} − M_t]` at each checkpoint and start node.
pub fn martingale_residual_check(
    chain: &Chain,
    u: &[f64],
    driver: &Driver,
    mu: &SignedMeasure,
    cfg: &MartingaleCheckConfig,
) -> Result<MartingaleReport, McError> {
    let n = chain.len();
    for len in [u.len(), driver.len(), mu.len()] {
        if len != n {
            return Err(McError::DimensionMismatch { expected: n, found: len });
        }
    }
    if cfg.paths < 2 {
        return Err(McError::TooFewPaths(cfg.paths));
    }
    let max_rate = chain.exit_rates().iter().copied().fold(0.0, f64::max);
    let lag = cfg.lag.unwrap_or(if max_rate > 0.0 { 1.0 / max_rate } else { 1.0 });
    if !(lag > 0.0) {
        return Err(McError::BadHorizon(lag));
    }
    let starts: Vec<usize> = cfg.starts.clone().unwrap_or_else(|| (0..n).collect());
    if let Some(&node) = starts.iter().find(|&&x| x >= n) {
        return Err(McError::BadStart { node, n });
    }
    let mut times: Vec<f64> = Vec::new();
    for &c in &cfg.checkpoints {
        times.push(c * lag);
        times.push(c * lag + lag);
    }
    let order = {
        let mut idx: Vec<usize> = (0..times.len()).collect();
        idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        idx
    };
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let horizon = sorted.last().copied().unwrap_or(lag) + lag;
    let f_u = driver.eval_vec(u);
    let rho: Vec<f64> = mu.masses().iter().zip(chain.measure()).map(|(a, m)| a / m).collect();

    let mut entries = Vec::new();
    for (si, &x0) in starts.iter().enumerate() {
        let stream_base = (si as u64) << 32;
        let samples: Vec<Vec<f64>> = (0..cfg.paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(cfg.seed, stream_base + i as u64);
                let path = chain.sample_with(x0, &mut rng, horizon);
                let vals = martingale_at(&path, u, &f_u, &rho, &sorted);
                let mut by_time = vec![0.0; times.len()];
                for (k, &i) in order.iter().enumerate() {
                    by_time[i] = vals[k];
                }
                by_time
            })
            .collect();
        for (c, &cp) in cfg.checkpoints.iter().enumerate() {
            let diffs: Vec<f64> = samples.iter().map(|s| s[2 * c + 1] - s[2 * c]).collect();
            let (estimate, se) = mean_and_se(&diffs);
            let z = if estimate == 0.0 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                estimate.abs() / se
            };
            entries.push(MartingaleEntry { start: x0, time: cp * lag, estimate, se, z });
        }
    }
    let max_z = entries.iter().map(|e| e.z).fold(0.0, f64::max);
    Ok(MartingaleReport { entries, max_z, gate: cfg.gate, lag })
}
