//! The continuous-time Markov chain associated with a finite Dirichlet form.
//!
//! From node `x` the chain waits an exponential time of rate
//! `λ(x) = (Σ_y w_xy + k_x) / m(x)`, then jumps to `y` with rate
//! `w_xy / m(x)` or is killed (sent to the cemetery) with rate `k_x / m(x)`.
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! so Monte Carlo estimates do not depend on thread count or scheduling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use thiserror::Error;

use crate::form::DirichletForm;
use crate::linalg::pairwise_sum;
use crate::measure::SignedMeasure;

#[derive(Debug, Error)]
pub enum McError {
    #[error("at least two paths are required, got {0}")]
    TooFewPaths(usize),
    #[error("start node {node} out of range for {n} nodes")]
    BadStart { node: usize, n: usize },
    #[error("non-finite functional value {value} on path {index}: {path:?}")]
    NonFinite { index: usize, value: f64, path: ChainPath },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("capped path fraction {fraction} exceeds {limit}; the form may not be transient")]
    TooManyCapped { fraction: f64, limit: f64 },
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Jump structure of the chain.
#[derive(Debug, Clone)]
pub struct Chain {
    measure: Vec<f64>,
    exit: Vec<f64>,
    kill: Vec<f64>,
    /// Per node: targets and cumulative jump rates (`q` summed in order).
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
    max_lifetime: Option<f64>,
}

/// How a path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Absorbed,
    HorizonCapped,
}

/// One sojourn of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sojourn {
    pub state: usize,
    pub holding: f64,
}

/// A sampled trajectory: consecutive sojourns, then either killing or the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub start: usize,
    pub sojourns: Vec<Sojourn>,
    pub status: PathStatus,
    /// `ζ`, the sum of holding times, when the path was killed.
    pub lifetime: Option<f64>,
}

impl ChainPath {
    pub fn is_capped(&self) -> bool {
        self.status == PathStatus::HorizonCapped
    }

    /// Elapsed time until killing or the cap.
    pub fn duration(&self) -> f64 {
        self.sojourns.iter().map(|s| s.holding).sum()
    }
}

/// Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub capped_fraction: f64,
}

impl Chain {
    pub fn new(form: &DirichletForm) -> Self {
        let n = form.len();
        let measure = form.measure().to_vec();
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for (x, &mx) in measure.iter().enumerate() {
            let mut acc = 0.0;
            let (t, c): (Vec<usize>, Vec<f64>) = form
                .neighbors(x)
                .iter()
                .map(|&(y, w)| {
                    acc += w / mx;
                    (y, acc)
                })
                .unzip();
            targets.push(t);
            cumulative.push(c);
        }
        let kill: Vec<f64> = (0..n).map(|x| form.killing()[x] / measure[x]).collect();
        let exit = (0..n).map(|x| cumulative[x].last().copied().unwrap_or(0.0) + kill[x]).collect();
        let max_lifetime = if form.is_transient().0 { form.max_expected_lifetime().ok() } else { None };
        Self { measure, exit, kill, targets, cumulative, max_lifetime }
    }

    pub fn len(&self) -> usize {
        self.exit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.exit
    }

    pub fn kill_rate(&self, x: usize) -> f64 {
        self.kill[x]
    }

    pub fn jump_rate(&self, x: usize, y: usize) -> f64 {
        match self.targets[x].iter().position(|&t| t == y) {
            Some(i) => self.cumulative[x][i] - if i == 0 { 0.0 } else { self.cumulative[x][i - 1] },
            None => 0.0,
        }
    }

    /// A node that is never left (no jumps, no killing).
    pub fn is_absorbing_alive(&self, x: usize) -> bool {
        self.exit[x] == 0.0
    }

    /// `(G u)(x) = Σ_y q(x→y)(u(y) − u(x)) − κ(x) u(x)`.
    pub fn generator(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|x| {
                let mut prev = 0.0;
                let mut acc = -self.kill[x] * u[x];
                for (i, &y) in self.targets[x].iter().enumerate() {
                    let q = self.cumulative[x][i] - prev;
                    prev = self.cumulative[x][i];
                    acc += q * (u[y] - u[x]);
                }
                acc
            })
            .collect()
    }

    /// `sup_x E_x ζ` when the form is transient.
    pub fn max_expected_lifetime(&self) -> Option<f64> {
        self.max_lifetime
    }

    /// Default path horizon: `50 · sup_x E_x ζ` on transient forms, otherwise
    /// `50 / min positive λ`.
    pub fn default_horizon(&self) -> f64 {
        if let Some(l) = self.max_lifetime.filter(|l| *l > 0.0) {
            return 50.0 * l;
        }
        let min_rate = self.exit.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
        if min_rate.is_finite() {
            50.0 / min_rate
        } else {
            1.0
        }
    }

    /// Simulates one path, calling `visit(state, holding)` per sojourn.
    /// Returns the terminal status.
    pub fn walk<R: Rng>(&self, x0: usize, rng: &mut R, horizon: f64, mut visit: impl FnMut(usize, f64)) -> PathStatus {
        let mut x = x0;
        let mut elapsed = 0.0;
        loop {
            let rate = self.exit[x];
            if rate == 0.0 {
                visit(x, horizon - elapsed);
                return PathStatus::HorizonCapped;
            }
            let hold: f64 = Exp1.sample(rng);
            let hold = hold / rate;
            if elapsed + hold >= horizon {
                visit(x, horizon - elapsed);
                return PathStatus::HorizonCapped;
            }
            visit(x, hold);
            elapsed += hold;
            let pick = rng.random::<f64>() * rate;
            if pick < self.kill[x] || self.targets[x].is_empty() {
                return PathStatus::Absorbed;
            }
            let threshold = pick - self.kill[x];
            let cum = &self.cumulative[x];
            let i = cum.partition_point(|&c| c <= threshold).min(cum.len() - 1);
            x = self.targets[x][i];
        }
    }

    /// Records one path from `x0` drawing from `rng`.
    pub fn sample_with(&self, x0: usize, rng: &mut ChaCha8Rng, horizon: f64) -> ChainPath {
        let mut sojourns = Vec::new();
        let status = self.walk(x0, rng, horizon, |state, holding| sojourns.push(Sojourn { state, holding }));
        let lifetime = match status {
            PathStatus::Absorbed => Some(sojourns.iter().map(|s| s.holding).sum()),
            PathStatus::HorizonCapped => None,
        };
        ChainPath { start: x0, sojourns, status, lifetime }
    }
}

/// Random stream for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One path from `x0` on stream 0 of `seed`.
pub fn sample_path(chain: &Chain, x0: usize, seed: u64, horizon: f64) -> Result<ChainPath, McError> {
    if x0 >= chain.len() {
        return Err(McError::BadStart { node: x0, n: chain.len() });
    }
    if !(horizon > 0.0) {
        return Err(McError::BadHorizon(horizon));
    }
    Ok(chain.sample_with(x0, &mut path_rng(seed, 0), horizon))
}

/// Paths `0..count` from `x0`, as used by [`mc_expectation`].
pub fn sample_paths(chain: &Chain, x0: usize, count: usize, seed: u64, horizon: f64) -> Vec<ChainPath> {
    (0..count).into_par_iter().map(|i| chain.sample_with(x0, &mut path_rng(seed, i as u64), horizon)).collect()
}

/// Value of the additive functional `A^μ` along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveFunctional {
    /// `A^μ_ζ = Σ holding · ρ(state)`.
    pub value: f64,
    /// The same with `|ρ|`, i.e. the total variation functional.
    pub variation: f64,
    /// The path hit the cap, so `value` covers only `[0, cap]`.
    pub capped: bool,
}

pub fn additive_functional(path: &ChainPath, mu: &SignedMeasure, form: &DirichletForm) -> Result<AdditiveFunctional, McError> {
    if mu.len() != form.len() {
        return Err(McError::DimensionMismatch { expected: form.len(), found: mu.len() });
    }
    let rho = mu.density(form.space());
    let mut value = 0.0;
    let mut variation = 0.0;
    for s in &path.sojourns {
        value += s.holding * rho[s.state];
        variation += s.holding * rho[s.state].abs();
    }
    Ok(AdditiveFunctional { value, variation, capped: path.is_capped() })
}

/// Mean and standard error of a path functional over `count` paths from `x0`.
pub fn mc_expectation<F>(chain: &Chain, x0: usize, functional: F, count: usize, seed: u64, horizon: f64) -> Result<McEstimate, McError>
where
    F: Fn(&ChainPath) -> f64 + Sync,
{
    if count < 2 {
        return Err(McError::TooFewPaths(count));
    }
    if x0 >= chain.len() {
        return Err(McError::BadStart { node: x0, n: chain.len() });
    }
    if !(horizon > 0.0) {
        return Err(McError::BadHorizon(horizon));
    }
    let samples: Vec<(f64, bool)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let path = chain.sample_with(x0, &mut path_rng(seed, i as u64), horizon);
            (functional(&path), path.is_capped())
        })
        .collect();
    if let Some(index) = samples.iter().position(|(v, _)| !v.is_finite()) {
        let path = chain.sample_with(x0, &mut path_rng(seed, index as u64), horizon);
        return Err(McError::NonFinite { index, value: samples[index].0, path });
    }
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let capped = samples.iter().filter(|s| s.1).count();
    let (mean, se) = mean_and_se(&values);
    Ok(McEstimate { mean, se, capped_fraction: capped as f64 / count as f64 })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo check of the Revuz correspondence at a small time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevuzReport {
    /// `(1/t) Ê_m ∫_0^t f(X_s) dA^μ_s`.
    pub estimate: f64,
    pub se: f64,
    /// `⟨f, μ⟩`.
    pub target: f64,
    /// `t · max λ · ‖f‖_∞ · ‖μ‖_TV`.
    pub bias_bound: f64,
}

impl RevuzReport {
    pub fn deviation(&self) -> f64 {
        (self.estimate - self.target).abs()
    }

    /// `|estimate − target| <= gate · SE + bias bound`.
    pub fn passes(&self, gate: f64) -> bool {
        self.deviation() <= gate * self.se + self.bias_bound
    }
}

pub fn revuz_check(
    chain: &Chain,
    f: &[f64],
    mu: &SignedMeasure,
    t: f64,
    count: usize,
    seed: u64,
) -> Result<RevuzReport, McError> {
    let n = chain.len();
    if f.len() != n || mu.len() != n {
        return Err(McError::DimensionMismatch { expected: n, found: f.len().min(mu.len()) });
    }
    if count < 2 {
        return Err(McError::TooFewPaths(count));
    }
    if !(t > 0.0) {
        return Err(McError::BadHorizon(t));
    }
    let target = mu.integrate(f);
    let f_sup = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_rate = chain.exit.iter().copied().fold(0.0, f64::max);
    let bias_bound = t * max_rate * f_sup * mu.total_variation();
    let total: f64 = chain.measure.iter().sum();
    let integrand: Vec<f64> = (0..n).map(|x| f[x] * mu.mass(x) / chain.measure[x]).collect();
    if integrand.iter().all(|&v| v == 0.0) {
        return Ok(RevuzReport { estimate: 0.0, se: 0.0, target, bias_bound });
    }
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &m in &chain.measure {
        acc += m / total;
        cdf.push(acc);
    }
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let u: f64 = rng.random();
            let x0 = cdf.partition_point(|&c| c <= u).min(n - 1);
            let mut acc = 0.0;
            chain.walk(x0, &mut rng, t, |state, hold| acc += hold * integrand[state]);
            acc * total / t
        })
        .collect();
    let (estimate, se) = mean_and_se(&values);
    Ok(RevuzReport { estimate, se, target, bias_bound })
}

/// Writes `(path index, step, state, holding time)` rows.
pub fn write_path_trace<W: Write>(out: W, paths: &[ChainPath]) -> Result<(), McError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "step", "state", "holding"]).map_err(csv_io)?;
    for (p, path) in paths.iter().enumerate() {
        for (k, s) in path.sojourns.iter().enumerate() {
            w.write_record([p.to_string(), k.to_string(), s.state.to_string(), s.holding.to_string()])
                .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> McError {
    McError::Io(std::io::Error::other(e))
}
