//! Monte Carlo Picard iteration for the nonlinear Feynman–Kac formula
//! `u(x) = E_x[∫_0^ζ f(X_t, u(X_t)) dt + A^μ_ζ]`.
//!
//! Both terms only depend on the occupation times of each path, so the paths
//! are sampled once: per start node we keep the mean occupation vector and
//! its second moments, and every Picard step is a matrix product.

use rayon::prelude::*;

use crate::bsde::Driver;
use crate::form::DirichletForm;
use crate::linalg::{sup_diff, sup_norm};
use crate::markov::{path_rng, Chain, McError};
use crate::measure::SignedMeasure;

use super::{require_monotone, Diagnostics, EllipticError, EllipticSolution, Method};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct McSolveConfig {
    pub paths: usize,
    pub seed: u64,
    pub picard_iters: usize,
    /// Picard stopping tolerance on the sup-change.
    pub tol: f64,
    /// Fixed damping `θ`; chosen from the driver slope when absent.
    pub damping: Option<f64>,
    /// Path cap; [`Chain::default_horizon`] when absent.
    pub horizon: Option<f64>,
    /// Abort when more than this fraction of paths hits the cap.
    pub max_capped: f64,
}

impl Default for McSolveConfig {
    fn default() -> Self {
        Self { paths: 100_000, seed: 0, picard_iters: 100_000, tol: 1e-12, damping: None, horizon: None, max_capped: 1e-4 }
    }
}

/// Occupation statistics of the paths from one start node.
struct Occupation {
    mean: Vec<f64>,
    /// Row-major `E[occ occᵀ]`.
    second: Vec<f64>,
    capped: usize,
}

fn occupation(chain: &Chain, x0: usize, cfg: &McSolveConfig, horizon: f64) -> Occupation {
    let n = chain.len();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let stream_base = (x0 as u64) << 32;
    let partial: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; n];
            let mut outer = vec![0.0; n * n];
            let mut capped = 0;
            let mut occ = vec![0.0; n];
            let mut seen: Vec<usize> = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.paths) {
                let mut rng = path_rng(cfg.seed, stream_base + i as u64);
                let status = chain.walk(x0, &mut rng, horizon, |state, hold| {
                    if occ[state] == 0.0 {
                        seen.push(state);
                    }
                    occ[state] += hold;
                });
                if status == crate::markov::PathStatus::HorizonCapped {
                    capped += 1;
                }
                for &a in &seen {
                    sum[a] += occ[a];
                    for &b in &seen {
                        outer[a * n + b] += occ[a] * occ[b];
                    }
                }
                for &a in &seen {
                    occ[a] = 0.0;
                }
                seen.clear();
            }
            (sum, outer, capped)
        })
        .collect();
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n * n];
    let mut capped = 0;
    for (s, o, c) in partial {
        mean.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        second.iter_mut().zip(&o).for_each(|(a, b)| *a += b);
        capped += c;
    }
    let count = cfg.paths as f64;
    mean.iter_mut().for_each(|v| *v /= count);
    second.iter_mut().for_each(|v| *v /= count);
    Occupation { mean, second, capped }
}

/// Monte Carlo solution with per-node standard errors.
pub fn solve_elliptic_mc(
    form: &DirichletForm,
    driver: &Driver,
    mu: &SignedMeasure,
    cfg: &McSolveConfig,
) -> Result<EllipticSolution, EllipticError> {
    form.check_len("driver", driver.len())?;
    form.check_len("measure", mu.len())?;
    if cfg.paths < 2 {
        return Err(McError::TooFewPaths(cfg.paths).into());
    }
    if !(cfg.tol > 0.0) {
        return Err(EllipticError::InvalidParameter(format!("tol must be positive, got {}", cfg.tol)));
    }
    if let Some(theta) = cfg.damping {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(EllipticError::InvalidParameter(format!("damping must lie in (0, 1], got {theta}")));
        }
    }
    require_monotone(driver)?;
    let chain = Chain::new(form);
    let horizon = cfg.horizon.unwrap_or_else(|| chain.default_horizon());
    if !(horizon > 0.0) {
        return Err(McError::BadHorizon(horizon).into());
    }
    let n = form.len();
    let stats: Vec<Occupation> = (0..n).map(|x| occupation(&chain, x, cfg, horizon)).collect();
    let capped: usize = stats.iter().map(|s| s.capped).sum();
    let capped_fraction = capped as f64 / (cfg.paths * n) as f64;
    if capped_fraction > cfg.max_capped {
        return Err(McError::TooManyCapped { fraction: capped_fraction, limit: cfg.max_capped }.into());
    }
    let rho = mu.density(form.space());
    let row_sum = stats.iter().map(|s| s.mean.iter().sum::<f64>()).fold(0.0, f64::max);
    let apply = |u: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = (0..n).map(|y| driver.eval(y, u[y]) + rho[y]).collect();
        stats.iter().map(|s| s.mean.iter().zip(&g).map(|(a, b)| a * b).sum()).collect()
    };
    let mut u = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.picard_iters {
        iterations += 1;
        let theta = cfg.damping.unwrap_or_else(|| {
            let lip = (0..n).map(|x| driver.slope(x, u[x]).abs()).fold(0.0, f64::max);
            1.0 / (1.0 + lip * row_sum)
        });
        let target = apply(&u);
        let next: Vec<f64> = u.iter().zip(&target).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(EllipticError::InvalidParameter("Picard iteration diverged".into()));
        }
        let change = sup_diff(&next, &u);
        u = next;
        if change <= cfg.tol * sup_norm(&u).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        let change = sup_diff(&apply(&u), &u);
        return Err(EllipticError::NotConverged { sweeps: iterations, change, residual: f64::NAN });
    }
    let g: Vec<f64> = (0..n).map(|y| driver.eval(y, u[y]) + rho[y]).collect();
    let count = cfg.paths as f64;
    let se: Vec<f64> = stats
        .iter()
        .map(|s| {
            let m: f64 = s.mean.iter().zip(&g).map(|(a, b)| a * b).sum();
            let mut q = 0.0;
            for a in 0..n {
                if g[a] != 0.0 {
                    q += g[a] * s.second[a * n..(a + 1) * n].iter().zip(&g).map(|(c, d)| c * d).sum::<f64>();
                }
            }
            let var = ((q - m * m) * count / (count - 1.0)).max(0.0);
            (var / count).sqrt()
        })
        .collect();
    let mut sol = EllipticSolution::from_vector(form, driver, mu, u, Method::Mc)?;
    sol.diagnostics = Diagnostics { iterations, se: Some(se), capped_fraction: Some(capped_fraction), ladder: None };
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{StateSpace, WeightMatrix};

    fn chain3() -> DirichletForm {
        let w = WeightMatrix::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        DirichletForm::new(StateSpace::new(vec![1.0, 0.5, 1.0]).unwrap(), w, vec![1.0, 0.0, 2.0]).unwrap()
    }

    #[test]
    fn scalar_lifetime() {
        let form = DirichletForm::new(StateSpace::new(vec![1.0]).unwrap(), WeightMatrix::zeros(1), vec![1.0]).unwrap();
        let sol = solve_elliptic_mc(&form, &Driver::zero(1), &SignedMeasure::dirac(1, 0, 1.0), &McSolveConfig::default())
            .unwrap();
        let se = sol.max_se().unwrap();
        assert!((sol.u[0] - 1.0).abs() <= 3.0 * se, "{} ± {se}", sol.u[0]);
        assert!((se - 1.0 / (1e5f64).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn zero_problem_is_exact() {
        let sol = solve_elliptic_mc(&chain3(), &Driver::zero(3), &SignedMeasure::zeros(3), &McSolveConfig { paths: 100, ..Default::default() })
            .unwrap();
        assert_eq!(sol.u, vec![0.0; 3]);
        assert_eq!(sol.max_se(), Some(0.0));
    }

    #[test]
    fn linear_within_four_se() {
        let form = chain3();
        let g = vec![1.0, -0.5, 0.25];
        let mu = SignedMeasure::new(vec![0.0, 1.0, 0.0]).unwrap();
        let sol = solve_elliptic_mc(&form, &Driver::source(g.clone()), &mu, &McSolveConfig::default()).unwrap();
        let rhs: Vec<f64> = (0..3).map(|x| form.measure()[x] * g[x] + mu.mass(x)).collect();
        let exact = form.potential(&SignedMeasure::new(rhs).unwrap(), 0.0).unwrap();
        assert!(sup_diff(&sol.u, &exact) <= 4.0 * sol.max_se().unwrap());
    }

    #[test]
    fn nonlinear_within_four_se() {
        let form = chain3();
        let drv = Driver::OddPower { c: vec![1.0; 3], p: 2.0, g: vec![1.0, 2.0, 0.5] };
        let mu = SignedMeasure::dirac(3, 1, 0.5);
        let cfg = super::super::GaussSeidelConfig { tol: 1e-13, ..Default::default() };
        let gs = super::super::solve_elliptic_gauss_seidel(&form, &drv, &mu, &cfg).unwrap();
        let mc = solve_elliptic_mc(&form, &drv, &mu, &McSolveConfig { seed: 9, ..Default::default() }).unwrap();
        assert!(sup_diff(&gs.u, &mc.u) <= 4.0 * mc.max_se().unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = McSolveConfig { paths: 5000, seed: 2, ..Default::default() };
        let mu = SignedMeasure::dirac(3, 0, 1.0);
        let a = solve_elliptic_mc(&chain3(), &Driver::zero(3), &mu, &cfg).unwrap();
        let b = solve_elliptic_mc(&chain3(), &Driver::zero(3), &mu, &cfg).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.diagnostics.se, b.diagnostics.se);
    }

    #[test]
    fn non_transient_paths_abort() {
        let w = WeightMatrix::from_edges(2, &[(0, 1, 1.0)]);
        let form = DirichletForm::new(StateSpace::new(vec![1.0; 2]).unwrap(), w, vec![0.0; 2]).unwrap();
        let cfg = McSolveConfig { paths: 100, horizon: Some(10.0), ..Default::default() };
        let err = solve_elliptic_mc(&form, &Driver::zero(2), &SignedMeasure::zeros(2), &cfg);
        assert!(matches!(err, Err(EllipticError::Mc(McError::TooManyCapped { .. }))));
    }
}
