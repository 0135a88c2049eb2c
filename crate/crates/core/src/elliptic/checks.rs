//! Identities and a priori estimates satisfied by solutions.

use serde::Serialize;

use crate::bsde::Driver;
use crate::form::{clamp_level, level_slice, DirichletForm, FormError};
use crate::linalg::sup_norm;
use crate::measure::SignedMeasure;

use super::{defect, EllipticError, EllipticSolution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    /// One residual per test measure.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `|⟨ν, u⟩ − (f_u, Uν)_{L²(m)} − ⟨μ, Uν⟩|` for each test measure `ν`
/// (every Dirac measure when `tests` is `None`).
pub fn duality_check(
    form: &DirichletForm,
    solution: &EllipticSolution,
    mu: &SignedMeasure,
    tests: Option<&[SignedMeasure]>,
    tol: f64,
) -> Result<DualityReport, EllipticError> {
    let n = form.len();
    form.check_len("solution", solution.u.len())?;
    form.check_len("measure", mu.len())?;
    let fac = form.factor(0.0)?;
    let m = form.measure();
    let data: Vec<f64> = (0..n).map(|x| m[x] * solution.f_u[x] + mu.mass(x)).collect();
    let residual = |nu: &[f64]| -> f64 {
        let potential = fac.solve(nu);
        let lhs: f64 = nu.iter().zip(&solution.u).map(|(a, b)| a * b).sum();
        let rhs: f64 = data.iter().zip(&potential).map(|(a, b)| a * b).sum();
        (lhs - rhs).abs()
    };
    let residuals: Vec<f64> = match tests {
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for nu in list {
                form.check_len("test measure", nu.len())?;
                out.push(residual(nu.masses()));
            }
            out
        }
        None => (0..n)
            .map(|x| {
                let mut nu = vec![0.0; n];
                nu[x] = 1.0;
                residual(&nu)
            })
            .collect(),
    };
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(DualityReport { residuals, max_residual, tol, pass: max_residual <= tol })
}

/// `‖L u − M f_u − μ‖_∞`, i.e. the weak form tested against every basis vector.
pub fn weak_form_check(form: &DirichletForm, solution: &EllipticSolution, mu: &SignedMeasure) -> Result<f64, FormError> {
    form.check_len("solution", solution.u.len())?;
    form.check_len("measure", mu.len())?;
    Ok(sup_norm(&defect(form, &solution.u, &solution.f_u, mu)))
}

/// A scalar inequality `lhs <= rhs + tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub pass: bool,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { lhs, rhs, slack: rhs - lhs, pass: lhs <= rhs + tol }
    }
}

/// `Σ m|f(·, u)| <= Σ m|f(·, 0)| + ‖μ‖_TV`.
pub fn l1_bound_check(
    solution: &EllipticSolution,
    driver: &Driver,
    mu: &SignedMeasure,
    m: &[f64],
    tol: f64,
) -> Result<BoundReport, FormError> {
    let n = m.len();
    for (what, len) in [("solution", solution.u.len()), ("driver", driver.len()), ("measure", mu.len())] {
        if len != n {
            return Err(FormError::DimensionMismatch { what, expected: n, found: len });
        }
    }
    let lhs: f64 = (0..n).map(|x| m[x] * driver.eval(x, solution.u[x]).abs()).sum();
    let rhs: f64 = (0..n).map(|x| m[x] * driver.eval(x, 0.0).abs()).sum::<f64>() + mu.total_variation();
    Ok(BoundReport::new(lhs, rhs, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationRow {
    pub k: f64,
    pub energy: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub rows: Vec<TruncationRow>,
    /// Both sides vanish for every `k > ‖u‖_∞` (vanishing-energy report only).
    pub vanishes_beyond_sup: Option<bool>,
}

impl TruncationReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.vanishes_beyond_sup != Some(false)
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

fn check_ks(ks: &[f64]) -> Result<(), EllipticError> {
    match ks.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
        Some(k) => Err(EllipticError::InvalidParameter(format!("truncation levels must be finite and >= 0, got {k}"))),
        None => Ok(()),
    }
}

/// `E(T_k u, T_k u) <= k (‖f_u‖_{L¹(m)} + ‖μ‖_TV)` for each `k`.
pub fn truncation_energy_check(
    form: &DirichletForm,
    solution: &EllipticSolution,
    mu: &SignedMeasure,
    ks: &[f64],
    tol: f64,
) -> Result<TruncationReport, EllipticError> {
    check_ks(ks)?;
    form.check_len("measure", mu.len())?;
    let m = form.measure();
    let mass: f64 = (0..form.len()).map(|x| m[x] * solution.f_u[x].abs()).sum::<f64>() + mu.total_variation();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let t: Vec<f64> = solution.u.iter().map(|&r| clamp_level(k, r)).collect();
        let energy = form.energy(&t, &t)?;
        let bound = k * mass;
        rows.push(TruncationRow { k, energy, bound, slack: bound - energy, pass: energy <= bound + tol });
    }
    Ok(TruncationReport { rows, vanishes_beyond_sup: None })
}

/// `E(Φ_k u, Φ_k u) <= Σ_{|u| >= k} (m|f_u| + |μ|)` for each `k`, where
/// `Φ_k(r) = T_1(r − T_k(r))`.
pub fn vanishing_energy_check(
    form: &DirichletForm,
    solution: &EllipticSolution,
    mu: &SignedMeasure,
    ks: &[f64],
    tol: f64,
) -> Result<TruncationReport, EllipticError> {
    check_ks(ks)?;
    form.check_len("measure", mu.len())?;
    let m = form.measure();
    let sup = sup_norm(&solution.u);
    let mut rows = Vec::with_capacity(ks.len());
    let mut vanishes = true;
    for &k in ks {
        let phi: Vec<f64> = solution.u.iter().map(|&r| level_slice(k, r)).collect();
        let energy = form.energy(&phi, &phi)?;
        let bound: f64 = (0..form.len())
            .filter(|&x| solution.u[x].abs() >= k)
            .map(|x| m[x] * solution.f_u[x].abs() + mu.mass(x).abs())
            .sum();
        if k > sup && (energy != 0.0 || bound != 0.0) {
            vanishes = false;
        }
        rows.push(TruncationRow { k, energy, bound, slack: bound - energy, pass: energy <= bound + tol });
    }
    Ok(TruncationReport { rows, vanishes_beyond_sup: Some(vanishes) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvReport {
    pub hypothesis_met: bool,
    pub reason: Option<String>,
    pub tv1: f64,
    pub tv2: f64,
    /// Absent when the hypotheses fail.
    pub pass: Option<bool>,
}

/// For nonnegative `μ₁`, `μ₂` with `Uμ₁ <= Uμ₂`, checks `‖μ₁‖_TV <= ‖μ₂‖_TV`.
pub fn tv_comparison_check(
    form: &DirichletForm,
    mu1: &SignedMeasure,
    mu2: &SignedMeasure,
    tol: f64,
) -> Result<TvReport, EllipticError> {
    form.check_len("measure", mu1.len())?;
    form.check_len("measure", mu2.len())?;
    let (tv1, tv2) = (mu1.total_variation(), mu2.total_variation());
    let fail = |reason: &str| TvReport { hypothesis_met: false, reason: Some(reason.into()), tv1, tv2, pass: None };
    if !mu2.is_nonnegative() {
        return Ok(fail("second measure is not nonnegative"));
    }
    if !mu1.is_nonnegative() {
        return Ok(fail("first measure is not nonnegative"));
    }
    let fac = form.factor(0.0)?;
    let (p1, p2) = (fac.solve(mu1.masses()), fac.solve(mu2.masses()));
    if p1.iter().zip(&p2).any(|(a, b)| a > b) {
        return Ok(fail("potential order fails"));
    }
    Ok(TvReport { hypothesis_met: true, reason: None, tv1, tv2, pass: Some(tv1 <= tv2 + tol) })
}

/// `Σ m|u| <= (|f_u|, U1)_{L²(m)} + ⟨|μ|, U1⟩` with `U1 = L⁻¹ M 1`.
pub fn green_bound_check(
    form: &DirichletForm,
    solution: &EllipticSolution,
    mu: &SignedMeasure,
    tol: f64,
) -> Result<BoundReport, FormError> {
    form.check_len("measure", mu.len())?;
    let u1 = form.green(&vec![1.0; form.len()])?;
    let m = form.measure();
    let lhs: f64 = (0..form.len()).map(|x| m[x] * solution.u[x].abs()).sum();
    let rhs: f64 = (0..form.len()).map(|x| (m[x] * solution.f_u[x].abs() + mu.mass(x).abs()) * u1[x]).sum();
    Ok(BoundReport::new(lhs, rhs, tol))
}

#[cfg(test)]
mod tests {
    use crate::random::random_problem;
    use super::super::{solve_elliptic_gauss_seidel, GaussSeidelConfig, Method};
    use super::*;
    use crate::form::{StateSpace, WeightMatrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lap(n: usize) -> DirichletForm {
        let h = 1.0 / n as f64;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0 / h)).collect();
        let mut k = vec![0.0; n];
        k[0] = 1.0 / h;
        k[n - 1] = 1.0 / h;
        DirichletForm::new(StateSpace::new(vec![h; n]).unwrap(), WeightMatrix::from_edges(n, &edges), k).unwrap()
    }

    fn gs(form: &DirichletForm, d: &Driver, mu: &SignedMeasure) -> EllipticSolution {
        solve_elliptic_gauss_seidel(form, d, mu, &GaussSeidelConfig { tol: 1e-13, ..Default::default() }).unwrap()
    }

    #[test]
    fn duality_of_linear_solution() {
        let form = lap(16);
        let mu = SignedMeasure::dirac(16, 8, 1.0);
        let u = form.potential(&mu, 0.0).unwrap();
        let sol = EllipticSolution::from_vector(&form, &Driver::zero(16), &mu, u, Method::GaussSeidel).unwrap();
        let rep = duality_check(&form, &sol, &mu, None, 1e-9).unwrap();
        assert!(rep.pass, "{}", rep.max_residual);
        assert_eq!(rep.residuals.len(), 16);
    }

    #[test]
    fn duality_detects_perturbation() {
        let form = lap(16);
        let mu = SignedMeasure::dirac(16, 8, 1.0);
        let mut u = form.potential(&mu, 0.0).unwrap();
        u[3] += 1e-2;
        let sol = EllipticSolution::from_vector(&form, &Driver::zero(16), &mu, u, Method::GaussSeidel).unwrap();
        let rep = duality_check(&form, &sol, &mu, None, 1e-9).unwrap();
        assert!((rep.residuals[3] - 1e-2).abs() < 1e-12);
        assert!(!rep.pass);
    }

    #[test]
    fn duality_zero_problem() {
        let form = lap(5);
        let mu = SignedMeasure::zeros(5);
        let sol = EllipticSolution::from_vector(&form, &Driver::zero(5), &mu, vec![0.0; 5], Method::GaussSeidel).unwrap();
        let rep = duality_check(&form, &sol, &mu, None, 1e-9).unwrap();
        assert!(rep.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn duality_requires_transience() {
        let form = DirichletForm::new(StateSpace::new(vec![1.0]).unwrap(), WeightMatrix::zeros(1), vec![0.0]).unwrap();
        let mu = SignedMeasure::zeros(1);
        let sol = EllipticSolution::from_vector(&form, &Driver::zero(1), &mu, vec![0.0], Method::GaussSeidel).unwrap();
        assert!(duality_check(&form, &sol, &mu, None, 1e-9).is_err());
    }

    #[test]
    fn weak_form_of_zero_is_mass() {
        let form = lap(6);
        let mu = SignedMeasure::new(vec![0.0, -3.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        let sol = EllipticSolution::from_vector(&form, &Driver::zero(6), &mu, vec![0.0; 6], Method::GaussSeidel).unwrap();
        assert_eq!(weak_form_check(&form, &sol, &mu).unwrap(), 3.0);
        let u = vec![0.3, -1.0, 2.0, 0.1, 0.0, 5.0];
        let drv = Driver::OddPower { c: vec![1.0; 6], p: 3.0, g: vec![0.5; 6] };
        let sol = EllipticSolution::from_vector(&form, &drv, &mu, u.clone(), Method::GaussSeidel).unwrap();
        assert_eq!(weak_form_check(&form, &sol, &mu).unwrap().to_bits(), sol.residual.to_bits());
    }

    #[test]
    fn l1_bound_examples() {
        let form = lap(10);
        let mu = SignedMeasure::dirac(10, 4, 2.0);
        let g = vec![0.5; 10];
        let src = Driver::source(g);
        let sol = gs(&form, &src, &mu);
        let rep = l1_bound_check(&sol, &src, &mu, form.measure(), 1e-9).unwrap();
        assert!((rep.slack - 2.0).abs() < 1e-12);
        let damp = Driver::Affine { a: vec![0.0; 10], b: vec![-1.0; 10] };
        let sol = gs(&form, &damp, &mu);
        assert!(sol.u.iter().all(|&v| v >= 0.0));
        let rep = l1_bound_check(&sol, &damp, &mu, form.measure(), 1e-9).unwrap();
        let lhs: f64 = sol.u.iter().zip(form.measure()).map(|(u, m)| u * m).sum();
        assert!((rep.lhs - lhs).abs() < 1e-14);
        assert!(rep.pass);
    }

    #[test]
    fn truncation_energy_on_laplacian() {
        let form = lap(32);
        let mu = SignedMeasure::dirac(32, 16, 1.0);
        let sol = gs(&form, &Driver::zero(32), &mu);
        let ks: Vec<f64> = (0..=10).map(|j| 0.1 * j as f64).collect();
        let rep = truncation_energy_check(&form, &sol, &mu, &ks, 1e-9).unwrap();
        assert!(rep.pass());
        assert_eq!(rep.rows[0].energy, 0.0);
        assert_eq!(rep.rows[0].bound, 0.0);
        let big = truncation_energy_check(&form, &sol, &mu, &[10.0], 1e-9).unwrap();
        let full = form.energy(&sol.u, &sol.u).unwrap();
        assert_eq!(big.rows[0].energy, full);
    }

    #[test]
    fn vanishing_energy_examples() {
        let form = lap(12);
        let mu = SignedMeasure::dirac(12, 5, 3.0);
        let drv = Driver::OddPower { c: vec![1.0; 12], p: 3.0, g: vec![0.2; 12] };
        let sol = gs(&form, &drv, &mu);
        let sup = sup_norm(&sol.u);
        let rep = vanishing_energy_check(&form, &sol, &mu, &[0.0, 0.5 * sup, 2.0 * sup], 1e-9).unwrap();
        assert!(rep.pass());
        assert_eq!(rep.vanishes_beyond_sup, Some(true));
        let total: f64 = (0..12).map(|x| form.measure()[x] * sol.f_u[x].abs()).sum::<f64>() + 3.0;
        assert!((rep.rows[0].bound - total).abs() < 1e-12);
        assert_eq!(rep.rows[2].energy, 0.0);
    }

    #[test]
    fn tv_examples() {
        let form = lap(8);
        let mu2 = SignedMeasure::new(vec![0.0, 1.0, 0.5, 0.0, 0.0, 2.0, 0.0, 0.1]).unwrap();
        let rep = tv_comparison_check(&form, &mu2, &mu2, 1e-12).unwrap();
        assert_eq!(rep.pass, Some(true));
        assert_eq!(rep.tv1, rep.tv2);
        let rep = tv_comparison_check(&form, &mu2.scaled(0.5), &mu2, 1e-12).unwrap();
        assert_eq!(rep.pass, Some(true));
        assert!((rep.tv1 - 0.5 * rep.tv2).abs() < 1e-15);
        let rep = tv_comparison_check(&form, &mu2, &mu2.scaled(0.5), 1e-12).unwrap();
        assert!(!rep.hypothesis_met);
        let signed = SignedMeasure::new(vec![0.0, 1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(!tv_comparison_check(&form, &signed, &mu2, 1e-12).unwrap().hypothesis_met);
    }

    #[test]
    fn green_bound_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (form, drv, mu) = random_problem(&mut rng, 10);
            let sol = gs(&form, &drv, &mu);
            assert!(green_bound_check(&form, &sol, &mu, 1e-9).unwrap().pass);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn estimates_hold_on_random_problems(seed in any::<u64>(), n in 5usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (form, drv, mu) = random_problem(&mut rng, n);
            let sol = gs(&form, &drv, &mu);
            prop_assert!(l1_bound_check(&sol, &drv, &mu, form.measure(), 1e-9).unwrap().pass);
            let sup = sup_norm(&sol.u);
            let ks: Vec<f64> = (0..=8).map(|j| 0.25 * j as f64 * sup).collect();
            prop_assert!(truncation_energy_check(&form, &sol, &mu, &ks, 1e-9).unwrap().pass());
            prop_assert!(vanishing_energy_check(&form, &sol, &mu, &ks, 1e-9).unwrap().pass());
            prop_assert!(duality_check(&form, &sol, &mu, None, 1e-9).unwrap().pass);
        }

        #[test]
        fn tv_lemma_when_hypothesis_holds(seed in any::<u64>(), eps in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (form, _, _) = random_problem(&mut rng, 8);
            let masses: Vec<f64> = (0..8).map(|i| 0.25 + (i % 3) as f64).collect();
            let mu2 = SignedMeasure::new(masses.clone()).unwrap();
            let mut m1 = masses;
            m1[(seed % 8) as usize] -= eps * 0.25;
            let rep = tv_comparison_check(&form, &SignedMeasure::new(m1).unwrap(), &mu2, 1e-12).unwrap();
            prop_assert!(rep.hypothesis_met);
            prop_assert_eq!(rep.pass, Some(true));
        }
    }
}
