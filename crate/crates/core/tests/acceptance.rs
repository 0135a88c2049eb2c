//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirichlet_fk::bsde::{
    martingale_residual_check, solve_random_horizon_ladder, yosida_regularize, Driver, LadderConfig,
    MartingaleCheckConfig, YosidaGrid,
};
use dirichlet_fk::catalog::{build_catalog_problem, Problem, CATALOG_IDS};
use dirichlet_fk::elliptic::{
    solve_elliptic_gauss_seidel, solve_elliptic_mc, EllipticSolution, GaussSeidelConfig, McSolveConfig, Method,
};
use dirichlet_fk::form::{clamp_level, level_slice, DirichletForm, StateSpace, WeightMatrix};
use dirichlet_fk::markov::{revuz_check, Chain};
use dirichlet_fk::measure::SignedMeasure;
use dirichlet_fk::random::random_problem;

type Outcome = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn laplacian(form: &DirichletForm) -> DMatrix<f64> {
    let n = form.len();
    DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            (0..n).filter(|&z| z != x).map(|z| form.weight(x, z)).sum::<f64>() + form.killing()[x]
        } else {
            -form.weight(x, y)
        }
    })
}

fn green_matrix(form: &DirichletForm) -> DMatrix<f64> {
    laplacian(form).try_inverse().expect("transient form")
}

fn energy(form: &DirichletForm, v: &[f64]) -> f64 {
    let n = form.len();
    let mut e = 0.0;
    for x in 0..n {
        for y in x + 1..n {
            e += form.weight(x, y) * (v[x] - v[y]).powi(2);
        }
        e += form.killing()[x] * v[x] * v[x];
    }
    e
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gs(form: &DirichletForm, driver: &Driver, mu: &SignedMeasure) -> EllipticSolution {
    solve_elliptic_gauss_seidel(form, driver, mu, &GaussSeidelConfig { tol: 1e-13, ..Default::default() })
        .expect("Gauss-Seidel solve")
}

fn catalog(id: &str, n: Option<usize>) -> Problem {
    build_catalog_problem(id, n, None).expect("catalog problem")
}

fn square_driver(form: &DirichletForm) -> Driver {
    let coords = form.space().coords().expect("grid coordinates");
    let g = coords.iter().map(|p| 1.0 + 0.5 * (2.0 * PI * p[0]).sin()).collect();
    Driver::OddPower { c: vec![1.0; form.len()], p: 2.0, g }
}

/// Randomized suite shared by the comparison and estimate criteria.
fn random_suite() -> Vec<(DirichletForm, Driver, SignedMeasure)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_261_016);
    (0..200)
        .map(|_| {
            let n = rng.random_range(5..=50);
            random_problem(&mut rng, n)
        })
        .collect()
}

fn example_diagonal() -> Outcome {
    let p = catalog("diag-5.7", None);
    let sol = gs(&p.form, &p.driver, &p.mu);
    let coords = p.form.space().coords().unwrap();
    let err = sol.u.iter().zip(coords).map(|(u, x)| (u * x[0].abs() - 1.0).abs()).fold(0.0, f64::max);
    (err <= 1e-10, format!("max |u|x| - 1| = {err:.3e}"))
}

fn three_way_agreement() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for id in ["lap1d-dirac", "divform-b", "frac-a10", "perturbed-g"] {
        let p = catalog(id, None);
        let driver = square_driver(&p.form);
        let g = gs(&p.form, &driver, &p.mu);
        let ladder = solve_random_horizon_ladder(&p.form, &driver, &p.mu, &LadderConfig::default()).unwrap();
        let d_ladder = sup_diff(&g.u, ladder.u());

        let small = catalog(id, Some(16));
        let driver = square_driver(&small.form);
        let g16 = gs(&small.form, &driver, &small.mu);
        let mc = solve_elliptic_mc(&small.form, &driver, &small.mu, &McSolveConfig::default()).unwrap();
        let d_mc = sup_diff(&g16.u, &mc.u);
        let se = mc.max_se().unwrap();
        ok &= d_ladder <= 1e-6 && d_mc <= 3.0 * se;
        detail.push(format!("{id}: ladder {d_ladder:.1e}, mc {d_mc:.1e} <= 3*{se:.1e}"));
    }
    (ok, detail.join("; "))
}

fn comparison_principle(suite: &[(DirichletForm, Driver, SignedMeasure)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (form, driver, mu) in suite {
        let bump: Vec<f64> =
            (0..form.len()).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let mu2 = mu.plus(&SignedMeasure::new(bump).unwrap());
        let (u1, u2) = (gs(form, driver, mu), gs(form, driver, &mu2));
        let excess = u1.u.iter().zip(&u2.u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(excess);
        if excess > 1e-10 {
            violations += 1;
        }
    }
    (violations == 0, format!("{violations} violations, max(u1 - u2) = {worst:.2e}"))
}

fn l1_estimate(suite: &[(DirichletForm, Driver, SignedMeasure)]) -> Outcome {
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for (form, driver, mu) in suite {
        let sol = gs(form, driver, mu);
        let m = form.measure();
        let lhs: f64 = (0..form.len()).map(|x| m[x] * sol.f_u[x].abs()).sum();
        let rhs: f64 = (0..form.len()).map(|x| m[x] * driver.eval(x, 0.0).abs() + mu.mass(x).abs()).sum();
        min_slack = min_slack.min(rhs - lhs);
        if lhs > rhs + 1e-9 {
            violations += 1;
        }
    }
    (violations == 0, format!("{violations} violations, min slack {min_slack:.3e}"))
}

fn energy_estimates(suite: &[(DirichletForm, Driver, SignedMeasure)]) -> Outcome {
    let mut min_slack = f64::INFINITY;
    let mut rows = 0;
    for (form, driver, mu) in suite {
        let sol = gs(form, driver, mu);
        let m = form.measure();
        let sup = sol.u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mass: f64 = (0..form.len()).map(|x| m[x] * sol.f_u[x].abs() + mu.mass(x).abs()).sum();
        let mut k = 0.0;
        while k <= 2.0 * sup {
            let t: Vec<f64> = sol.u.iter().map(|&r| r.clamp(-k, k)).collect();
            let phi: Vec<f64> = sol.u.iter().map(|&r| (r - r.clamp(-k, k)).clamp(-1.0, 1.0)).collect();
            debug_assert_eq!(t, sol.u.iter().map(|&r| clamp_level(k, r)).collect::<Vec<_>>());
            debug_assert_eq!(phi, sol.u.iter().map(|&r| level_slice(k, r)).collect::<Vec<_>>());
            let tail: f64 = (0..form.len())
                .filter(|&x| sol.u[x].abs() >= k)
                .map(|x| m[x] * sol.f_u[x].abs() + mu.mass(x).abs())
                .sum();
            min_slack = min_slack.min(k * mass - energy(form, &t)).min(tail - energy(form, &phi));
            rows += 1;
            k += 0.25;
        }
    }
    (min_slack >= -1e-9, format!("{rows} levels, min slack {min_slack:.3e}"))
}

fn duality_identity() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for id in CATALOG_IDS {
        let p = catalog(id, None);
        if !p.form.is_transient().0 {
            continue;
        }
        let sol = gs(&p.form, &p.driver, &p.mu);
        let green = green_matrix(&p.form);
        let m = p.form.measure();
        let residuals = |s: &EllipticSolution| -> Vec<f64> {
            let data = DVector::from_fn(p.form.len(), |x, _| m[x] * s.f_u[x] + p.mu.mass(x));
            let rhs = &green * data;
            s.u.iter().zip(rhs.iter()).map(|(a, b)| (a - b).abs()).collect()
        };
        let max_res = residuals(&sol).into_iter().fold(0.0, f64::max);
        let mut min_perturbed = f64::INFINITY;
        for j in 0..p.form.len() {
            let mut u = sol.u.clone();
            u[j] += 1e-2;
            let bumped = EllipticSolution::from_vector(&p.form, &p.driver, &p.mu, u, Method::GaussSeidel).unwrap();
            min_perturbed = min_perturbed.min(residuals(&bumped).into_iter().fold(0.0, f64::max));
        }
        ok &= max_res <= 1e-9 && min_perturbed > 1e-3;
        detail.push(format!("{id}: {max_res:.1e}/{min_perturbed:.1e}"));
    }
    (ok, format!("residual/perturbed: {}", detail.join(", ")))
}

fn revuz_correspondence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let n = rng.random_range(3..=20);
        let (form, _, _) = random_problem(&mut rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = SignedMeasure::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let report = revuz_check(&Chain::new(&form), &f, &mu, 0.01, 100_000, 100 + i).unwrap();
        worst = worst.max(report.deviation() / (3.0 * report.se + report.bias_bound));
        if !report.passes(3.0) {
            failures += 1;
        }
    }
    (failures == 0, format!("{failures} failures, worst deviation/gate {worst:.2}"))
}

fn martingale_property() -> Outcome {
    let mut problems = Vec::new();
    let lap = catalog("lap1d-dirac", Some(16));
    problems.push(("lap1d-dirac", lap.form.clone(), square_driver(&lap.form), lap.mu.clone()));
    let lap2 = catalog("lap2d", Some(4));
    problems.push(("lap2d", lap2.form, lap2.driver, lap2.mu));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let n = rng.random_range(4..=10);
        let (form, driver, mu) = random_problem(&mut rng, n);
        problems.push(("random", form, driver, mu));
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (name, form, driver, mu)) in problems.iter().enumerate() {
        let sol = gs(form, driver, mu);
        let chain = Chain::new(form);
        let cfg = MartingaleCheckConfig { seed: 40 + i as u64, ..Default::default() };
        let truth = martingale_residual_check(&chain, &sol.u, driver, mu, &cfg).unwrap();
        let mut bumped = sol.u.clone();
        bumped[form.len() / 2] += 0.1;
        let wrong = martingale_residual_check(&chain, &bumped, driver, mu, &cfg).unwrap();
        ok &= truth.max_z <= 4.0 && wrong.max_z > 4.0;
        detail.push(format!("{name}: z {:.2} / {:.1}", truth.max_z, wrong.max_z));
    }
    (ok, detail.join(", "))
}

fn ladder_convergence() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for id in CATALOG_IDS {
        let p = catalog(id, None);
        let ladder = solve_random_horizon_ladder(&p.form, &p.driver, &p.mu, &LadderConfig::default()).unwrap();
        let reference = gs(&p.form, &p.driver, &p.mu);
        let diff = sup_diff(ladder.u(), &reference.u);
        let monotone = ladder.increments_nonincreasing_after_deactivation(1e-12);
        ok &= monotone && diff <= 1e-6;
        detail.push(format!("{id}: diff {diff:.1e}, monotone {monotone}, levels {}", ladder.trace.len()));
    }
    (ok, detail.join("; "))
}

fn yosida_properties() -> Outcome {
    let drivers = [
        ("cube", Driver::OddPower { c: vec![1.0], p: 3.0, g: vec![0.0] }),
        ("sqrt", Driver::OddPower { c: vec![1.0], p: 0.5, g: vec![0.0] }),
        ("affine", Driver::Affine { a: vec![0.3], b: vec![-2.5] }),
    ];
    let grid = YosidaGrid { radius: 4.0, delta: 4.0 / 4096.0 };
    let ys: Vec<f64> = (0..=8192).map(|i| -grid.radius + i as f64 * grid.delta).collect();
    let compact: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].abs() <= 2.0).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, f) in &drivers {
        let mut prev: Option<Vec<f64>> = None;
        let mut prev_gap = f64::INFINITY;
        let mut worst_ratio = 0.0_f64;
        let mut order_ok = true;
        let mut gap_ok = true;
        for n in 1..=64 {
            let fnd = yosida_regularize(f, n as f64, grid).unwrap();
            let vals: Vec<f64> = ys.iter().map(|&y| fnd.eval(0, y)).collect();
            for (i, &y) in ys.iter().enumerate() {
                order_ok &= vals[i] <= f.eval(0, y) + 1e-12;
                if let Some(p) = &prev {
                    order_ok &= p[i] <= vals[i] + 1e-12;
                }
            }
            for w in compact.windows(2) {
                let ratio = (vals[w[1]] - vals[w[0]]).abs() / (ys[w[1]] - ys[w[0]]);
                worst_ratio = worst_ratio.max(ratio / n as f64);
            }
            let gap = compact.iter().map(|&i| f.eval(0, ys[i]) - vals[i]).fold(0.0, f64::max);
            gap_ok &= gap <= prev_gap + 1e-12;
            prev_gap = gap;
            prev = Some(vals);
        }
        let lip_ok = worst_ratio <= 1.0 + 1e-9;
        ok &= order_ok && lip_ok && gap_ok;
        detail.push(format!("{name}: order {order_ok}, lip ratio/n {worst_ratio:.6}, gap decreasing {gap_ok}"));
    }
    (ok, detail.join("; "))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn grid_convergence() -> Outcome {
    let exact = |x: f64| x.min(0.5) * (1.0 - x.max(0.5));
    let mut errors = Vec::new();
    for n in [64, 128, 256, 512] {
        let p = catalog("lap1d-dirac", Some(n));
        let u = green_matrix(&p.form) * DVector::from_column_slice(p.mu.masses());
        let coords = p.form.space().coords().unwrap();
        errors.push(u.iter().zip(coords).map(|(v, x)| (v - exact(x[0])).abs()).fold(0.0, f64::max));
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|o| (0.75..=1.25).contains(o));

    let p = catalog("frac-a10", Some(512));
    let exit = green_matrix(&p.form) * DVector::from_column_slice(p.form.measure());
    let coords = p.form.space().coords().unwrap();
    let band = p.form.len() / 10;
    let nodes: Vec<usize> = (0..band).chain(p.form.len() - band..p.form.len()).collect();
    let lx: Vec<f64> = nodes.iter().map(|&i| (1.0 - coords[i][0].powi(2)).ln()).collect();
    let ly: Vec<f64> = nodes.iter().map(|&i| exit[i].ln()).collect();
    let exponent = slope(&lx, &ly);
    let exp_ok = (0.4..=0.6).contains(&exponent);
    (
        order_ok && exp_ok,
        format!("lap1d orders {orders:.3?}, fractional boundary exponent {exponent:.4}"),
    )
}

fn transience_classifier() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut disagreements = 0;
    let (mut transient, mut killing_free, mut multi) = (0, 0, 0);
    for i in 0..100 {
        let n = rng.random_range(2..=20);
        let edge_p = [0.05, 0.15, 0.5][i % 3];
        let kill_p = [0.0, 0.05, 0.3, 0.8][i % 4];
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(edge_p) {
                    edges.push((a, b, rng.random_range(0.1..3.0)));
                }
            }
        }
        let k: Vec<f64> = (0..n).map(|_| if rng.random_bool(kill_p) { rng.random_range(0.1..2.0) } else { 0.0 }).collect();
        if k.iter().all(|&v| v == 0.0) {
            killing_free += 1;
        }
        let form = DirichletForm::new(StateSpace::new(m).unwrap(), WeightMatrix::from_edges(n, &edges), k).unwrap();
        if form.components().len() > 1 {
            multi += 1;
        }
        let lap = laplacian(&form);
        let scale = lap.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let probe = SymmetricEigen::new(lap).eigenvalues.min() > 1e-10 * scale;
        let claimed = form.is_transient().0;
        transient += claimed as usize;
        if claimed != probe {
            disagreements += 1;
        }
    }
    (
        disagreements == 0,
        format!("{disagreements} disagreements ({transient} transient, {killing_free} killing-free, {multi} multi-component)"),
    )
}

fn main() {
    let suite = random_suite();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 diagonal example exactness", Box::new(example_diagonal)),
        ("2 three-way solver agreement", Box::new(three_way_agreement)),
        ("3 comparison principle", Box::new(|| comparison_principle(&suite))),
        ("4 L1 estimate", Box::new(|| l1_estimate(&suite))),
        ("5 energy estimates", Box::new(|| energy_estimates(&suite))),
        ("6 duality identity", Box::new(duality_identity)),
        ("7 Revuz correspondence", Box::new(revuz_correspondence)),
        ("8 martingale property", Box::new(martingale_property)),
        ("9 random-horizon ladder", Box::new(ladder_convergence)),
        ("10 Yosida ladder properties", Box::new(yosida_properties)),
        ("11 grid convergence", Box::new(grid_convergence)),
        ("12 transience classifier", Box::new(transience_classifier)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {name} ({:.1}s): {detail}", start.elapsed().as_secs_f64());
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
