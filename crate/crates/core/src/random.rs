//! Random finite forms and problems for property suites.

use rand::Rng;

use crate::bsde::Driver;
use crate::form::{DirichletForm, StateSpace, WeightMatrix};
use crate::measure::SignedMeasure;

/// Random form: masses in `[0.2, 2)`, each edge present with probability 0.4
/// (weight in `[0.1, 3)`), killing at about 30% of nodes. May be recurrent
/// and may have several components.
pub fn random_form<R: Rng>(rng: &mut R, n: usize) -> DirichletForm {
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                edges.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    let k = (0..n).map(|_| if rng.random_bool(0.3) { rng.random_range(0.1..2.0) } else { 0.0 }).collect();
    DirichletForm::new(StateSpace::new(m).unwrap(), WeightMatrix::from_edges(n, &edges), k)
        .expect("generated weights are valid")
}

/// Random transient form (recurrent draws get killing `0.5 m`).
pub fn random_transient_form<R: Rng>(rng: &mut R, n: usize) -> DirichletForm {
    let form = random_form(rng, n);
    if form.is_transient().0 {
        form
    } else {
        form.perturb(&vec![0.5; n]).expect("positive perturbation")
    }
}

/// Random transient problem with driver `g(x) − c(x) y³`, `g ∈ [−2, 2)`,
/// `c ∈ [0, 2)`, and a sparse signed measure.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize) -> (DirichletForm, Driver, SignedMeasure) {
    let form = random_transient_form(rng, n);
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let masses = (0..n).map(|_| if rng.random_bool(0.3) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
    (form, Driver::OddPower { c, p: 3.0, g }, SignedMeasure::new(masses).expect("finite masses"))
}
