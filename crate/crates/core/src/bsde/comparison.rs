use serde::Serialize;

use crate::measure::SignedMeasure;

use super::{BsdeSolution, Driver};

/// One of the two problems being compared, with its computed solution.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonSide<'a> {
    pub driver: &'a Driver,
    pub mu: &'a SignedMeasure,
    pub u: &'a [f64],
    pub surface: Option<&'a BsdeSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub hypotheses_met: bool,
    /// Why the hypotheses fail, when they do.
    pub reason: Option<String>,
    /// `max (u₁ − u₂)` over nodes and, when given, surface points.
    pub worst_margin: f64,
    /// Verdict; absent when the hypotheses do not hold.
    pub pass: Option<bool>,
}

/// `f₁(x, y) <= f₂(x, y)` at every `(x, y)` given, with slack.
fn drivers_ordered(f1: &Driver, f2: &Driver, points: impl Iterator<Item = (usize, f64)>, slack: f64) -> Option<(usize, f64)> {
    points.into_iter().find(|&(x, y)| f1.eval(x, y) > f2.eval(x, y) + slack)
}

/// Checks `u₁ <= u₂ + tol` (and `v₁ <= v₂ + tol` on the surfaces) under the
/// comparison hypotheses: `μ₁ <= μ₂` and either `f₁(·, u₁) <= f₂(·, u₁)` with
/// `f₂` monotone, or `f₁(·, u₂) <= f₂(·, u₂)` with `f₁` monotone.
pub fn bsde_comparison_check(side1: ComparisonSide<'_>, side2: ComparisonSide<'_>, tol: f64) -> ComparisonReport {
    let fail = |reason: String| ComparisonReport { hypotheses_met: false, reason: Some(reason), worst_margin: f64::NAN, pass: None };
    let n = side1.u.len();
    if [side2.u.len(), side1.mu.len(), side2.mu.len(), side1.driver.len(), side2.driver.len()].iter().any(|&l| l != n) {
        return fail("dimension mismatch".into());
    }
    if let Some(x) = (0..n).find(|&x| side1.mu.mass(x) > side2.mu.mass(x)) {
        return fail(format!("measure order fails at node {x}"));
    }
    let points = |side: &ComparisonSide<'_>| -> Vec<(usize, f64)> {
        let mut pts: Vec<(usize, f64)> = side.u.iter().copied().enumerate().collect();
        if let Some(s) = side.surface {
            for row in &s.values {
                pts.extend(row.iter().copied().enumerate());
            }
        }
        pts
    };
    let forward = side2.driver.is_monotone()
        && drivers_ordered(side1.driver, side2.driver, points(&side1).into_iter(), 0.0).is_none();
    let mirrored = side1.driver.is_monotone()
        && drivers_ordered(side1.driver, side2.driver, points(&side2).into_iter(), 0.0).is_none();
    if !forward && !mirrored {
        return fail("driver order fails along both solutions or the dominating driver is not monotone".into());
    }
    let mut worst = (0..n).map(|x| side1.u[x] - side2.u[x]).fold(f64::NEG_INFINITY, f64::max);
    match (side1.surface, side2.surface) {
        (Some(s1), Some(s2)) => {
            if s1.times != s2.times {
                return fail("parabolic surfaces use different time grids".into());
            }
            if let Some(x) = (0..n).find(|&x| s1.terminal()[x] > s2.terminal()[x]) {
                return fail(format!("terminal order fails at node {x}"));
            }
            for (r1, r2) in s1.values.iter().zip(&s2.values) {
                worst = r1.iter().zip(r2).map(|(a, b)| a - b).fold(worst, f64::max);
            }
        }
        (None, None) => {}
        _ => return fail("only one side carries a parabolic surface".into()),
    }
    ComparisonReport { hypotheses_met: true, reason: None, worst_margin: worst, pass: Some(worst <= tol) }
}
