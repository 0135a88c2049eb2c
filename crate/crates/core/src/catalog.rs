//! Discretized operators assembled into problems: grid Laplacians, variable
//! coefficient divergence forms, the fractional Laplacian on an interval,
//! the degenerate diagonal form, and perturbed variants.
//!
//! All grids are cell-centred: `n` cells of width `h` on the interval with
//! nodes at the cell midpoints.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::bsde::Driver;
use crate::form::{DirichletForm, FormError, StateSpace, WeightMatrix};
use crate::measure::SignedMeasure;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("alpha must lie in (0, 2), got {0}")]
    InvalidAlpha(f64),
    #[error("coefficient must be positive, got {value} at x = {x}")]
    NonPositiveCoefficient { x: f64, value: f64 },
    #[error("at least 2 nodes per direction are required, got {0}")]
    TooFewNodes(usize),
    #[error("interval must satisfy a < b, got ({0}, {1})")]
    BadInterval(f64, f64),
    #[error("diagonal coefficient vanishes at node {node} (x = {x}); the solution is unbounded there")]
    DegenerateNode { node: usize, x: f64 },
    #[error("measure entry {index}: {reason}")]
    BadMeasure { index: usize, reason: String },
    #[error("invalid driver: {0}")]
    BadDriver(String),
    #[error("unknown catalog id '{0}'")]
    UnknownId(String),
    #[error("family '{family}' does not use field '{field}'")]
    UnusedField { family: &'static str, field: &'static str },
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("problem descriptor at `{key}`: {source}")]
    Json { key: String, source: serde_json::Error },
    #[error("reading problem descriptor: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Dirichlet grid Laplacian on an interval.
    Lap1d,
    /// Dirichlet grid Laplacian on a square.
    Lap2d,
    /// Divergence form `−(a u′)′` with Dirichlet boundary.
    Divform,
    /// Fractional Laplacian `(−Δ)^{α/2}` restricted to an interval.
    Frac,
    /// `W = 0`, `k = c m`.
    Diag,
    /// Grid Laplacian without boundary killing (only useful perturbed).
    Neumann1d,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Lap1d => "lap1d",
            Family::Lap2d => "lap2d",
            Family::Divform => "divform",
            Family::Frac => "frac",
            Family::Diag => "diag",
            Family::Neumann1d => "neumann1d",
        }
    }
}

/// A scalar function of position. Functions of `x` use the first
/// coordinate; `abs` uses the Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant { value: f64 },
    /// `scale · |x|`.
    Abs {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `a + b x`.
    Affine { a: f64, b: f64 },
    /// `base + amplitude · sin(2π frequency x)`.
    Sine {
        base: f64,
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::Abs { scale } => scale * p.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Coefficient::Affine { a, b } => a + b * p[0],
            Coefficient::Sine { base, amplitude, frequency } => base + amplitude * (2.0 * PI * frequency * p[0]).sin(),
        }
    }
}

/// One atom or density contribution of the data measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureEntry {
    Node(NodeAtom),
    Point(PointAtom),
    Density(DensityPart),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAtom {
    pub node: usize,
    pub mass: f64,
}

/// Atom at the grid node nearest to `x` (a number or a point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointAtom {
    pub x: Position,
    pub mass: f64,
}

/// Absolutely continuous part `ρ m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityPart {
    pub density: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Scalar(f64),
    Point(Vec<f64>),
}

impl Position {
    fn coords(&self) -> Vec<f64> {
        match self {
            Position::Scalar(v) => vec![*v],
            Position::Point(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Zero {},
    /// `f(x, y) = g(x)`.
    Source { g: Coefficient },
    /// `a(x) + b(x) y` with `b <= 0`.
    Affine { a: Coefficient, b: Coefficient },
    /// `g(x) − c(x) sign(y) |y|^p`.
    OddPower {
        #[serde(default = "unit")]
        c: Coefficient,
        p: f64,
        #[serde(default = "zero_coeff")]
        g: Coefficient,
    },
}

fn unit() -> Coefficient {
    Coefficient::constant(1.0)
}

fn zero_coeff() -> Coefficient {
    Coefficient::constant(0.0)
}

impl DriverSpec {
    pub fn build(&self, space: &StateSpace) -> Result<Driver, CatalogError> {
        let coords = space.coords().expect("catalog spaces carry coordinates");
        let sample = |c: &Coefficient| -> Vec<f64> { coords.iter().map(|p| c.eval(p)).collect() };
        Ok(match self {
            DriverSpec::Zero {} => Driver::zero(space.len()),
            DriverSpec::Source { g } => Driver::source(sample(g)),
            DriverSpec::Affine { a, b } => {
                let b = sample(b);
                if let Some(v) = b.iter().find(|v| **v > 0.0) {
                    return Err(CatalogError::BadDriver(format!("affine slope must be <= 0, got {v}")));
                }
                Driver::Affine { a: sample(a), b }
            }
            DriverSpec::OddPower { c, p, g } => {
                if !(*p > 0.0) {
                    return Err(CatalogError::BadDriver(format!("power must be positive, got {p}")));
                }
                let c = sample(c);
                if let Some(v) = c.iter().find(|v| **v < 0.0) {
                    return Err(CatalogError::BadDriver(format!("power coefficient must be >= 0, got {v}")));
                }
                Driver::OddPower { c, p: *p, g: sample(g) }
            }
        })
    }
}

/// JSON problem descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescriptor {
    pub family: Family,
    /// Cells per direction.
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Interval (per direction for `lap2d`); `(0, 1)` by default, `(−1, 1)`
    /// for `frac` and `diag`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// Diffusion coefficient `a` (grid families) or `c` (diagonal family).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<Coefficient>,
    /// Perturbation `k ← k + g m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Coefficient>,
    #[serde(default)]
    pub measure: Vec<MeasureEntry>,
    #[serde(default = "zero_driver")]
    pub driver: DriverSpec,
}

fn zero_driver() -> DriverSpec {
    DriverSpec::Zero {}
}

#[derive(Debug, Clone)]
pub struct Problem {
    /// Catalog id, or `custom` for descriptors read from files.
    pub id: String,
    pub descriptor: ProblemDescriptor,
    pub form: DirichletForm,
    pub driver: Driver,
    pub mu: SignedMeasure,
}

/// Stable catalog ids.
pub const CATALOG_IDS: [&str; 6] = ["lap1d-dirac", "lap2d", "divform-b", "frac-a10", "diag-5.7", "perturbed-g"];

/// Descriptor behind a catalog id.
pub fn catalog_descriptor(id: &str) -> Result<ProblemDescriptor, CatalogError> {
    let base = |family, n| ProblemDescriptor {
        family,
        n,
        alpha: None,
        interval: None,
        coeff: None,
        g: None,
        measure: Vec::new(),
        driver: DriverSpec::Zero {},
    };
    let atom = |x: f64| vec![MeasureEntry::Point(PointAtom { x: Position::Scalar(x), mass: 1.0 })];
    Ok(match id {
        "lap1d-dirac" => ProblemDescriptor { measure: atom(0.5), ..base(Family::Lap1d, 64) },
        "lap2d" => ProblemDescriptor {
            measure: vec![MeasureEntry::Point(PointAtom { x: Position::Point(vec![0.5, 0.5]), mass: 1.0 })],
            driver: DriverSpec::OddPower { c: unit(), p: 3.0, g: Coefficient::constant(1.0) },
            ..base(Family::Lap2d, 12)
        },
        "divform-b" => ProblemDescriptor {
            coeff: Some(Coefficient::Sine { base: 1.0, amplitude: 0.5, frequency: 1.0 }),
            measure: atom(0.5),
            ..base(Family::Divform, 64)
        },
        "frac-a10" => ProblemDescriptor { alpha: Some(1.0), measure: atom(0.0), ..base(Family::Frac, 64) },
        "diag-5.7" => ProblemDescriptor {
            coeff: Some(Coefficient::Abs { scale: 1.0 }),
            measure: vec![MeasureEntry::Density(DensityPart { density: Coefficient::constant(1.0) })],
            ..base(Family::Diag, 64)
        },
        "perturbed-g" => ProblemDescriptor {
            g: Some(Coefficient::constant(8.0)),
            measure: atom(0.3),
            ..base(Family::Neumann1d, 64)
        },
        other => return Err(CatalogError::UnknownId(other.to_string())),
    })
}

/// `c_{1,α} = α 2^{α−1} Γ((1+α)/2) / (√π Γ(1 − α/2))`, the constant making
/// `(−Δ)^{α/2}` have symbol `|ξ|^α` in one dimension.
pub fn fractional_constant(alpha: f64) -> f64 {
    alpha * 2f64.powf(alpha - 1.0) * gamma((1.0 + alpha) / 2.0) / (PI.sqrt() * gamma(1.0 - alpha / 2.0))
}

fn positive(c: &Coefficient, p: &[f64]) -> Result<f64, CatalogError> {
    let value = c.eval(p);
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CatalogError::NonPositiveCoefficient { x: p[0], value })
    }
}

fn cell_centres(a: f64, b: f64, n: usize) -> (f64, Vec<f64>) {
    let h = (b - a) / n as f64;
    (h, (0..n).map(|i| a + (i as f64 + 0.5) * h).collect())
}

/// Builds the problem described by `desc`.
pub fn build_problem(id: &str, desc: &ProblemDescriptor) -> Result<Problem, CatalogError> {
    let n = desc.n;
    if n < 2 {
        return Err(CatalogError::TooFewNodes(n));
    }
    let family = desc.family;
    let unused = |field| CatalogError::UnusedField { family: family.name(), field };
    if desc.alpha.is_some() && family != Family::Frac {
        return Err(unused("alpha"));
    }
    if desc.coeff.is_some() && matches!(family, Family::Frac) {
        return Err(unused("coeff"));
    }
    let default_interval = match family {
        Family::Frac | Family::Diag => [-1.0, 1.0],
        _ => [0.0, 1.0],
    };
    let [a, b] = desc.interval.unwrap_or(default_interval);
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(CatalogError::BadInterval(a, b));
    }
    let unit_coeff = Coefficient::constant(1.0);
    let coeff = desc.coeff.as_ref().unwrap_or(&unit_coeff);
    let (h, xs) = cell_centres(a, b, n);

    let (coords, m, weights, killing): (Vec<Vec<f64>>, Vec<f64>, WeightMatrix, Vec<f64>) = match family {
        Family::Lap1d | Family::Divform | Family::Neumann1d => {
            let mut edges = Vec::with_capacity(n - 1);
            for i in 0..n - 1 {
                let face = a + (i + 1) as f64 * h;
                edges.push((i, i + 1, positive(coeff, &[face])? / h));
            }
            let mut k = vec![0.0; n];
            if family != Family::Neumann1d {
                k[0] = positive(coeff, &[a])? / h;
                k[n - 1] += positive(coeff, &[b])? / h;
            }
            (xs.iter().map(|&x| vec![x]).collect(), vec![h; n], WeightMatrix::from_edges(n, &edges), k)
        }
        Family::Lap2d => {
            let idx = |i: usize, j: usize| i * n + j;
            let mut coords = Vec::with_capacity(n * n);
            let mut edges = Vec::new();
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    coords.push(vec![xs[i], xs[j]]);
                    if i + 1 < n {
                        edges.push((idx(i, j), idx(i + 1, j), positive(coeff, &[a + (i + 1) as f64 * h, xs[j]])?));
                    }
                    if j + 1 < n {
                        edges.push((idx(i, j), idx(i, j + 1), positive(coeff, &[xs[i], a + (j + 1) as f64 * h])?));
                    }
                    if i == 0 {
                        k[idx(i, j)] += positive(coeff, &[a, xs[j]])?;
                    }
                    if i == n - 1 {
                        k[idx(i, j)] += positive(coeff, &[b, xs[j]])?;
                    }
                    if j == 0 {
                        k[idx(i, j)] += positive(coeff, &[xs[i], a])?;
                    }
                    if j == n - 1 {
                        k[idx(i, j)] += positive(coeff, &[xs[i], b])?;
                    }
                }
            }
            (coords, vec![h * h; n * n], WeightMatrix::from_edges(n * n, &edges), k)
        }
        Family::Frac => {
            let alpha = desc.alpha.unwrap_or(1.0);
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(CatalogError::InvalidAlpha(alpha));
            }
            let c = fractional_constant(alpha);
            let mut edges = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j, c * h * h / (xs[j] - xs[i]).abs().powf(1.0 + alpha)));
                }
            }
            let k = xs.iter().map(|&x| c * h * ((b - x).powf(-alpha) + (x - a).powf(-alpha)) / alpha).collect();
            (xs.iter().map(|&x| vec![x]).collect(), vec![h; n], WeightMatrix::from_edges(n, &edges), k)
        }
        Family::Diag => {
            let mut k = Vec::with_capacity(n);
            for (node, &x) in xs.iter().enumerate() {
                let c = coeff.eval(&[x]);
                if c == 0.0 {
                    return Err(CatalogError::DegenerateNode { node, x });
                }
                if !(c > 0.0) || !c.is_finite() {
                    return Err(CatalogError::NonPositiveCoefficient { x, value: c });
                }
                k.push(c * h);
            }
            (xs.iter().map(|&x| vec![x]).collect(), vec![h; n], WeightMatrix::zeros(n), k)
        }
    };
    let space = StateSpace::new(m)?.with_coords(coords)?;
    let mut form = DirichletForm::new(space, weights, killing)?;
    if let Some(g) = &desc.g {
        let values: Vec<f64> = form.space().coords().unwrap().iter().map(|p| g.eval(p)).collect();
        form = form.perturb(&values)?;
    }
    let mu = build_measure(form.space(), &desc.measure)?;
    let driver = desc.driver.build(form.space())?;
    Ok(Problem { id: id.to_string(), descriptor: desc.clone(), form, driver, mu })
}

fn build_measure(space: &StateSpace, entries: &[MeasureEntry]) -> Result<SignedMeasure, CatalogError> {
    let n = space.len();
    let mut masses = vec![0.0; n];
    for (index, e) in entries.iter().enumerate() {
        let bad = |reason: String| CatalogError::BadMeasure { index, reason };
        match e {
            MeasureEntry::Node(NodeAtom { node, mass }) => {
                if *node >= n {
                    return Err(bad(format!("node {node} out of range for {n} nodes")));
                }
                masses[*node] += mass;
            }
            MeasureEntry::Point(PointAtom { x, mass }) => {
                let p = x.coords();
                let dim = space.coord(0).map_or(0, |c| c.len());
                if p.len() != dim {
                    return Err(bad(format!("point has {} coordinates, the grid has {dim}", p.len())));
                }
                let node = space.nearest_node(&p).ok_or_else(|| bad("grid has no coordinates".into()))?;
                masses[node] += mass;
            }
            MeasureEntry::Density(DensityPart { density }) => {
                let coords = space.coords().ok_or_else(|| bad("grid has no coordinates".into()))?;
                for (x, p) in coords.iter().enumerate() {
                    masses[x] += density.eval(p) * space.measure()[x];
                }
            }
        }
    }
    SignedMeasure::new(masses).map_err(|e| CatalogError::BadMeasure { index: entries.len(), reason: e.to_string() })
}

/// Problem for a catalog id, with optional overrides of `n` and `alpha`.
pub fn build_catalog_problem(id: &str, n: Option<usize>, alpha: Option<f64>) -> Result<Problem, CatalogError> {
    let mut desc = catalog_descriptor(id)?;
    if let Some(n) = n {
        desc.n = n;
    }
    if let Some(alpha) = alpha {
        desc.alpha = Some(alpha);
    }
    build_problem(id, &desc)
}

/// Reads a JSON descriptor file.
pub fn load_problem(path: &Path) -> Result<Problem, CatalogError> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let desc: ProblemDescriptor = serde_path_to_error::deserialize(de)
        .map_err(|e| CatalogError::Json { key: e.path().to_string(), source: e.into_inner() })?;
    build_problem("custom", &desc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lap1d_three_cells_by_hand() {
        let desc = ProblemDescriptor { n: 3, ..catalog_descriptor("lap1d-dirac").unwrap() };
        let p = build_problem("t", &desc).unwrap();
        let f = &p.form;
        assert!((f.weight(0, 1) - 3.0).abs() < 1e-14 && (f.weight(1, 2) - 3.0).abs() < 1e-14);
        assert_eq!(f.weight(0, 2), 0.0);
        assert!((f.killing()[0] - 3.0).abs() < 1e-14 && (f.killing()[2] - 3.0).abs() < 1e-14);
        assert_eq!(f.killing()[1], 0.0);
        assert!(f.measure().iter().all(|&m| (m - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(p.mu.masses(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn diagonal_family() {
        let p = build_catalog_problem("diag-5.7", Some(4), None).unwrap();
        let xs = [-0.75_f64, -0.25, 0.25, 0.75];
        for (i, x) in xs.iter().enumerate() {
            assert!((p.form.killing()[i] - x.abs() * 0.5).abs() < 1e-15);
            assert!((p.mu.mass(i) - 0.5).abs() < 1e-15);
        }
        assert!(p.form.neighbors(0).is_empty());
        let err = build_catalog_problem("diag-5.7", Some(5), None).unwrap_err();
        assert!(matches!(err, CatalogError::DegenerateNode { node: 2, .. }));
    }

    #[test]
    fn alpha_range() {
        assert!(matches!(build_catalog_problem("frac-a10", None, Some(2.5)), Err(CatalogError::InvalidAlpha(_))));
        assert!(matches!(build_catalog_problem("frac-a10", None, Some(0.0)), Err(CatalogError::InvalidAlpha(_))));
        assert!(build_catalog_problem("frac-a10", Some(8), Some(1.5)).is_ok());
    }

    #[test]
    fn fractional_constant_values() {
        assert!((fractional_constant(1.0) - 1.0 / PI).abs() < 1e-14);
        // α → 2 limit of c_α is 0 (the symbol constant of −Δ is carried by Γ(1 − α/2) → ∞)
        assert!(fractional_constant(1.999) < 1e-2);
    }

    #[test]
    fn fractional_row_sums() {
        let p = build_catalog_problem("frac-a10", Some(16), None).unwrap();
        let f = &p.form;
        assert!(f.is_transient().0);
        // nodes symmetric about 0 have equal rates
        for i in 0..8 {
            assert!((f.diagonal(i) - f.diagonal(15 - i)).abs() < 1e-10 * f.diagonal(i));
        }
        assert_eq!(p.mu.mass(7) + p.mu.mass(8), 1.0);
        assert_eq!(p.mu.mass(7), 1.0, "ties go to the lower index");
    }

    #[test]
    fn nonpositive_coefficient_rejected() {
        let desc = ProblemDescriptor {
            coeff: Some(Coefficient::Sine { base: 0.2, amplitude: 0.5, frequency: 1.0 }),
            ..catalog_descriptor("divform-b").unwrap()
        };
        assert!(matches!(build_problem("t", &desc), Err(CatalogError::NonPositiveCoefficient { .. })));
    }

    #[test]
    fn too_few_nodes() {
        assert!(matches!(build_catalog_problem("lap1d-dirac", Some(1), None), Err(CatalogError::TooFewNodes(1))));
    }

    #[test]
    fn every_catalog_problem_is_transient() {
        for id in CATALOG_IDS {
            let p = build_catalog_problem(id, None, None).unwrap();
            assert!(p.form.is_transient().0, "{id}");
            assert_eq!(p.mu.len(), p.form.len());
        }
    }

    #[test]
    fn lap2d_layout() {
        let p = build_catalog_problem("lap2d", Some(3), None).unwrap();
        assert_eq!(p.form.len(), 9);
        assert_eq!(p.form.killing()[0], 2.0);
        assert_eq!(p.form.killing()[4], 0.0);
        assert_eq!(p.form.killing()[1], 1.0);
        assert_eq!(p.mu.mass(4), 1.0);
        assert!((p.form.measure()[0] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let json = r#"{"family": "frac", "n": 10, "alpha": 0.5,
            "measure": [{"x": 0.1, "mass": 2.0}, {"node": 0, "mass": -1.0}, {"density": {"type": "constant", "value": 1.0}}],
            "driver": {"type": "odd_power", "p": 3.0, "g": {"type": "sine", "base": 1.0, "amplitude": 0.5}}}"#;
        let desc: ProblemDescriptor = serde_json::from_str(json).unwrap();
        let p = build_problem("custom", &desc).unwrap();
        assert!((p.mu.mass(5) - 2.2).abs() < 1e-14);
        assert!((p.mu.mass(0) - (-0.8)).abs() < 1e-14);
        let back: ProblemDescriptor = serde_json::from_str(&serde_json::to_string(&desc).unwrap()).unwrap();
        assert_eq!(back, desc);
        let bad = r#"{"family": "lap1d", "n": 10, "colour": 3}"#;
        let err = serde_json::from_str::<ProblemDescriptor>(bad).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let bad_driver = r#"{"family": "lap1d", "n": 10, "driver": {"type": "zero", "p": 1}}"#;
        assert!(serde_json::from_str::<ProblemDescriptor>(bad_driver).is_err());
        let bad_atom = r#"{"family": "lap1d", "n": 10, "measure": [{"node": 1, "mass": 1.0, "weight": 2}]}"#;
        assert!(serde_json::from_str::<ProblemDescriptor>(bad_atom).is_err());
    }

    #[test]
    fn perturbed_family_kills_everywhere() {
        let p = build_catalog_problem("perturbed-g", Some(4), None).unwrap();
        assert!(p.form.killing().iter().all(|&k| (k - 8.0 * 0.25).abs() < 1e-15));
    }
}
