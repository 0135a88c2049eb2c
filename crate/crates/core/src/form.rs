//! Finite-state symmetric Dirichlet forms.
//!
//! A form on `n` nodes is given by a reference measure `m > 0`, symmetric
//! nonnegative jump weights `w_xy` and killing weights `k_x >= 0`:
//!
//! ```text
//! E(u, v) = ½ Σ_{x,y} w_xy (u(x) − u(y)) (v(x) − v(y)) + Σ_x k_x u(x) v(x)
//! (Lu)(x) = Σ_y w_xy (u(x) − u(y)) + k_x u(x)
//! ```
//!
//! so that `E(u, v) = vᵀ L u` and the generator is `A u = −(L u) / m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{sup_norm, SpdFactor, SymmetricOperator};
use crate::measure::SignedMeasure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("state space must contain at least one node")]
    EmptySpace,
    #[error("reference measure must be strictly positive: m({node}) = {value}")]
    NonPositiveMeasure { node: usize, value: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("asymmetric weights: w[{i}][{j}] = {wij} but w[{j}][{i}] = {wji}")]
    Asymmetric { i: usize, j: usize, wij: f64, wji: f64 },
    #[error("negative weight w[{i}][{j}] = {value}")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("nonzero diagonal weight w[{node}][{node}] = {value}")]
    NonzeroDiagonal { node: usize, value: f64 },
    #[error("negative killing k[{node}] = {value}")]
    NegativeKilling { node: usize, value: f64 },
    #[error("non-finite {what} at node {node}")]
    NonFinite { what: &'static str, node: usize },
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("GreenOperatorUndefined: form is not transient (killing-free component {component:?})")]
    GreenOperatorUndefined { component: Vec<usize> },
    #[error("negative potential order alpha = {0}")]
    NegativeAlpha(f64),
    #[error("equilibrium set is empty")]
    EmptySet,
    #[error("perturbation must be strictly positive: g({node}) = {value}")]
    NonPositivePerturbation { node: usize, value: f64 },
    #[error("linear system is numerically singular")]
    Singular,
}

/// Node set with its reference measure and optional spatial coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    m: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
}

impl StateSpace {
    pub fn new(m: Vec<f64>) -> Result<Self, FormError> {
        if m.is_empty() {
            return Err(FormError::EmptySpace);
        }
        for (node, &value) in m.iter().enumerate() {
            if !value.is_finite() {
                return Err(FormError::NonFinite { what: "reference measure", node });
            }
            if value <= 0.0 {
                return Err(FormError::NonPositiveMeasure { node, value });
            }
        }
        Ok(Self { m, coords: None })
    }

    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self, FormError> {
        if coords.len() != self.m.len() {
            return Err(FormError::DimensionMismatch {
                what: "coordinates",
                expected: self.m.len(),
                found: coords.len(),
            });
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        &self.m
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn coord(&self, node: usize) -> Option<&[f64]> {
        self.coords.as_ref().map(|c| c[node].as_slice())
    }

    /// Node closest to `point` in Euclidean distance, ties to the lower index.
    pub fn nearest_node(&self, point: &[f64]) -> Option<usize> {
        let coords = self.coords.as_ref()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in coords.iter().enumerate() {
            let d: f64 = c.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((i, d)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// `(u, v)_{L²(m)}`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.m.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
    }
}

/// Jump weights as supplied by a caller, before validation.
#[derive(Debug, Clone)]
pub enum WeightMatrix {
    Dense(Vec<Vec<f64>>),
    /// Entries `(i, j, w_ij)`; both orientations must be listed.
    Triplets { n: usize, entries: Vec<(usize, usize, f64)> },
}

impl WeightMatrix {
    pub fn zeros(n: usize) -> Self {
        WeightMatrix::Triplets { n, entries: Vec::new() }
    }

    /// Symmetric triplets from an edge list `(i, j, w)` with `i != j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let entries = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
        WeightMatrix::Triplets { n, entries }
    }
}

/// Validated finite Dirichlet form.
#[derive(Debug, Clone)]
pub struct DirichletForm {
    space: StateSpace,
    /// Off-diagonal weights per row, sorted by column, zeros dropped.
    adj: Vec<Vec<(usize, f64)>>,
    killing: Vec<f64>,
}

/// Outcome of the transience classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum TransienceCertificate {
    /// `L` factorized; smallest Cholesky pivot.
    PositiveDefinite { min_pivot: f64 },
    /// One killing node per weight-connected component (used when `L` is too
    /// large for a dense factorization).
    KillingReachable { witnesses: Vec<usize> },
    /// A weight-connected component without killing.
    KillingFreeComponent { component: Vec<usize> },
}

impl DirichletForm {
    pub fn new(space: StateSpace, weights: WeightMatrix, killing: Vec<f64>) -> Result<Self, FormError> {
        let n = space.len();
        if killing.len() != n {
            return Err(FormError::DimensionMismatch { what: "killing", expected: n, found: killing.len() });
        }
        for (node, &value) in killing.iter().enumerate() {
            if !value.is_finite() {
                return Err(FormError::NonFinite { what: "killing", node });
            }
            if value < 0.0 {
                return Err(FormError::NegativeKilling { node, value });
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        match weights {
            WeightMatrix::Dense(rows) => {
                if rows.len() != n {
                    return Err(FormError::DimensionMismatch { what: "weight rows", expected: n, found: rows.len() });
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        return Err(FormError::DimensionMismatch {
                            what: "weight columns",
                            expected: n,
                            found: row.len(),
                        });
                    }
                    for (j, &w) in row.iter().enumerate() {
                        if w != 0.0 {
                            adj[i].push((j, w));
                        }
                    }
                }
            }
            WeightMatrix::Triplets { n: tn, entries } => {
                if tn != n {
                    return Err(FormError::DimensionMismatch { what: "weight matrix", expected: n, found: tn });
                }
                for (i, j, w) in entries {
                    if i >= n || j >= n {
                        return Err(FormError::NodeOutOfRange { node: i.max(j), n });
                    }
                    if w != 0.0 {
                        adj[i].push((j, w));
                    }
                }
                for row in adj.iter_mut() {
                    row.sort_by_key(|&(j, _)| j);
                    // merge duplicate entries
                    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                    for &(j, w) in row.iter() {
                        match merged.last_mut() {
                            Some((lj, lw)) if *lj == j => *lw += w,
                            _ => merged.push((j, w)),
                        }
                    }
                    *row = merged;
                }
            }
        }
        for (i, row) in adj.iter().enumerate() {
            for &(j, w) in row {
                if !w.is_finite() {
                    return Err(FormError::NonFinite { what: "weight", node: i });
                }
                if i == j {
                    return Err(FormError::NonzeroDiagonal { node: i, value: w });
                }
                if w < 0.0 {
                    return Err(FormError::NegativeWeight { i, j, value: w });
                }
                let wji = lookup(&adj[j], i);
                if (w - wji).abs() > 1e-12 * w.abs().max(wji.abs()) {
                    return Err(FormError::Asymmetric { i, j, wij: w, wji });
                }
            }
        }
        Ok(Self { space, adj, killing })
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn measure(&self) -> &[f64] {
        self.space.measure()
    }

    pub fn killing(&self) -> &[f64] {
        &self.killing
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adj[x]
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        lookup(&self.adj[x], y)
    }

    /// `Σ_y w_xy + k_x`, the diagonal of `L`.
    pub fn diagonal(&self, x: usize) -> f64 {
        self.adj[x].iter().map(|&(_, w)| w).sum::<f64>() + self.killing[x]
    }

    pub fn check_len(&self, what: &'static str, len: usize) -> Result<(), FormError> {
        if len != self.len() {
            return Err(FormError::DimensionMismatch { what, expected: self.len(), found: len });
        }
        Ok(())
    }

    /// `E(u, v)`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> Result<f64, FormError> {
        self.check_len("u", u.len())?;
        self.check_len("v", v.len())?;
        let mut jump = 0.0;
        for (x, row) in self.adj.iter().enumerate() {
            for &(y, w) in row {
                jump += w * (u[x] - u[y]) * (v[x] - v[y]);
            }
        }
        let kill: f64 = self.killing.iter().zip(u).zip(v).map(|((k, a), b)| k * a * b).sum();
        Ok(0.5 * jump + kill)
    }

    /// `L u`.
    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|x| {
                self.adj[x].iter().map(|&(y, w)| w * (u[x] - u[y])).sum::<f64>() + self.killing[x] * u[x]
            })
            .collect()
    }

    /// `A u = −(L u) / m`.
    pub fn apply_generator(&self, u: &[f64]) -> Vec<f64> {
        self.apply_laplacian(u).iter().zip(self.measure()).map(|(lu, m)| -lu / m).collect()
    }

    pub(crate) fn operator(&self, extra_diag: &[f64]) -> SymmetricOperator {
        let diag = (0..self.len()).map(|x| self.diagonal(x) + extra_diag[x]).collect();
        let offdiag = self.adj.iter().map(|row| row.iter().map(|&(y, w)| (y, -w)).collect()).collect();
        SymmetricOperator { diag, offdiag }
    }

    /// Factorization of `L + diag(extra)`.
    pub fn factor_shifted(&self, extra: &[f64]) -> Result<SpdFactor, FormError> {
        self.check_len("diagonal shift", extra.len())?;
        SpdFactor::new(self.operator(extra)).ok_or(FormError::Singular)
    }

    /// Factorization of `L + αM`.
    pub fn factor(&self, alpha: f64) -> Result<SpdFactor, FormError> {
        if alpha < 0.0 {
            return Err(FormError::NegativeAlpha(alpha));
        }
        if alpha == 0.0 {
            if let TransienceCertificate::KillingFreeComponent { component } = self.transience() {
                return Err(FormError::GreenOperatorUndefined { component });
            }
        }
        let extra: Vec<f64> = self.measure().iter().map(|m| alpha * m).collect();
        self.factor_shifted(&extra)
    }

    /// Weight-connected components, each sorted, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            label[start] = id;
            while let Some(x) = stack.pop() {
                members.push(x);
                for &(y, _) in &self.adj[x] {
                    if label[y] == usize::MAX {
                        label[y] = id;
                        stack.push(y);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    /// Transience classification with a certificate.
    ///
    /// The form is transient iff every weight-connected component carries
    /// killing, equivalently iff `L` is positive definite.
    pub fn transience(&self) -> TransienceCertificate {
        let mut witnesses = Vec::new();
        for comp in self.components() {
            match comp.iter().copied().find(|&x| self.killing[x] > 0.0) {
                Some(w) => witnesses.push(w),
                None => return TransienceCertificate::KillingFreeComponent { component: comp },
            }
        }
        if self.len() <= crate::linalg::DENSE_LIMIT {
            if let Some(min_pivot) = SpdFactor::new(self.operator(&vec![0.0; self.len()])).and_then(|f| f.min_pivot()) {
                return TransienceCertificate::PositiveDefinite { min_pivot };
            }
        }
        TransienceCertificate::KillingReachable { witnesses }
    }

    pub fn is_transient(&self) -> (bool, TransienceCertificate) {
        let cert = self.transience();
        (!matches!(cert, TransienceCertificate::KillingFreeComponent { .. }), cert)
    }

    /// Potential `U_α μ`, the solution of `(L + αM) u = μ`.
    pub fn potential(&self, mu: &SignedMeasure, alpha: f64) -> Result<Vec<f64>, FormError> {
        self.check_len("measure", mu.len())?;
        Ok(self.factor(alpha)?.solve(mu.masses()))
    }

    /// Green operator applied to a density: `G f = L⁻¹ (M f)`.
    pub fn green(&self, f: &[f64]) -> Result<Vec<f64>, FormError> {
        self.check_len("density", f.len())?;
        let rhs: Vec<f64> = f.iter().zip(self.measure()).map(|(a, m)| a * m).collect();
        Ok(self.factor(0.0)?.solve(&rhs))
    }

    /// 0-order equilibrium potential of `set` and its capacity.
    pub fn equilibrium_potential(&self, set: &[usize]) -> Result<(Vec<f64>, f64), FormError> {
        if set.is_empty() {
            return Err(FormError::EmptySet);
        }
        if let TransienceCertificate::KillingFreeComponent { component } = self.transience() {
            return Err(FormError::GreenOperatorUndefined { component });
        }
        let n = self.len();
        let mut in_set = vec![false; n];
        for &b in set {
            if b >= n {
                return Err(FormError::NodeOutOfRange { node: b, n });
            }
            in_set[b] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&x| !in_set[x]).collect();
        let mut e = vec![0.0; n];
        for &b in set {
            e[b] = 1.0;
        }
        if !rest.is_empty() {
            // L_CC e_C = Σ_{y∈B} w_xy, solved as a potential on the complement.
            let mut local = vec![usize::MAX; n];
            for (i, &x) in rest.iter().enumerate() {
                local[x] = i;
            }
            let mut diag = Vec::with_capacity(rest.len());
            let mut offdiag = Vec::with_capacity(rest.len());
            let mut rhs = Vec::with_capacity(rest.len());
            for &x in &rest {
                diag.push(self.diagonal(x));
                let mut row = Vec::new();
                let mut b = 0.0;
                for &(y, w) in &self.adj[x] {
                    if in_set[y] {
                        b += w;
                    } else {
                        row.push((local[y], -w));
                    }
                }
                offdiag.push(row);
                rhs.push(b);
            }
            let fac = SpdFactor::new(SymmetricOperator { diag, offdiag }).ok_or(FormError::Singular)?;
            for (i, v) in fac.solve(&rhs).into_iter().enumerate() {
                e[rest[i]] = v;
            }
        }
        let cap = self.energy(&e, &e)?;
        Ok((e, cap))
    }

    /// The perturbed form `E^g(u, v) = E(u, v) + (g u, v)_{L²(m)}`.
    pub fn perturb(&self, g: &[f64]) -> Result<Self, FormError> {
        self.check_len("perturbation", g.len())?;
        for (node, &value) in g.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FormError::NonPositivePerturbation { node, value });
            }
        }
        let killing = self.killing.iter().zip(g).zip(self.measure()).map(|((k, g), m)| k + g * m).collect();
        Ok(Self { space: self.space.clone(), adj: self.adj.clone(), killing })
    }

    /// Exit rates `λ(x) = (Σ_y w_xy + k_x) / m(x)`.
    pub fn exit_rates(&self) -> Vec<f64> {
        (0..self.len()).map(|x| self.diagonal(x) / self.measure()[x]).collect()
    }

    /// Smallest eigenvalue `γ` of `L v = γ M v`, by inverse iteration.
    /// Requires a transient form.
    pub fn bottom_of_spectrum(&self) -> Result<f64, FormError> {
        let fac = self.factor(0.0)?;
        let m = self.measure();
        let n = self.len();
        // iterate on y = M^{1/2} v with the symmetric operator M^{-1/2} L M^{-1/2}
        let sq: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
        let mut y = vec![1.0 / (n as f64).sqrt(); n];
        let mut gamma = f64::INFINITY;
        for _ in 0..500 {
            let b: Vec<f64> = y.iter().zip(&sq).map(|(a, s)| a * s).collect();
            let z: Vec<f64> = fac.solve(&b).iter().zip(&sq).map(|(a, s)| a * s).collect();
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rq: f64 = y.iter().zip(&z).map(|(a, b)| a * b).sum();
            let next = 1.0 / rq;
            y = z.iter().map(|v| v / norm).collect();
            if (next - gamma).abs() <= 1e-13 * next {
                gamma = next;
                break;
            }
            gamma = next;
        }
        Ok(gamma)
    }

    /// `sup_x E_x ζ = ‖L⁻¹ M 1‖_∞` for transient forms.
    pub fn max_expected_lifetime(&self) -> Result<f64, FormError> {
        Ok(sup_norm(&self.green(&vec![1.0; self.len()])?))
    }
}

fn lookup(row: &[(usize, f64)], y: usize) -> f64 {
    row.binary_search_by_key(&y, |&(j, _)| j).map(|i| row[i].1).unwrap_or(0.0)
}

/// `T_k(r) = min(k, max(−k, r))`.
pub fn clamp_level(k: f64, r: f64) -> f64 {
    r.max(-k).min(k)
}

/// `Φ_k(r) = T_1(r − T_k(r))`.
pub fn level_slice(k: f64, r: f64) -> f64 {
    clamp_level(1.0, r - clamp_level(k, r))
}
