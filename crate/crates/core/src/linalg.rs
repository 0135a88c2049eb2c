//! Symmetric positive definite solves for form Laplacians.
//!
//! Every potential, equilibrium problem and implicit backward step reduces to
//! a system `(L + diag(s)) x = b` with `L` the form Laplacian and `s >= 0`.
//! Small and moderate systems are factorized densely once and reused; large
//! ones fall back to Jacobi-preconditioned conjugate gradients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Largest node count factorized densely.
pub const DENSE_LIMIT: usize = 2048;

/// Relative residual target of the conjugate-gradient fallback.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Symmetric sparse matrix in row-adjacency form with a separate diagonal.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    pub(crate) diag: Vec<f64>,
    pub(crate) offdiag: Vec<Vec<(usize, f64)>>,
}

impl SymmetricOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.diag
            .iter()
            .zip(&self.offdiag)
            .zip(x)
            .map(|((d, row), xi)| d * xi + row.iter().map(|&(j, a)| a * x[j]).sum::<f64>())
            .collect()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for (i, row) in self.offdiag.iter().enumerate() {
            a[(i, i)] = self.diag[i];
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        a
    }
}

/// A reusable solver handle for one SPD system.
#[derive(Debug, Clone)]
pub enum SpdFactor {
    Dense {
        chol: Cholesky<f64, Dyn>,
        min_pivot: f64,
    },
    Iterative(SymmetricOperator),
}

impl SpdFactor {
    /// Factorizes the operator, or returns `None` when it is not numerically
    /// positive definite.
    pub fn new(op: SymmetricOperator) -> Option<Self> {
        if op.len() <= DENSE_LIMIT {
            let scale = op.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            let chol = Cholesky::new(op.to_dense())?;
            let l = chol.l_dirty();
            let min_pivot = (0..op.len()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            // pivots at round-off level mean a singular matrix that survived by luck
            if !(min_pivot > scale * 1e-14) {
                return None;
            }
            Some(SpdFactor::Dense { chol, min_pivot })
        } else {
            if op.diag.iter().any(|d| !(*d > 0.0)) {
                return None;
            }
            Some(SpdFactor::Iterative(op))
        }
    }

    /// Smallest Cholesky pivot, the positive-definiteness witness.
    pub fn min_pivot(&self) -> Option<f64> {
        match self {
            SpdFactor::Dense { min_pivot, .. } => Some(*min_pivot),
            SpdFactor::Iterative(_) => None,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            SpdFactor::Dense { chol, .. } => {
                let rhs = DVector::from_column_slice(b);
                chol.solve(&rhs).as_slice().to_vec()
            }
            SpdFactor::Iterative(op) => conjugate_gradient(op, b, CG_TOLERANCE, 20 * op.len().max(100)),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(op: &SymmetricOperator, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = op.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = op.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / op.diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how they were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
