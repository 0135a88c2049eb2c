//! Signed node measures.

use serde::{Deserialize, Serialize};

use crate::form::{FormError, StateSpace};

/// A finite signed measure given by its node masses `μ({x})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    masses: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(masses: Vec<f64>) -> Result<Self, FormError> {
        if let Some(node) = masses.iter().position(|m| !m.is_finite()) {
            return Err(FormError::NonFinite { what: "measure mass", node });
        }
        Ok(Self { masses })
    }

    pub fn zeros(n: usize) -> Self {
        Self { masses: vec![0.0; n] }
    }

    pub fn dirac(n: usize, node: usize, mass: f64) -> Self {
        let mut masses = vec![0.0; n];
        masses[node] = mass;
        Self { masses }
    }

    /// The measure `ρ·m`.
    pub fn from_density(space: &StateSpace, density: &[f64]) -> Result<Self, FormError> {
        if density.len() != space.len() {
            return Err(FormError::DimensionMismatch {
                what: "density",
                expected: space.len(),
                found: density.len(),
            });
        }
        Self::new(density.iter().zip(space.measure()).map(|(r, m)| r * m).collect())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, node: usize) -> f64 {
        self.masses[node]
    }

    /// Density `dμ/dm` with respect to the reference measure.
    pub fn density(&self, space: &StateSpace) -> Vec<f64> {
        self.masses.iter().zip(space.measure()).map(|(mu, m)| mu / m).collect()
    }

    pub fn positive_part(&self) -> Self {
        Self { masses: self.masses.iter().map(|m| m.max(0.0)).collect() }
    }

    pub fn negative_part(&self) -> Self {
        Self { masses: self.masses.iter().map(|m| (-m).max(0.0)).collect() }
    }

    /// `|μ|`, the total variation measure.
    pub fn variation(&self) -> Self {
        Self { masses: self.masses.iter().map(|m| m.abs()).collect() }
    }

    pub fn total_variation(&self) -> f64 {
        self.masses.iter().map(|m| m.abs()).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.masses.iter().all(|&m| m >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.masses.iter().all(|&m| m == 0.0)
    }

    /// Node-wise order `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.masses.len() == other.masses.len() && self.masses.iter().zip(&other.masses).all(|(a, b)| a <= b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { masses: self.masses.iter().map(|m| factor * m).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self { masses: self.masses.iter().zip(&other.masses).map(|(a, b)| a + b).collect() }
    }

    /// `∫ v dμ`.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        self.masses.iter().zip(v).map(|(m, x)| m * x).sum()
    }
}
