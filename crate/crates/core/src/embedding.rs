//! Fixed-dimension embedding vectors and cosine similarity.

use serde::{Deserialize, Serialize};

/// Dimension of every embedding produced by the engine's providers.
pub const DIM: usize = 256;

/// An L2-normalized vector of [`DIM`] components, or the zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn zero() -> Self {
        Self(vec![0.0; DIM])
    }

    /// Normalizes `raw` to unit length. All-zero input stays zero.
    pub fn normalized(raw: &[f64]) -> Self {
        assert_eq!(raw.len(), DIM, "embedding dimension mismatch");
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self::zero();
        }
        Self(raw.iter().map(|x| (x / norm) as f32).collect())
    }

    pub fn from_components(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Checks dimension, finiteness and the unit-norm invariant.
    pub fn check(&self) -> Result<(), String> {
        if self.0.len() != DIM {
            return Err(format!("dimension {} != {DIM}", self.0.len()));
        }
        if self.0.iter().any(|x| !x.is_finite()) {
            return Err("non-finite component".into());
        }
        if !self.is_zero() && (self.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("norm {} is not 1", self.norm()));
        }
        Ok(())
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}
