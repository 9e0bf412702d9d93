use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNIT_TOLERANCE: f64 = 1e-6;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors are a degenerate-embedding error.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("cosine of {}-d and {}-d vectors", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::DegenerateEmbedding("cosine with a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// L2-normalized descriptor shared by ground and satellite views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        let n = norm(&values);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateEmbedding(format!("cannot normalize vector with norm {n}")));
        }
        values.iter_mut().for_each(|v| *v /= n);
        Ok(Self(values))
    }

    /// Wraps an already unit-norm vector, checking the norm.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let n = norm(&values);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Parameter(format!("embedding norm {n} is not 1")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        cosine(&self.0, &other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_and_degenerate() {
        let e = Embedding::normalize(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.as_slice(), &[0.6, 0.8]);
        assert!(matches!(Embedding::normalize(vec![0.0, 0.0]), Err(Error::DegenerateEmbedding(_))));
        assert!(Embedding::from_unit(vec![1.0, 1.0]).is_err());
    }
}
