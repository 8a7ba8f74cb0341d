//! Scalar fields on geometry nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One real value per geometry node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: serde::de::DeserializeOwned"
))]
pub struct Field<S: Scalar> {
    pub values: Vec<S>,
}

impl<S: Scalar> Field<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![S::zero(); n],
        }
    }

    pub fn from_values(values: Vec<S>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn min_value(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn scale(&self, c: S) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn add_scaled(&self, c: S, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + c * b)
                .collect(),
        }
    }

    pub fn axpy_in_place(&mut self, c: S, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
