use serde::{Deserialize, Serialize};

use crate::error::{FedVsrError, Result};

/// Flat, ordered model parameters together with the identifier of the
/// architecture that gives the order meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout_id: String,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout_id: impl Into<String>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FedVsrError::domain(format!(
                "non-finite parameter {} at index {pos}",
                values[pos]
            )));
        }
        Ok(ParamVector {
            values,
            layout_id: layout_id.into(),
        })
    }

    pub fn zeros(len: usize, layout_id: impl Into<String>) -> Self {
        ParamVector {
            values: vec![0.0; len],
            layout_id: layout_id.into(),
        }
    }

    pub(crate) fn from_raw(values: Vec<f64>, layout_id: impl Into<String>) -> Self {
        ParamVector {
            values,
            layout_id: layout_id.into(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout_id(&self) -> &str {
        &self.layout_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values, different layout binding.
    pub fn with_layout(self, layout_id: impl Into<String>) -> Self {
        ParamVector {
            values: self.values,
            layout_id: layout_id.into(),
        }
    }

    pub fn ensure_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.layout_id != other.layout_id {
            return Err(FedVsrError::shape(format!(
                "layout mismatch: '{}' vs '{}'",
                self.layout_id, other.layout_id
            )));
        }
        if self.values.len() != other.values.len() {
            return Err(FedVsrError::shape(format!(
                "parameter count mismatch: {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(())
    }

    /// `self + scale * other`, elementwise.
    pub fn axpy(&self, scale: f64, other: &ParamVector) -> Result<ParamVector> {
        self.ensure_compatible(other)?;
        Ok(ParamVector::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
            self.layout_id.clone(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector::from_raw(
            self.values.iter().map(|v| v * factor).collect(),
            self.layout_id.clone(),
        )
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.ensure_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// True when every value is bitwise equal (distinguishes `-0.0` from `0.0`).
    pub fn bitwise_eq(&self, other: &ParamVector) -> bool {
        self.layout_id == other.layout_id
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
