use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

/// Flat vector of model parameters, the unit exchanged between clients and
/// the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Index of the first NaN or infinite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ParameterVector) -> Result<ParameterVector> {
        self.check_len(other)?;
        Ok(ParameterVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &ParameterVector) -> Result<f64> {
        Ok(self.sub(other)?.l2_norm())
    }

    pub fn check_len(&self, other: &ParameterVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(FedError::Shape(format!(
                "parameter length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Little-endian wire encoding: u64 element count followed by the raw f64s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.0.len());
        out.extend_from_slice(&(self.0.len() as u64).to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ParameterVector> {
        if bytes.len() < 8 {
            return Err(FedError::Shape("payload shorter than header".into()));
        }
        let (head, body) = bytes.split_at(8);
        let len = u64::from_le_bytes(head.try_into().expect("8-byte header")) as usize;
        if body.len() != len * 8 {
            return Err(FedError::Shape(format!(
                "payload declares {len} values but carries {} bytes",
                body.len()
            )));
        }
        Ok(ParameterVector(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ))
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
