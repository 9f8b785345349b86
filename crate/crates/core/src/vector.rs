//! Vector primitives shared by retrieval and frame selection.
//!
//! Values are stored and accumulated in 64-bit floats with a fixed
//! left-to-right summation order, so results are reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A finite, non-empty dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0, col });
        }
        Ok(Vector(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
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

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Vector::new(values)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Dot product, accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

pub fn l2_normalize(v: &Vector) -> Result<Vector> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(Vector(v.0.iter().map(|x| x / n).collect()))
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    cosine_slices(&a.0, &b.0)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Component-wise arithmetic mean.
pub fn mean_pool<V: AsRef<[f64]>>(rows: &[V]) -> Result<Vector> {
    let first = rows.first().ok_or(Error::EmptyInput)?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for row in rows {
        let row = row.as_ref();
        check_dims(first, row)?;
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let count = rows.len() as f64;
    Vector::new(acc.into_iter().map(|a| a / count).collect())
}

/// `alpha * text + (1 - alpha) * visual`, re-normalized.
///
/// Both inputs are expected to be unit vectors; the caller normalizes them.
/// At the endpoints the result is exactly the normalized single modality.
pub fn interpolate_ensemble(text: &Vector, visual: &Vector, alpha: f64) -> Result<Vector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    check_dims(&text.0, &visual.0)?;
    let mixed: Vec<f64> = text
        .0
        .iter()
        .zip(&visual.0)
        .map(|(t, v)| alpha * t + (1.0 - alpha) * v)
        .collect();
    l2_normalize(&Vector(mixed))
}
