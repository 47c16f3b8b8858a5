//! Shared numeric types: input samples, class score vectors and the top-2 gap.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Tolerance used when checking that a normalized vector sums to one.
pub const NORMALIZED_SUM_TOL: f64 = 1e-9;

/// A point in the unit hypercube `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Contract(
                "sample must have at least one coordinate".into(),
            ));
        }
        if let Some(v) = coords.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!(
                "sample coordinate {v} outside [0,1]"
            )));
        }
        Ok(Sample(coords))
    }

    /// Builds a sample by clipping every coordinate into `[0,1]`.
    /// Non-finite coordinates are mapped to 0.
    pub fn clipped(mut coords: Vec<f64>) -> Self {
        for v in coords.iter_mut() {
            *v = if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Sample(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_distance(&self, other: &Sample) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(l2_distance(&self.0, &other.0))
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Largest and second-largest entries of a slice with at least two values.
pub fn top_two(values: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first, second)
}

/// Per-class nonnegative scores, optionally L1-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    normalized: bool,
}

impl ScoreVector {
    /// Wraps raw (unnormalized) nonnegative scores.
    pub fn raw(scores: Vec<f64>) -> Result<Self> {
        validate_raw(&scores)?;
        Ok(ScoreVector {
            scores,
            normalized: false,
        })
    }

    /// Wraps scores that are already a probability vector.
    pub fn normalized(scores: Vec<f64>) -> Result<Self> {
        validate_raw(&scores)?;
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > NORMALIZED_SUM_TOL {
            return Err(Error::Contract(format!("scores sum to {sum}, not 1")));
        }
        Ok(ScoreVector {
            scores,
            normalized: true,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }

    pub fn get(&self, class: usize) -> Option<f64> {
        self.scores.get(class).copied()
    }
}

fn validate_raw(scores: &[f64]) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::Contract(format!(
            "score vector needs at least 2 classes, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NormalizationDomain("non-finite score".into()));
    }
    if scores.iter().any(|v| *v < 0.0) {
        return Err(Error::NormalizationDomain("negative score".into()));
    }
    Ok(())
}

/// Divides each entry by the L1 norm of the vector.
pub fn normalize_l1(values: &[f64]) -> Result<ScoreVector> {
    validate_raw(values)?;
    let sum: f64 = values.iter().sum();
    if sum <= 0.0 {
        return Err(Error::NormalizationDomain("all-zero scores".into()));
    }
    Ok(ScoreVector {
        scores: values.iter().map(|v| v / sum).collect(),
        normalized: true,
    })
}

/// Difference between the highest and second-highest normalized score.
pub fn top2_gap(scores: &ScoreVector) -> Result<f64> {
    if !scores.is_normalized() {
        return Err(Error::Contract(
            "top2_gap requires a normalized score vector".into(),
        ));
    }
    let (first, second) = top_two(scores.as_slice());
    Ok(first - second)
}
