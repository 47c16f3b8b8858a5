//! Keyed attractor fields.
//!
//! A field quantizes the input space into a lattice of cubic cells of side
//! `cell_size` and assigns every `(cell, class)` pair a pseudo-random value in
//! `[amplitude_low, amplitude_high]`. Values near the low end act as holes and
//! values near the high end as bumps. The landscape is constant inside a cell
//! and jumps across cell faces, so iterative attacks taking steps larger than
//! a cell see a steep, key-specific surface.
//!
//! The value for class `k` in cell `(c_0, ..., c_{d-1})` is
//!
//! ```text
//! h  = mix64(key ^ 0x243F6A8885A308D3)
//! h  = mix64(h ^ c_j as u64)            for j = 0..d
//! v  = mix64(h ^ (k + 1) * 0x9E3779B97F4A7C15)
//! u  = (v >> 11) * 2^-53                in [0, 1)
//! out = amplitude_low + (amplitude_high - amplitude_low) * u
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer in [`crate::seed::mix64`] and
//! `c_j = floor(x_j / cell_size)` as a signed 64-bit integer.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::Sample;
use crate::seed::mix64;

const KEY_SALT: u64 = 0x243F_6A88_85A3_08D3;
const CLASS_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractorConfig {
    pub cell_size: f64,
    pub amplitude_low: f64,
    pub amplitude_high: f64,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        AttractorConfig {
            cell_size: 0.02,
            amplitude_low: 0.0,
            amplitude_high: 1.0,
        }
    }
}

impl AttractorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::param("cell_size", "must be positive"));
        }
        if !(self.amplitude_low >= 0.0 && self.amplitude_low < self.amplitude_high)
            || !self.amplitude_high.is_finite()
        {
            return Err(Error::param(
                "amplitude_low",
                "need 0 <= amplitude_low < amplitude_high",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractorField {
    key: u64,
    cell_size: f64,
    amplitude_low: f64,
    amplitude_high: f64,
    classes: usize,
    dim: usize,
}

impl AttractorField {
    pub fn new(key: u64, classes: usize, dim: usize, config: &AttractorConfig) -> Result<Self> {
        config.validate()?;
        if classes < 2 {
            return Err(Error::param("classes", "must be at least 2"));
        }
        if dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        Ok(AttractorField {
            key,
            cell_size: config.cell_size,
            amplitude_low: config.amplitude_low,
            amplitude_high: config.amplitude_high,
            classes,
            dim,
        })
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn amplitude_bounds(&self) -> (f64, f64) {
        (self.amplitude_low, self.amplitude_high)
    }

    /// Lattice cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .map(|v| (v / self.cell_size).floor() as i64)
            .collect()
    }

    fn cell_hash(&self, x: &[f64]) -> u64 {
        let mut h = mix64(self.key ^ KEY_SALT);
        for v in x {
            let c = (v / self.cell_size).floor() as i64;
            h = mix64(h ^ c as u64);
        }
        h
    }

    /// Raw per-class scores at `x`, written into `out` (length `classes`).
    /// Dimensions are not checked.
    pub(crate) fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let h = self.cell_hash(x);
        let span = self.amplitude_high - self.amplitude_low;
        for (k, slot) in out.iter_mut().enumerate() {
            let v = mix64(h ^ (k as u64 + 1).wrapping_mul(CLASS_STRIDE));
            let u = (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            *slot = self.amplitude_low + span * u;
        }
    }

    /// Raw, nonnegative per-class attractor scores at `x`.
    pub fn scores(&self, x: &Sample) -> Result<Vec<f64>> {
        check_dim(self.dim, x.dim())?;
        let mut out = vec![0.0; self.classes];
        self.scores_into(x.coords(), &mut out);
        Ok(out)
    }

    /// `(min, max)` over classes of the attractor scores at `x`.
    pub fn range(&self, x: &Sample) -> Result<(f64, f64)> {
        Ok(score_range(&self.scores(x)?))
    }
}

/// Elementwise minimum and maximum of a score slice.
pub fn score_range(scores: &[f64]) -> (f64, f64) {
    scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        })
}
