//! Buyer copies: the original model combined with a keyed attractor field.
//!
//! A copy's output is the L1-normalized sum `M(x) + alpha * A(x)`. The weight
//! `alpha` is either a constant or follows a U-shape over the top-2 gap `g`
//! of the original model's scores:
//!
//! - `g >= far_threshold`: `alpha = mu * (1 - epsilon)` where
//!   `mu = g / (max A(x) - min A(x))` is the weight at which the prediction
//!   could first flip, so the copy still agrees with the original model;
//! - `g` inside a near bucket: the bucket's calibrated weight;
//! - otherwise: a small constant `mid_alpha`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attractor::{score_range, AttractorField};
use crate::error::{check_dim, Error, Result};
use crate::model::{Classifier, LabeledDataset, PrototypeModel};
use crate::numeric::{argmax, normalize_l1, top2_gap, Sample, ScoreVector};

/// Flip weight: the model's top-2 gap over the attractor score range.
pub fn mu(model_scores: &ScoreVector, attr_scores: &[f64]) -> Result<f64> {
    check_dim(model_scores.len(), attr_scores.len())?;
    let gap = top2_gap(model_scores)?;
    let (lo, hi) = score_range(attr_scores);
    if hi <= lo {
        return Err(Error::ZeroAttractorRange);
    }
    Ok(gap / (hi - lo))
}

/// `(model + alpha * attr)` normalized to unit L1 norm.
pub fn combine(model_scores: &ScoreVector, attr_scores: &[f64], alpha: f64) -> Result<ScoreVector> {
    check_dim(model_scores.len(), attr_scores.len())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param(
            "alpha",
            format!("must be finite and >= 0, got {alpha}"),
        ));
    }
    let raw: Vec<f64> = model_scores
        .as_slice()
        .iter()
        .zip(attr_scores)
        .map(|(m, a)| m + alpha * a)
        .collect();
    normalize_l1(&raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapBucket {
    /// Inclusive lower edge of the gap interval.
    pub lower: f64,
    /// Exclusive upper edge.
    pub upper: f64,
    pub alpha: f64,
}

impl GapBucket {
    pub fn contains(&self, gap: f64) -> bool {
        gap >= self.lower && gap < self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UShapeParams {
    pub near_buckets: Vec<GapBucket>,
    pub mid_alpha: f64,
    pub far_threshold: f64,
    pub epsilon: f64,
}

impl UShapeParams {
    pub fn validate(&self) -> Result<()> {
        let mut edge = 0.0;
        for (i, b) in self.near_buckets.iter().enumerate() {
            if i == 0 && b.lower != 0.0 {
                return Err(Error::param("near_buckets", "first bucket must start at 0"));
            }
            if b.lower < edge || b.upper <= b.lower {
                return Err(Error::param(
                    "near_buckets",
                    "buckets must be ordered and disjoint",
                ));
            }
            if !(b.alpha >= 0.0 && b.alpha.is_finite()) {
                return Err(Error::param(
                    "near_buckets",
                    "bucket alpha must be finite and >= 0",
                ));
            }
            edge = b.upper;
        }
        if !(self.mid_alpha >= 0.0 && self.mid_alpha.is_finite()) {
            return Err(Error::param("mid_alpha", "must be finite and >= 0"));
        }
        if !(self.far_threshold > 0.0 && self.far_threshold < 1.0) {
            return Err(Error::param("far_threshold", "must lie in (0, 1)"));
        }
        if self.far_threshold < edge {
            return Err(Error::param(
                "far_threshold",
                "must not be below the last near bucket edge",
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    Fixed(f64),
    Adaptive(UShapeParams),
}

impl WeightPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightPolicy::Fixed(a) if !(*a >= 0.0 && a.is_finite()) => Err(Error::param(
                "alpha",
                "fixed weight must be finite and >= 0",
            )),
            WeightPolicy::Fixed(_) => Ok(()),
            WeightPolicy::Adaptive(p) => p.validate(),
        }
    }
}

/// U-shape weight from already computed model and attractor scores.
///
/// A zero attractor range in the far regime falls back to `mid_alpha`.
pub fn alpha_for_scores(
    model_scores: &ScoreVector,
    attr_scores: &[f64],
    params: &UShapeParams,
) -> Result<f64> {
    let gap = top2_gap(model_scores)?;
    if gap >= params.far_threshold {
        return match mu(model_scores, attr_scores) {
            Ok(m) => Ok(m * (1.0 - params.epsilon)),
            Err(Error::ZeroAttractorRange) => Ok(params.mid_alpha),
            Err(e) => Err(e),
        };
    }
    Ok(params
        .near_buckets
        .iter()
        .find(|b| b.contains(gap))
        .map(|b| b.alpha)
        .unwrap_or(params.mid_alpha))
}

pub fn alpha_of(
    x: &Sample,
    model: &PrototypeModel,
    field: &AttractorField,
    params: &UShapeParams,
) -> Result<f64> {
    let m = model.score(x)?;
    let a = field.scores(x)?;
    alpha_for_scores(&m, &a, params)
}

/// The pieces that make up a copy's output at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyComponents {
    pub model_scores: ScoreVector,
    pub attr_scores: Vec<f64>,
    pub alpha: f64,
}

impl CopyComponents {
    /// Unnormalized copy score of class `class`.
    pub fn raw_class_score(&self, class: usize) -> f64 {
        self.model_scores.as_slice()[class] + self.alpha * self.attr_scores[class]
    }
}

/// One buyer's copy of the model.
#[derive(Clone, Debug)]
pub struct RewrittenCopy {
    original: Arc<PrototypeModel>,
    field: AttractorField,
    policy: WeightPolicy,
}

impl RewrittenCopy {
    pub fn new(
        original: Arc<PrototypeModel>,
        field: AttractorField,
        policy: WeightPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        check_dim(original.dim(), field.dim())?;
        check_dim(original.classes(), field.classes())?;
        Ok(RewrittenCopy {
            original,
            field,
            policy,
        })
    }

    pub fn original(&self) -> &PrototypeModel {
        &self.original
    }

    pub fn field(&self) -> &AttractorField {
        &self.field
    }

    pub fn policy(&self) -> &WeightPolicy {
        &self.policy
    }

    pub fn components(&self, x: &Sample) -> Result<CopyComponents> {
        check_dim(self.original.dim(), x.dim())?;
        Ok(self.components_unchecked(x.coords()))
    }

    fn components_unchecked(&self, x: &[f64]) -> CopyComponents {
        self.components_given(self.model_scores_at(x), x)
    }

    pub(crate) fn model_scores_at(&self, x: &[f64]) -> ScoreVector {
        ScoreVector::normalized(self.original.scores_unchecked(x))
            .expect("softmax output is normalized")
    }

    /// Whether both copies wrap the same original model instance.
    pub fn shares_original(&self, other: &RewrittenCopy) -> bool {
        Arc::ptr_eq(&self.original, &other.original)
    }

    fn components_given(&self, model_scores: ScoreVector, x: &[f64]) -> CopyComponents {
        let mut attr_scores = vec![0.0; self.field.classes()];
        self.field.scores_into(x, &mut attr_scores);
        let alpha = match &self.policy {
            WeightPolicy::Fixed(a) => *a,
            WeightPolicy::Adaptive(p) => {
                alpha_for_scores(&model_scores, &attr_scores, p).expect("validated inputs")
            }
        };
        CopyComponents {
            model_scores,
            attr_scores,
            alpha,
        }
    }

    /// Normalized copy scores given the original model's scores at `x`.
    pub(crate) fn score_given(&self, model_scores: &ScoreVector, x: &[f64]) -> Vec<f64> {
        let c = self.components_given(model_scores.clone(), x);
        let raw: Vec<f64> = c
            .model_scores
            .as_slice()
            .iter()
            .zip(&c.attr_scores)
            .map(|(m, a)| m + c.alpha * a)
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    /// Normalized copy scores at raw coordinates, without dimension checks.
    pub(crate) fn score_coords(&self, x: &[f64]) -> Vec<f64> {
        self.score_given(&self.model_scores_at(x), x)
    }

    pub(crate) fn predict_coords(&self, x: &[f64]) -> usize {
        argmax(&self.score_coords(x))
    }
}

impl Classifier for RewrittenCopy {
    fn classes(&self) -> usize {
        self.original.classes()
    }

    fn dim(&self) -> usize {
        self.original.dim()
    }

    fn score(&self, x: &Sample) -> Result<ScoreVector> {
        let c = self.components(x)?;
        combine(&c.model_scores, &c.attr_scores, c.alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Maximum allowed absolute accuracy drop within each near bucket.
    pub budget: f64,
    pub alpha_cap: f64,
    pub tolerance: f64,
    /// Bucket edges; `[0, 0.1, 0.2]` yields buckets `[0,0.1)` and `[0.1,0.2)`.
    pub bucket_edges: Vec<f64>,
    pub mid_alpha: f64,
    pub far_threshold: f64,
    pub epsilon: f64,
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget >= 0.0) {
            return Err(Error::param("budget", "must be >= 0"));
        }
        if !(self.alpha_cap > 0.0 && self.alpha_cap.is_finite()) {
            return Err(Error::param("alpha_cap", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if self.bucket_edges.len() < 2 {
            return Err(Error::param("bucket_edges", "need at least two edges"));
        }
        // The resulting policy must be valid whatever alphas are chosen.
        UShapeParams {
            near_buckets: self
                .bucket_edges
                .windows(2)
                .map(|e| GapBucket {
                    lower: e[0],
                    upper: e[1],
                    alpha: 0.0,
                })
                .collect(),
            mid_alpha: self.mid_alpha,
            far_threshold: self.far_threshold,
            epsilon: self.epsilon,
        }
        .validate()
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            budget: 0.005,
            alpha_cap: 10.0,
            tolerance: 1e-3,
            bucket_edges: vec![0.0, 0.1, 0.2],
            mid_alpha: 0.02,
            far_threshold: 0.8,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketReport {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub original_accuracy: f64,
    pub copy_accuracy: f64,
    pub alpha: f64,
}

impl BucketReport {
    pub fn accuracy_drop(&self) -> f64 {
        self.original_accuracy - self.copy_accuracy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub params: UShapeParams,
    pub buckets: Vec<BucketReport>,
}

/// Chooses each near bucket's weight as the largest `alpha` in
/// `[0, alpha_cap]` whose accuracy drop on that bucket's samples stays within
/// the budget. Buckets without samples get `mid_alpha`.
pub fn calibrate_ushape(
    model: &PrototypeModel,
    field: &AttractorField,
    dataset: &LabeledDataset,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport> {
    if dataset.is_empty() {
        return Err(Error::Contract("calibration dataset is empty".into()));
    }
    cfg.validate()?;

    let points: Vec<(ScoreVector, Vec<f64>, usize, f64)> = dataset
        .items
        .iter()
        .map(|(x, label)| {
            let m = model.score(x)?;
            let a = field.scores(x)?;
            let g = top2_gap(&m)?;
            Ok((m, a, *label, g))
        })
        .collect::<Result<_>>()?;

    let mut buckets = Vec::new();
    let mut reports = Vec::new();
    for edges in cfg.bucket_edges.windows(2) {
        let (lower, upper) = (edges[0], edges[1]);
        let members: Vec<&(ScoreVector, Vec<f64>, usize, f64)> = points
            .iter()
            .filter(|p| p.3 >= lower && p.3 < upper)
            .collect();
        let accuracy_at = |alpha: f64| -> f64 {
            let hits = members
                .iter()
                .filter(|(m, a, label, _)| {
                    let raw: Vec<f64> = m
                        .as_slice()
                        .iter()
                        .zip(a)
                        .map(|(m, a)| m + alpha * a)
                        .collect();
                    argmax(&raw) == *label
                })
                .count();
            hits as f64 / members.len() as f64
        };
        let (alpha, original_accuracy, copy_accuracy) = if members.is_empty() {
            (cfg.mid_alpha, f64::NAN, f64::NAN)
        } else {
            let base = accuracy_at(0.0);
            let within = |alpha: f64| base - accuracy_at(alpha) <= cfg.budget;
            let alpha = if within(cfg.alpha_cap) {
                cfg.alpha_cap
            } else {
                let (mut lo, mut hi) = (0.0, cfg.alpha_cap);
                while hi - lo > cfg.tolerance {
                    let mid = 0.5 * (lo + hi);
                    if within(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            (alpha, base, accuracy_at(alpha))
        };
        buckets.push(GapBucket {
            lower,
            upper,
            alpha,
        });
        reports.push(BucketReport {
            lower,
            upper,
            count: members.len(),
            original_accuracy,
            copy_accuracy,
            alpha,
        });
    }

    let params = UShapeParams {
        near_buckets: buckets,
        mid_alpha: cfg.mid_alpha,
        far_threshold: cfg.far_threshold,
        epsilon: cfg.epsilon,
    };
    params.validate()?;
    Ok(CalibrationReport {
        params,
        buckets: reports,
    })
}
