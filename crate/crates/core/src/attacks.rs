//! Attack harness over rewritten copies.
//!
//! Two attacks are provided, both able to target several colluding copies at
//! once:
//!
//! - [`deepfool_collusion`]: a score-based iterative attack. Each iteration
//!   aggregates the normalized outputs of all colluding copies, estimates the
//!   gradient of the aggregated margin of the clean class by central finite
//!   differences and steps against it. This models an adversary holding an
//!   approximate white-box view of the copies.
//! - [`boundary_collusion`]: a decision-based random walk along the decision
//!   boundary that only consults hard labels. A proposal is accepted only when
//!   every colluding copy still misclassifies it.
//!
//! [`replication_experiment`] and [`collusion_curve`] run an attack over a
//! dataset and measure how often the adversarial samples also fool a victim
//! copy the adversary does not hold.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurvePoint, RateCurve};
use crate::error::{check_dim, Error, Result};
use crate::export::fmt_sig9;
use crate::model::{Classifier, LabeledDataset};
use crate::numeric::{argmax, l2_distance, l2_norm, Sample, ScoreVector};
use crate::rewriter::RewrittenCopy;
use crate::seed::{stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessLevel {
    /// Only predicted labels are consulted.
    HardLabel,
    /// Score vectors are consulted, as by an adversary that has
    /// reverse-engineered an approximate white-box model.
    ApproximateWhiteBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Deepfool,
    Boundary,
}

impl AttackKind {
    pub fn access_level(self) -> AccessLevel {
        match self {
            AttackKind::Deepfool => AccessLevel::ApproximateWhiteBox,
            AttackKind::Boundary => AccessLevel::HardLabel,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Deepfool => "deepfool",
            AttackKind::Boundary => "boundary",
        }
    }
}

/// How colluding copies' scores are merged by the score-based attack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Margin of the unweighted mean of normalized score vectors.
    #[default]
    Mean,
    /// Smallest per-copy margin.
    MinMargin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub max_iters: usize,
    pub step_size: f64,
    pub l2_budget: f64,
    pub fd_delta: f64,
    pub num_boundary_candidates: usize,
    pub aggregation: Aggregation,
    /// Uniform-noise draws tried when looking for an adversarial start.
    pub init_attempts: usize,
    /// Orthogonal step, relative to the current distance to the source.
    pub spherical_step: f64,
    /// Step toward the source, relative to the current distance.
    pub source_step: f64,
    /// Multiplicative step-size adaptation factor.
    pub step_adaptation: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_iters: 100,
            step_size: 0.02,
            l2_budget: 1.0,
            fd_delta: 1e-3,
            num_boundary_candidates: 10,
            aggregation: Aggregation::Mean,
            init_attempts: 100,
            spherical_step: 0.01,
            source_step: 0.01,
            step_adaptation: 1.5,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("l2_budget", self.l2_budget),
            ("fd_delta", self.fd_delta),
            ("spherical_step", self.spherical_step),
            ("source_step", self.source_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if self.num_boundary_candidates == 0 {
            return Err(Error::param(
                "num_boundary_candidates",
                "must be at least 1",
            ));
        }
        if self.init_attempts == 0 {
            return Err(Error::param("init_attempts", "must be at least 1"));
        }
        if !(self.step_adaptation > 1.0) {
            return Err(Error::param("step_adaptation", "must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Success,
    /// Iterations ran out, or the final point lies outside the L2 budget.
    BudgetExhausted,
    /// No starting point misclassified by every copy was found.
    InitFailed,
    /// The copies disagree on the clean sample, so there is nothing to attack.
    Disagreement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub success: bool,
    pub status: AttackStatus,
    pub x_prime: Option<Sample>,
    pub iterations_used: usize,
    pub l2_distance: f64,
    /// Predictions of each attacked copy at `x_prime` (empty when absent).
    pub final_predictions: Vec<usize>,
}

impl AttackOutcome {
    fn without_point(status: AttackStatus, iterations_used: usize) -> Self {
        AttackOutcome {
            success: false,
            status,
            x_prime: None,
            iterations_used,
            l2_distance: f64::INFINITY,
            final_predictions: Vec::new(),
        }
    }
}

fn check_inputs(copies: &[RewrittenCopy], x: &Sample, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if copies.is_empty() {
        return Err(Error::Contract("an attack needs at least one copy".into()));
    }
    for c in copies {
        check_dim(c.dim(), x.dim())?;
    }
    Ok(())
}

/// Original-model scores at `x` when every copy wraps the same model.
fn shared_model_scores(copies: &[RewrittenCopy], x: &[f64]) -> Option<ScoreVector> {
    copies
        .iter()
        .all(|c| c.shares_original(&copies[0]))
        .then(|| copies[0].model_scores_at(x))
}

fn copy_predictions<'a>(
    copies: &'a [RewrittenCopy],
    x: &'a [f64],
) -> impl Iterator<Item = usize> + 'a {
    let shared = shared_model_scores(copies, x);
    copies.iter().map(move |c| match &shared {
        Some(m) => argmax(&c.score_given(m, x)),
        None => c.predict_coords(x),
    })
}

/// The class all copies assign to `x`, or `None` when they disagree.
pub fn common_prediction(copies: &[RewrittenCopy], x: &[f64]) -> Option<usize> {
    let mut preds = copy_predictions(copies, x);
    let first = preds.next()?;
    preds.all(|p| p == first).then_some(first)
}

/// Whether every copy assigns `x` a class other than `class`.
pub fn adversarial_on_all(copies: &[RewrittenCopy], x: &[f64], class: usize) -> bool {
    copy_predictions(copies, x).all(|p| p != class)
}

fn margin(scores: &[f64], class: usize) -> f64 {
    let other = scores
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != class)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[class] - other
}

fn aggregated_margin(copies: &[RewrittenCopy], x: &[f64], class: usize, how: Aggregation) -> f64 {
    let shared = shared_model_scores(copies, x);
    let scores = copies.iter().map(|c| match &shared {
        Some(m) => c.score_given(m, x),
        None => c.score_coords(x),
    });
    match how {
        Aggregation::Mean => {
            let mut mean = vec![0.0; copies[0].classes()];
            for sc in scores {
                for (m, s) in mean.iter_mut().zip(sc) {
                    *m += s;
                }
            }
            let n = copies.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            margin(&mean, class)
        }
        Aggregation::MinMargin => scores
            .map(|sc| margin(&sc, class))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Clips to the unit cube, then pulls back onto the L2 ball around `origin`.
/// Both sets are convex and the ball's center lies in the cube, so scaling
/// toward `origin` keeps the point inside the cube.
fn project(point: &mut [f64], origin: &[f64], radius: f64) {
    for v in point.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let dist = l2_distance(point, origin);
    if dist > radius {
        let s = radius / dist;
        for (p, o) in point.iter_mut().zip(origin) {
            *p = o + (*p - o) * s;
        }
    }
}

fn random_unit(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = l2_norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn finish(
    copies: &[RewrittenCopy],
    x: &Sample,
    point: Vec<f64>,
    class: usize,
    iters: usize,
    budget: f64,
) -> AttackOutcome {
    let l2 = l2_distance(&point, x.coords());
    let final_predictions: Vec<usize> = copies.iter().map(|c| c.predict_coords(&point)).collect();
    let success = l2 <= budget && final_predictions.iter().all(|p| *p != class);
    AttackOutcome {
        success,
        status: if success {
            AttackStatus::Success
        } else {
            AttackStatus::BudgetExhausted
        },
        x_prime: Some(Sample::clipped(point)),
        iterations_used: iters,
        l2_distance: l2,
        final_predictions,
    }
}

/// Score-based collusion attack driven by the aggregated margin gradient.
pub fn deepfool_collusion(
    copies: &[RewrittenCopy],
    x: &Sample,
    cfg: &AttackConfig,
    rng: &mut StreamRng,
) -> Result<AttackOutcome> {
    check_inputs(copies, x, cfg)?;
    let origin = x.coords();
    let Some(class) = common_prediction(copies, origin) else {
        return Ok(AttackOutcome::without_point(AttackStatus::Disagreement, 0));
    };
    let dim = x.dim();
    let mut point = origin.to_vec();
    let mut probe = point.clone();
    let mut grad = vec![0.0; dim];

    for iter in 1..=cfg.max_iters {
        for j in 0..dim {
            probe[j] = point[j] + cfg.fd_delta;
            let up = aggregated_margin(copies, &probe, class, cfg.aggregation);
            probe[j] = point[j] - cfg.fd_delta;
            let down = aggregated_margin(copies, &probe, class, cfg.aggregation);
            probe[j] = point[j];
            grad[j] = (up - down) / (2.0 * cfg.fd_delta);
        }
        let norm = l2_norm(&grad);
        let direction = if norm > 0.0 && norm.is_finite() {
            grad.iter().map(|g| -g / norm).collect()
        } else {
            random_unit(rng, dim)
        };
        for (p, d) in point.iter_mut().zip(&direction) {
            *p += cfg.step_size * d;
        }
        project(&mut point, origin, cfg.l2_budget);
        probe.copy_from_slice(&point);
        if adversarial_on_all(copies, &point, class) {
            return Ok(finish(copies, x, point, class, iter, cfg.l2_budget));
        }
    }
    Ok(finish(
        copies,
        x,
        point,
        class,
        cfg.max_iters,
        cfg.l2_budget,
    ))
}

/// One boundary-walk proposal: an orthogonal step on the sphere around the
/// source followed by a contraction toward it.
fn boundary_proposal(
    origin: &[f64],
    current: &[f64],
    spherical_step: f64,
    source_step: f64,
    rng: &mut StreamRng,
) -> (Vec<f64>, Vec<f64>) {
    let dim = origin.len();
    let to_source: Vec<f64> = origin.iter().zip(current).map(|(o, c)| o - c).collect();
    let dist = l2_norm(&to_source);
    let unit: Vec<f64> = to_source.iter().map(|v| v / dist).collect();

    let mut perturb: Vec<f64> = (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let along: f64 = perturb.iter().zip(&unit).map(|(p, u)| p * u).sum();
    perturb
        .iter_mut()
        .zip(&unit)
        .for_each(|(p, u)| *p -= along * u);
    let pn = l2_norm(&perturb).max(f64::MIN_POSITIVE);
    let scale = spherical_step * dist / pn;

    let mut spherical: Vec<f64> = current
        .iter()
        .zip(&perturb)
        .map(|(c, p)| c + p * scale)
        .collect();
    let sd = l2_distance(&spherical, origin);
    spherical
        .iter_mut()
        .zip(origin)
        .for_each(|(s, o)| *s = o + (*s - o) * dist / sd);
    for v in spherical.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    let new_dist = l2_distance(&spherical, origin);
    let shrink = (1.0 - source_step * dist / new_dist.max(f64::MIN_POSITIVE)).max(0.0);
    let candidate: Vec<f64> = spherical
        .iter()
        .zip(origin)
        .map(|(s, o)| (o + (s - o) * shrink).clamp(0.0, 1.0))
        .collect();
    (spherical, candidate)
}

/// Acceptance test used by the boundary walk: the proposal must stay
/// adversarial on every colluding copy.
pub fn accepts(copies: &[RewrittenCopy], candidate: &[f64], class: usize) -> bool {
    adversarial_on_all(copies, candidate, class)
}

/// Decision-based collusion attack: a random walk along the joint decision
/// boundary of all colluding copies, contracting toward the clean sample.
pub fn boundary_collusion(
    copies: &[RewrittenCopy],
    x: &Sample,
    cfg: &AttackConfig,
    rng: &mut StreamRng,
) -> Result<AttackOutcome> {
    boundary_collusion_traced(copies, x, cfg, rng).map(|(outcome, _)| outcome)
}

/// [`boundary_collusion`] that also returns the distance of the accepted
/// iterate to `x` after initialization and after every iteration.
pub fn boundary_collusion_traced(
    copies: &[RewrittenCopy],
    x: &Sample,
    cfg: &AttackConfig,
    rng: &mut StreamRng,
) -> Result<(AttackOutcome, Vec<f64>)> {
    check_inputs(copies, x, cfg)?;
    let origin = x.coords();
    let Some(class) = common_prediction(copies, origin) else {
        return Ok((
            AttackOutcome::without_point(AttackStatus::Disagreement, 0),
            Vec::new(),
        ));
    };
    let dim = x.dim();

    let Some(start) = (0..cfg.init_attempts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect::<Vec<f64>>())
        .find(|p| accepts(copies, p, class))
    else {
        return Ok((
            AttackOutcome::without_point(AttackStatus::InitFailed, 0),
            Vec::new(),
        ));
    };

    // Blend the start toward the source while it stays adversarial.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..25 {
        let mid = 0.5 * (lo + hi);
        let blend: Vec<f64> = origin
            .iter()
            .zip(&start)
            .map(|(o, s)| o + mid * (s - o))
            .collect();
        if accepts(copies, &blend, class) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut current: Vec<f64> = origin
        .iter()
        .zip(&start)
        .map(|(o, s)| o + hi * (s - o))
        .collect();
    let mut dist = l2_distance(&current, origin);
    let mut trace = vec![dist];

    let mut spherical_step = cfg.spherical_step;
    let mut source_step = cfg.source_step;
    let mut iters = 0;
    for _ in 0..cfg.max_iters {
        if dist <= 1e-12 {
            break;
        }
        iters += 1;
        let (mut spherical_ok, mut source_ok) = (0usize, 0usize);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for _ in 0..cfg.num_boundary_candidates {
            let (spherical, candidate) =
                boundary_proposal(origin, &current, spherical_step, source_step, rng);
            if !accepts(copies, &spherical, class) {
                continue;
            }
            spherical_ok += 1;
            if !accepts(copies, &candidate, class) {
                continue;
            }
            source_ok += 1;
            let d = l2_distance(&candidate, origin);
            if d < dist && best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                best = Some((candidate, d));
            }
        }
        if let Some((c, d)) = best {
            current = c;
            dist = d;
        }
        let trials = cfg.num_boundary_candidates as f64;
        if spherical_ok as f64 / trials > 0.5 {
            spherical_step *= cfg.step_adaptation;
        } else if (spherical_ok as f64 / trials) < 0.2 {
            spherical_step /= cfg.step_adaptation;
        }
        if spherical_ok > 0 {
            if source_ok as f64 / spherical_ok as f64 > 0.25 {
                source_step *= cfg.step_adaptation;
            } else {
                source_step /= cfg.step_adaptation;
            }
        }
        source_step = source_step.min(0.5);
        spherical_step = spherical_step.min(1.0);
        trace.push(dist);
    }
    Ok((
        finish(copies, x, current, class, iters, cfg.l2_budget),
        trace,
    ))
}

/// Runs the chosen attack.
pub fn run_attack(
    kind: AttackKind,
    copies: &[RewrittenCopy],
    x: &Sample,
    cfg: &AttackConfig,
    rng: &mut StreamRng,
) -> Result<AttackOutcome> {
    match kind {
        AttackKind::Deepfool => deepfool_collusion(copies, x, cfg, rng),
        AttackKind::Boundary => boundary_collusion(copies, x, cfg, rng),
    }
}

/// One attacked sample within an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackRecord {
    pub sample_id: usize,
    pub n_colluders: usize,
    /// Prediction of the attacked copies at the clean sample.
    pub clean_class: usize,
    pub outcome: AttackOutcome,
    /// The adversarial sample also changes the victim copy's prediction.
    pub replicated: bool,
}

/// Writes `sample_id,n_colluders,success,replicated,l2,iters`.
pub fn write_records_csv<W: Write>(records: &[AttackRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "sample_id,n_colluders,success,replicated,l2,iters")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.sample_id,
            r.n_colluders,
            u8::from(r.outcome.success),
            u8::from(r.replicated),
            fmt_sig9(r.outcome.l2_distance),
            r.outcome.iterations_used
        )?;
    }
    Ok(())
}

fn sample_rng(seed: u64, kind: AttackKind, n_colluders: usize, sample_id: usize) -> StreamRng {
    stream(
        seed,
        &format!("attack/{}/n{}", kind.label(), n_colluders),
        sample_id as u64,
    )
}

/// Attacks `x` with `colluders` and checks the result against `victim`.
fn attack_and_replicate(
    colluders: &[RewrittenCopy],
    victim: &RewrittenCopy,
    sample_id: usize,
    x: &Sample,
    kind: AttackKind,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackRecord> {
    let mut rng = sample_rng(seed, kind, colluders.len(), sample_id);
    let clean_class = colluders[0].predict(x)?;
    let outcome = run_attack(kind, colluders, x, cfg, &mut rng)?;
    let replicated = match (&outcome.x_prime, outcome.success) {
        (Some(xp), true) => victim.predict(xp)? != victim.predict(x)?,
        _ => false,
    };
    Ok(AttackRecord {
        sample_id,
        n_colluders: colluders.len(),
        clean_class,
        outcome,
        replicated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationReport {
    pub attempts: usize,
    pub successes: usize,
    pub replicated: usize,
    /// Successful attacks on the adversary's own copy over attempts.
    pub initial_rate: f64,
    /// Successful adversarial samples that also fool the victim, over
    /// successes; `None` when nothing succeeded.
    pub replication_rate: Option<f64>,
    pub records: Vec<AttackRecord>,
}

/// Attacks every sample the attacker's copy classifies correctly and applies
/// the resulting adversarial samples to the victim's copy.
pub fn replication_experiment(
    attacker: &RewrittenCopy,
    victim: &RewrittenCopy,
    dataset: &LabeledDataset,
    kind: AttackKind,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<ReplicationReport> {
    if dataset.is_empty() {
        return Err(Error::Contract(
            "replication experiment on an empty dataset".into(),
        ));
    }
    cfg.validate()?;
    let colluders = std::slice::from_ref(attacker);
    let records: Vec<AttackRecord> = dataset
        .items
        .par_iter()
        .enumerate()
        .map(|(id, (x, label))| {
            if attacker.predict(x)? != *label {
                return Ok(None);
            }
            attack_and_replicate(colluders, victim, id, x, kind, cfg, seed).map(Some)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let attempts = records.len();
    let successes = records.iter().filter(|r| r.outcome.success).count();
    let replicated = records.iter().filter(|r| r.replicated).count();
    Ok(ReplicationReport {
        attempts,
        successes,
        replicated,
        initial_rate: if attempts == 0 {
            0.0
        } else {
            successes as f64 / attempts as f64
        },
        replication_rate: (successes > 0).then(|| replicated as f64 / successes as f64),
        records,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollusionReport {
    /// Fraction of attempted samples whose adversarial sample fools the victim.
    pub curve: RateCurve,
    /// Fraction of attempted samples on which the attack succeeded against
    /// all colluders.
    pub initial_curve: RateCurve,
    pub records: Vec<AttackRecord>,
}

/// Runs the collusion attack with the first `n` copies of `pool` for every
/// `n` in `colluder_counts`. A sample is attempted when all `n` colluders
/// classify it correctly.
pub fn collusion_curve(
    pool: &[RewrittenCopy],
    victim: &RewrittenCopy,
    dataset: &LabeledDataset,
    kind: AttackKind,
    cfg: &AttackConfig,
    colluder_counts: &[usize],
    seed: u64,
) -> Result<CollusionReport> {
    if dataset.is_empty() {
        return Err(Error::Contract(
            "collusion experiment on an empty dataset".into(),
        ));
    }
    cfg.validate()?;
    if colluder_counts.is_empty() || colluder_counts.iter().any(|n| *n == 0 || *n > pool.len()) {
        return Err(Error::param(
            "max_colluders",
            "colluder counts must lie in 1..=pool size",
        ));
    }
    let mut curve = RateCurve::default();
    let mut initial_curve = RateCurve::default();
    let mut all = Vec::new();
    for &n in colluder_counts {
        let colluders = &pool[..n];
        let records: Vec<AttackRecord> = dataset
            .items
            .par_iter()
            .enumerate()
            .map(|(id, (x, label))| {
                for c in colluders {
                    if c.predict(x)? != *label {
                        return Ok(None);
                    }
                }
                attack_and_replicate(colluders, victim, id, x, kind, cfg, seed).map(Some)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let attempts = records.len() as u64;
        let replicated = records.iter().filter(|r| r.replicated).count() as u64;
        let successes = records.iter().filter(|r| r.outcome.success).count() as u64;
        curve
            .points
            .push(CurvePoint::from_counts(n, replicated, attempts));
        initial_curve
            .points
            .push(CurvePoint::from_counts(n, successes, attempts));
        all.extend(records);
    }
    Ok(CollusionReport {
        curve,
        initial_curve,
        records: all,
    })
}
