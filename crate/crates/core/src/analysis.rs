//! Post-attack analytics: score-shift decomposition, two-cluster summaries,
//! histograms and accuracy tables.

use std::io::{self, Write};

use serde::Serialize;

use crate::attacks::AttackRecord;
use crate::error::{Error, Result};
use crate::export::fmt_sig9;
use crate::model::{accuracy, Classifier, LabeledDataset};
use crate::numeric::Sample;
use crate::rewriter::RewrittenCopy;

/// Victim-class score change split between the original model and the
/// weighted attractor term. Positive values are decreases from `x` to `x'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoreShift {
    pub delta_original: f64,
    pub delta_attractor: f64,
}

impl ScoreShift {
    pub fn total(&self) -> f64 {
        self.delta_original + self.delta_attractor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftPoint {
    pub sample_id: usize,
    pub n_colluders: usize,
    pub delta_original: f64,
    pub delta_attractor: f64,
}

/// Decomposes the raw (pre-normalization) change of `victim_class` in `copy`
/// between `x` and `x_prime`.
pub fn shift_decompose(
    copy: &RewrittenCopy,
    x: &Sample,
    x_prime: &Sample,
    victim_class: usize,
) -> Result<ScoreShift> {
    if victim_class >= copy.classes() {
        return Err(Error::Contract(format!(
            "class {victim_class} out of range for {} classes",
            copy.classes()
        )));
    }
    let before = copy.components(x)?;
    let after = copy.components(x_prime)?;
    let c = victim_class;
    Ok(ScoreShift {
        delta_original: before.model_scores.as_slice()[c] - after.model_scores.as_slice()[c],
        delta_attractor: before.alpha * before.attr_scores[c] - after.alpha * after.attr_scores[c],
    })
}

/// Shift points for every successful record, decomposed on `copy`.
///
/// `copy` is normally the adversary's own copy (the first colluder).
pub fn shift_points(
    copy: &RewrittenCopy,
    dataset: &LabeledDataset,
    records: &[AttackRecord],
) -> Result<Vec<ShiftPoint>> {
    records
        .iter()
        .filter(|r| r.outcome.success)
        .map(|r| {
            let (x, _) = dataset.items.get(r.sample_id).ok_or_else(|| {
                Error::Contract(format!("record refers to missing sample {}", r.sample_id))
            })?;
            let x_prime = r
                .outcome
                .x_prime
                .as_ref()
                .ok_or_else(|| Error::Contract("successful record without a point".into()))?;
            let s = shift_decompose(copy, x, x_prime, r.clean_class)?;
            Ok(ShiftPoint {
                sample_id: r.sample_id,
                n_colluders: r.n_colluders,
                delta_original: s.delta_original,
                delta_attractor: s.delta_attractor,
            })
        })
        .collect()
}

/// Writes `sample_id,n,delta_attractor,delta_original`.
pub fn write_shift_csv<W: Write>(points: &[ShiftPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "sample_id,n,delta_attractor,delta_original")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.sample_id,
            p.n_colluders,
            fmt_sig9(p.delta_attractor),
            fmt_sig9(p.delta_original)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub low_centroid: f64,
    pub high_centroid: f64,
    /// `false` for the low cluster, `true` for the high one, in input order.
    pub in_high: Vec<bool>,
    pub low_count: usize,
    pub high_count: usize,
    /// Empty space between the clusters: smallest high member minus largest
    /// low member, or 0 when a cluster is empty.
    pub gap: f64,
    pub iterations: usize,
}

impl ClusterSummary {
    /// Centroid of the cluster with more members (the low one on ties).
    pub fn larger_centroid(&self) -> f64 {
        if self.high_count > self.low_count {
            self.high_centroid
        } else {
            self.low_centroid
        }
    }
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const MAX_KMEANS_ITERS: usize = 100;

/// One-dimensional 2-means on the attractor component of the shift points.
pub fn cluster_summary(points: &[ShiftPoint]) -> Result<ClusterSummary> {
    let values: Vec<f64> = points.iter().map(|p| p.delta_attractor).collect();
    two_means(&values)
}

/// 2-means on raw values, initialized at the 10th and 90th percentiles.
pub fn two_means(values: &[f64]) -> Result<ClusterSummary> {
    if values.len() < 2 {
        return Err(Error::Contract("clustering needs at least 2 points".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("clustering needs finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut low = percentile(&sorted, 0.1);
    let mut high = percentile(&sorted, 0.9);
    let mut in_high = vec![false; values.len()];
    let mut iterations = 0;
    while iterations < MAX_KMEANS_ITERS {
        iterations += 1;
        let next: Vec<bool> = values
            .iter()
            .map(|v| (v - high).abs() < (v - low).abs())
            .collect();
        let (mut ls, mut ln, mut hs, mut hn) = (0.0, 0usize, 0.0, 0usize);
        for (v, h) in values.iter().zip(&next) {
            if *h {
                hs += v;
                hn += 1;
            } else {
                ls += v;
                ln += 1;
            }
        }
        let new_low = if ln > 0 { ls / ln as f64 } else { low };
        let new_high = if hn > 0 { hs / hn as f64 } else { high };
        let settled = next == in_high && new_low == low && new_high == high;
        in_high = next;
        low = new_low;
        high = new_high;
        if settled {
            break;
        }
    }
    let high_count = in_high.iter().filter(|h| **h).count();
    let low_count = values.len() - high_count;
    let gap = if low_count == 0 || high_count == 0 {
        0.0
    } else {
        let max_low = values
            .iter()
            .zip(&in_high)
            .filter(|(_, h)| !**h)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_high = values
            .iter()
            .zip(&in_high)
            .filter(|(_, h)| **h)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min);
        min_high - max_low
    };
    Ok(ClusterSummary {
        low_centroid: low,
        high_centroid: high,
        in_high,
        low_count,
        high_count,
        gap,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; values outside are clamped into the
    /// end bins.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::param(
                "bins",
                "need at least one bin over a nonempty range",
            ));
        }
        let mut counts = vec![0; bins];
        for v in values {
            counts[Self::index(lo, hi, bins, *v)] += 1;
        }
        Ok(Histogram { lo, hi, counts })
    }

    fn index(lo: f64, hi: f64, bins: usize, v: f64) -> usize {
        let t = ((v - lo) / (hi - lo) * bins as f64).floor();
        (t.max(0.0) as usize).min(bins - 1)
    }

    pub fn bin_of(&self, v: f64) -> usize {
        Self::index(self.lo, self.hi, self.counts.len(), v)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }
}

/// Peak and dip structure of a histogram split at two centroids.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bimodality {
    pub low_peak_bin: usize,
    pub high_peak_bin: usize,
    pub low_peak_count: usize,
    pub high_peak_count: usize,
    pub dip_bin: usize,
    pub dip_count: usize,
}

impl Bimodality {
    /// The dip lies at least `fraction` below both peaks.
    pub fn is_bimodal(&self, fraction: f64) -> bool {
        let limit = (1.0 - fraction) * self.low_peak_count.min(self.high_peak_count) as f64;
        self.high_peak_bin > self.low_peak_bin && (self.dip_count as f64) <= limit
    }
}

/// Finds the tallest bin up to the midpoint of the centroids, the tallest bin
/// after it, and the lowest bin between those two peaks.
pub fn bimodality(hist: &Histogram, summary: &ClusterSummary) -> Bimodality {
    let split = hist.bin_of(0.5 * (summary.low_centroid + summary.high_centroid));
    let tallest = |range: std::ops::Range<usize>| {
        range
            .map(|b| (b, hist.counts[b]))
            .fold(None::<(usize, usize)>, |best, (b, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((b, c)),
            })
    };
    let (low_peak_bin, low_peak_count) = tallest(0..split + 1).unwrap_or((0, 0));
    let (high_peak_bin, high_peak_count) =
        tallest(split + 1..hist.counts.len()).unwrap_or((split, 0));
    let (dip_bin, dip_count) = (low_peak_bin..=high_peak_bin.max(low_peak_bin))
        .map(|b| (b, hist.counts[b]))
        .min_by_key(|(_, c)| *c)
        .unwrap_or((low_peak_bin, low_peak_count));
    Bimodality {
        low_peak_bin,
        high_peak_bin,
        low_peak_count,
        high_peak_count,
        dip_bin,
        dip_count,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub original: f64,
    pub fixed: f64,
    pub adaptive: f64,
}

impl AccuracyTable {
    /// Writes `classifier,accuracy`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "classifier,accuracy")?;
        for (name, v) in [
            ("original", self.original),
            ("fixed", self.fixed),
            ("adaptive", self.adaptive),
        ] {
            writeln!(out, "{name},{}", fmt_sig9(v))?;
        }
        Ok(())
    }
}

pub fn accuracy_table<O, F, A>(
    original: &O,
    fixed: &F,
    adaptive: &A,
    dataset: &LabeledDataset,
) -> Result<AccuracyTable>
where
    O: Classifier + ?Sized,
    F: Classifier + ?Sized,
    A: Classifier + ?Sized,
{
    Ok(AccuracyTable {
        original: accuracy(original, dataset)?,
        fixed: accuracy(fixed, dataset)?,
        adaptive: accuracy(adaptive, dataset)?,
    })
}
