//! Success-rate curves over the number of colluders.

use std::io::{self, Write};

use serde::Serialize;

use crate::export::fmt_opt;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    /// `None` when no sample survived conditioning on all `n` colluders.
    pub rate: Option<f64>,
    pub surviving: u64,
    pub stderr: Option<f64>,
}

impl CurvePoint {
    pub fn from_counts(n: usize, successes: u64, surviving: u64) -> Self {
        if surviving == 0 {
            return CurvePoint {
                n,
                rate: None,
                surviving,
                stderr: None,
            };
        }
        let rate = successes as f64 / surviving as f64;
        CurvePoint {
            n,
            rate: Some(rate),
            surviving,
            stderr: Some((rate * (1.0 - rate) / surviving as f64).sqrt()),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.rate.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RateCurve {
    pub points: Vec<CurvePoint>,
}

impl RateCurve {
    pub fn rate(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).and_then(|p| p.rate)
    }

    pub fn point(&self, n: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.n == n)
    }

    /// First colluder count with no surviving samples.
    pub fn exhausted_at(&self) -> Option<usize> {
        self.points.iter().find(|p| p.is_exhausted()).map(|p| p.n)
    }

    /// Writes `n,rate,surviving,stderr`; exhausted points carry `nan`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,rate,surviving,stderr")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.n,
                fmt_opt(p.rate),
                p.surviving,
                fmt_opt(p.stderr)
            )?;
        }
        Ok(())
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
