//! Union-of-balls formulation of copy diversity.
//!
//! Adversarial regions are closed d-dimensional balls. The original model
//! owns a set `O` shared by every copy; copy `i` adds its own attractor set
//! `A_i`, so its adversarial region is `C_i = O ∪ A_i`. A colluding attacker
//! samples uniformly from `C_1`, keeps the point only if it lies in every
//! colluder's region, and succeeds when the point also lies in the victim's.
//!
//! [`simulate_form2`] is the Monte Carlo estimate; [`oracle_form2`] evaluates
//! the same conditional volume ratio on a dense regular grid.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurvePoint, RateCurve};
use crate::error::{check_dim, Error, Result};
use crate::seed::{stream, StreamRng};

const TRIAL_BLOCK: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Region {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", "must be positive"));
        }
        if center.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("center", "coordinates must lie in [0, 1]"));
        }
        Ok(Region { center, radius })
    }

    #[inline]
    fn covers(&self, p: &[f64]) -> bool {
        let mut d2 = 0.0;
        for (a, b) in self.center.iter().zip(p) {
            d2 += (a - b) * (a - b);
        }
        d2 <= self.radius * self.radius
    }
}

/// Whether `p` lies in at least one closed ball of `regions`.
pub fn contains(regions: &[Region], p: &[f64]) -> Result<bool> {
    for r in regions {
        check_dim(r.center.len(), p.len())?;
    }
    Ok(regions.iter().any(|r| r.covers(p)))
}

fn covers_any(regions: &[Region], p: &[f64]) -> bool {
    regions.iter().any(|r| r.covers(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Form2Params {
    pub dim: usize,
    pub num_original: usize,
    pub num_attractor: usize,
    pub original_radius: (f64, f64),
    pub attractor_radius: (f64, f64),
    pub num_trials: usize,
    pub max_colluders: usize,
}

impl Default for Form2Params {
    fn default() -> Self {
        Form2Params {
            dim: 3,
            num_original: 20,
            num_attractor: 80,
            original_radius: (0.02, 0.05),
            attractor_radius: (0.02, 0.05),
            num_trials: 100_000,
            max_colluders: 10,
        }
    }
}

impl Form2Params {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        for (name, (lo, hi)) in [
            ("original_radius", self.original_radius),
            ("attractor_radius", self.attractor_radius),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::param(name, "need 0 < low <= high"));
            }
        }
        if self.num_original + self.num_attractor == 0 {
            return Err(Error::param(
                "num_original",
                "copies need at least one region",
            ));
        }
        if self.num_trials < 1 {
            return Err(Error::param("num_trials", "must be at least 1"));
        }
        if self.max_colluders < 1 {
            return Err(Error::param("max_colluders", "must be at least 1"));
        }
        Ok(())
    }
}

/// Region sets for one simulated deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub original: Vec<Region>,
    /// Attractor regions of each colluding copy, in colluder order.
    pub attackers: Vec<Vec<Region>>,
    pub victim: Vec<Region>,
}

impl Deployment {
    /// Draws `O`, the colluders' and the victim's attractor sets from
    /// independent streams (uniform centers in the unit cube, uniform radii).
    pub fn generate(params: &Form2Params, seed: u64) -> Result<Self> {
        params.validate()?;
        let gen = |label: &str, index: u64, count: usize, radius: (f64, f64)| {
            let mut rng = stream(seed, label, index);
            random_regions(&mut rng, count, params.dim, radius)
        };
        Ok(Deployment {
            original: gen("sim2/O", 0, params.num_original, params.original_radius),
            attackers: (0..params.max_colluders)
                .map(|l| {
                    gen(
                        "sim2/atk",
                        l as u64,
                        params.num_attractor,
                        params.attractor_radius,
                    )
                })
                .collect(),
            victim: gen("sim2/vic", 0, params.num_attractor, params.attractor_radius),
        })
    }

    pub fn dim(&self) -> usize {
        self.original
            .iter()
            .chain(self.attackers.iter().flatten())
            .chain(&self.victim)
            .map(|r| r.center.len())
            .next()
            .unwrap_or(0)
    }

    fn copy_region(&self, attractor: &[Region]) -> Vec<Region> {
        self.original.iter().chain(attractor).cloned().collect()
    }

    fn validate(&self) -> Result<()> {
        if self.attackers.is_empty() {
            return Err(Error::param("attackers", "need at least one colluder"));
        }
        let d = self.dim();
        for r in self
            .original
            .iter()
            .chain(self.attackers.iter().flatten())
            .chain(&self.victim)
        {
            check_dim(d, r.center.len())?;
        }
        if self.original.is_empty() && self.attackers[0].is_empty() {
            return Err(Error::Contract(
                "first colluder has an empty adversarial region".into(),
            ));
        }
        Ok(())
    }
}

fn random_regions(
    rng: &mut StreamRng,
    count: usize,
    dim: usize,
    radius: (f64, f64),
) -> Vec<Region> {
    (0..count)
        .map(|_| {
            let center = (0..dim).map(|_| rng.random::<f64>()).collect();
            let r = if radius.1 > radius.0 {
                rng.random_range(radius.0..radius.1)
            } else {
                radius.0
            };
            Region { center, radius: r }
        })
        .collect()
}

/// Exact uniform sampler over a union of balls.
///
/// A ball is picked with probability proportional to its volume, a point is
/// drawn uniformly inside it, and the point is kept with probability
/// `1 / (number of balls covering it)`.
pub struct UnionSampler<'a> {
    regions: &'a [Region],
    cumulative: Vec<f64>,
    dim: usize,
}

impl<'a> UnionSampler<'a> {
    pub fn new(regions: &'a [Region]) -> Result<Self> {
        let first = regions
            .first()
            .ok_or_else(|| Error::Contract("cannot sample from an empty union".into()))?;
        let dim = first.center.len();
        let mut acc = 0.0;
        let cumulative = regions
            .iter()
            .map(|r| {
                acc += r.radius.powi(dim as i32);
                acc
            })
            .collect();
        Ok(UnionSampler {
            regions,
            cumulative,
            dim,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let total = *self.cumulative.last().expect("nonempty");
        loop {
            let u = rng.random::<f64>() * total;
            let idx = self
                .cumulative
                .partition_point(|c| *c <= u)
                .min(self.regions.len() - 1);
            let ball = &self.regions[idx];
            let p = point_in_ball(rng, &ball.center, ball.radius, self.dim);
            let coverage = self.regions.iter().filter(|r| r.covers(&p)).count().max(1);
            if coverage == 1 || rng.random::<f64>() * (coverage as f64) < 1.0 {
                return p;
            }
        }
    }
}

fn point_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64, dim: usize) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return center.to_vec();
    }
    let scale = radius * rng.random::<f64>().powf(1.0 / dim as f64) / norm;
    center
        .iter()
        .zip(&dir)
        .map(|(c, v)| c + v * scale)
        .collect()
}

/// Monte Carlo collusion curve over a freshly generated deployment.
pub fn simulate_form2(params: &Form2Params, seed: u64) -> Result<RateCurve> {
    let deployment = Deployment::generate(params, seed)?;
    simulate_deployment(&deployment, params.num_trials, seed)
}

/// Monte Carlo collusion curve for explicit region sets.
///
/// For each `n`, `num_trials` points are drawn uniformly from the first
/// colluder's region; a trial is accepted when its point lies in all `n`
/// colluders' regions, and succeeds when it also lies in the victim's.
pub fn simulate_deployment(
    deployment: &Deployment,
    num_trials: usize,
    seed: u64,
) -> Result<RateCurve> {
    deployment.validate()?;
    let copies: Vec<Vec<Region>> = deployment
        .attackers
        .iter()
        .map(|a| deployment.copy_region(a))
        .collect();
    let victim = deployment.copy_region(&deployment.victim);
    let sampler = UnionSampler::new(&copies[0])?;
    let blocks = num_trials.div_ceil(TRIAL_BLOCK);

    let points = (1..=copies.len())
        .map(|n| {
            let (accepted, successes) = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let len = TRIAL_BLOCK.min(num_trials - b * TRIAL_BLOCK);
                    let mut rng = stream(seed, &format!("sim2/trials/{n}"), b as u64);
                    let (mut acc, mut hit) = (0u64, 0u64);
                    for _ in 0..len {
                        let p = sampler.sample(&mut rng);
                        if copies[1..n].iter().all(|c| covers_any(c, &p)) {
                            acc += 1;
                            hit += u64::from(covers_any(&victim, &p));
                        }
                    }
                    (acc, hit)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            CurvePoint::from_counts(n, successes, accepted)
        })
        .collect();
    Ok(RateCurve { points })
}

/// Grid oracle for the conditional probability
/// `vol(C_1 ∩ ... ∩ C_n ∩ C_vic) / vol(C_1 ∩ ... ∩ C_n)`, using cell
/// midpoints of a `resolution^d` grid over the bounding box of `C_1`.
pub fn oracle_deployment(
    deployment: &Deployment,
    n: usize,
    resolution: usize,
) -> Result<Option<f64>> {
    deployment.validate()?;
    let d = deployment.dim();
    if d > 3 {
        return Err(Error::Unsupported(format!(
            "grid oracle supports d <= 3, got {d}"
        )));
    }
    if n < 1 || n > deployment.attackers.len() {
        return Err(Error::param("n", "must lie in 1..=colluders"));
    }
    if resolution < 2 {
        return Err(Error::param("resolution", "must be at least 2"));
    }
    let copies: Vec<Vec<Region>> = deployment.attackers[..n]
        .iter()
        .map(|a| deployment.copy_region(a))
        .collect();
    let victim = deployment.copy_region(&deployment.victim);

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in &copies[0] {
        for j in 0..d {
            lo[j] = lo[j].min(r.center[j] - r.radius);
            hi[j] = hi[j].max(r.center[j] + r.radius);
        }
    }
    let step: Vec<f64> = (0..d)
        .map(|j| (hi[j] - lo[j]) / resolution as f64)
        .collect();

    // Rasterize each copy's union into a bitmap, visiting only cells inside
    // each ball's bounding box.
    let total = resolution.pow(d as u32);
    let raster = |regions: &[Region]| -> Vec<bool> {
        let mut grid = vec![false; total];
        let mut p = vec![0.0; d];
        for r in regions {
            let range: Vec<(usize, usize)> = (0..d)
                .map(|j| {
                    let a = ((r.center[j] - r.radius - lo[j]) / step[j])
                        .floor()
                        .max(0.0) as usize;
                    let b = (((r.center[j] + r.radius - lo[j]) / step[j]).ceil() as usize)
                        .min(resolution);
                    (a, b)
                })
                .collect();
            if range.iter().any(|(a, b)| a >= b) {
                continue;
            }
            let mut idx: Vec<usize> = range.iter().map(|(a, _)| *a).collect();
            'cells: loop {
                let mut flat = 0;
                for j in (0..d).rev() {
                    p[j] = lo[j] + (idx[j] as f64 + 0.5) * step[j];
                    flat = flat * resolution + idx[j];
                }
                if !grid[flat] && r.covers(&p) {
                    grid[flat] = true;
                }
                for j in 0..d {
                    idx[j] += 1;
                    if idx[j] < range[j].1 {
                        continue 'cells;
                    }
                    idx[j] = range[j].0;
                }
                break;
            }
        }
        grid
    };

    let mut inside = raster(&copies[0]);
    for c in &copies[1..] {
        let g = raster(c);
        inside.iter_mut().zip(g).for_each(|(a, b)| *a = *a && b);
    }
    let vic = raster(&victim);
    let denom = inside.iter().filter(|v| **v).count();
    if denom == 0 {
        return Ok(None);
    }
    let numer = inside.iter().zip(&vic).filter(|(a, b)| **a && **b).count();
    Ok(Some(numer as f64 / denom as f64))
}

/// Grid oracle for the deployment generated from `(params, seed)`.
pub fn oracle_form2(
    params: &Form2Params,
    seed: u64,
    n: usize,
    resolution: usize,
) -> Result<Option<f64>> {
    let deployment = Deployment::generate(params, seed)?;
    oracle_deployment(&deployment, n, resolution)
}
