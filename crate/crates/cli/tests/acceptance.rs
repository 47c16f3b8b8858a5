//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use adaptive_attractors::analysis::{accuracy_table, shift_decompose};
use adaptive_attractors::attacks::{accepts, collusion_curve, AttackKind, CollusionReport};
use adaptive_attractors::curve::{ls_slope, RateCurve};
use adaptive_attractors::model::Classifier;
use adaptive_attractors::numeric::{normalize_l1, Sample};
use adaptive_attractors::rewriter::{combine, mu};
use adaptive_attractors::seed::stream;
use adaptive_attractors::sim1::{
    normal_sf, oracle_curve, oracle_form1, simulate_form1, Form1Params,
};
use adaptive_attractors::sim2::{
    oracle_form2, simulate_deployment, simulate_form2, Deployment, Form2Params, Region,
};
use adaptive_attractors::Error;
use attractor_sim::config::{ExperimentConfig, PolicyKind};
use attractor_sim::desk::Desk;
use rand::Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
/// Name, runtime limit in seconds, and check.
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk(seed: u64) -> Desk {
    let cfg = ExperimentConfig {
        seed,
        ..Default::default()
    }
    .resolve()
    .unwrap();
    Desk::build(&cfg).unwrap()
}

fn z(observed: f64, expected: f64, trials: u64) -> f64 {
    let se = (expected * (1.0 - expected) / trials as f64).sqrt();
    if se == 0.0 {
        if observed == expected {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (observed - expected) / se
    }
}

fn c1_form1_oracle() -> Check {
    let mut worst = 0.0f64;
    let mut fails = Vec::new();
    for eta in [0.3, 0.5, 0.7] {
        for t in [0.5, 1.0] {
            let params = Form1Params {
                eta,
                threshold: t,
                num_samples: 1_000_000,
                max_colluders: 5,
            };
            let curve = simulate_form1(&params, 1).unwrap();
            for n in 1..=5 {
                let p = curve.point(n).unwrap();
                let oracle = oracle_form1(eta, t, n).unwrap();
                let zz = z(p.rate.unwrap_or(f64::NAN), oracle, p.surviving);
                worst = worst.max(zz.abs());
                if zz.is_nan() || zz.abs() > 3.0 {
                    fails.push(format!("eta={eta} t={t} n={n} z={zz:.2}"));
                }
            }
        }
    }
    ensure(fails.is_empty(), format!("max |z| {worst:.2} {fails:?}"))
}

fn c2_form1_degenerate() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0] {
        let base = Form1Params {
            eta: 1.0,
            threshold: t,
            num_samples: 1_000_000,
            max_colluders: 5,
        };
        let shared = simulate_form1(&base, 2).unwrap();
        ok &= shared.points.iter().all(|p| p.rate == Some(1.0));
        let indep = simulate_form1(&Form1Params { eta: 0.0, ..base }, 3).unwrap();
        for p in &indep.points {
            let zz = z(p.rate.unwrap_or(f64::NAN), normal_sf(t), p.surviving);
            ok &= zz.abs() <= 3.0;
            notes.push(format!("{zz:.2}"));
        }
    }
    ensure(ok, format!("eta=1 exact, eta=0 z {}", notes.join(" ")))
}

fn c3_form1_exhaustion() -> Check {
    let cfg = ExperimentConfig::default().resolve().unwrap();
    let params = cfg.sim1.params();
    let curve = simulate_form1(&params, cfg.seed).unwrap();
    let oracle = oracle_curve(params.eta, params.threshold, params.max_colluders).unwrap();
    let Some(end) = curve.exhausted_at() else {
        return Err("no exhaustion within max_colluders".into());
    };
    let observed: Vec<_> = curve
        .points
        .iter()
        .take_while(|p| !p.is_exhausted())
        .collect();
    let mut ok =
        (curve.rate(1).unwrap() - 0.03).abs() <= 3.0 * curve.point(1).unwrap().stderr.unwrap();
    for w in observed.windows(2) {
        let (a, b) = (w[0], w[1]);
        let se = (oracle[a.n - 1] * (1.0 - oracle[a.n - 1]) / a.surviving as f64
            + oracle[b.n - 1] * (1.0 - oracle[b.n - 1]) / b.surviving as f64)
            .sqrt();
        ok &= b.rate.unwrap() >= a.rate.unwrap() - 3.0 * se;
    }
    let last = observed.last().unwrap();
    let asymptote = *oracle.last().unwrap();
    let last_se = (asymptote * (1.0 - asymptote) / last.surviving as f64).sqrt();
    ok &= last.rate.unwrap() <= asymptote + 3.0 * last_se;
    let rates: Vec<String> = observed
        .iter()
        .map(|p| format!("{:.4}({})", p.rate.unwrap(), p.surviving))
        .collect();
    ensure(
        ok,
        format!(
            "t={:.3}, exhausted at n={end}, rates {}, oracle(20)={asymptote:.4}",
            params.threshold,
            rates.join(" ")
        ),
    )
}

fn c4_form2_oracle() -> Check {
    let params = Form2Params {
        dim: 2,
        num_trials: 100_000,
        max_colluders: 5,
        ..Default::default()
    };
    let curve = simulate_form2(&params, 0).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;
    for n in 1..=5 {
        let p = curve.point(n).unwrap();
        let oracle = oracle_form2(&params, 0, n, 4096).unwrap().unwrap();
        let zz = z(p.rate.unwrap(), oracle, p.surviving);
        worst = worst.max(zz.abs());
        ok &= zz.abs() <= 3.0;
    }
    ensure(ok, format!("max |z| {worst:.2}"))
}

fn ball(c: &[f64], r: f64) -> Region {
    Region::new(c.to_vec(), r).unwrap()
}

fn all_one(curve: &RateCurve) -> bool {
    curve.points.iter().all(|p| p.rate == Some(1.0))
}

fn c5_form2_degenerate() -> Check {
    let empty = Form2Params {
        dim: 2,
        num_attractor: 0,
        num_trials: 20_000,
        max_colluders: 5,
        ..Default::default()
    };
    let a = all_one(&simulate_form2(&empty, 4).unwrap());

    let base = Deployment::generate(
        &Form2Params {
            dim: 2,
            num_trials: 20_000,
            max_colluders: 5,
            ..Default::default()
        },
        5,
    )
    .unwrap();
    let same = Deployment {
        attackers: vec![base.attackers[0].clone(); 5],
        victim: base.attackers[0].clone(),
        original: base.original.clone(),
    };
    let b = all_one(&simulate_deployment(&same, 20_000, 6).unwrap());

    let disjoint = Deployment {
        original: vec![ball(&[0.5, 0.5], 0.1)],
        attackers: (0..5)
            .map(|i| vec![ball(&[0.1 + 0.2 * i as f64, 0.1], 0.05)])
            .collect(),
        victim: vec![ball(&[0.5, 0.9], 0.05)],
    };
    let curve = simulate_deployment(&disjoint, 20_000, 7).unwrap();
    let c = curve
        .points
        .iter()
        .filter(|p| p.n >= 2)
        .all(|p| p.rate == Some(1.0));
    ensure(
        a && b && c,
        format!("empty {a}, identical {b}, disjoint {c}"),
    )
}

fn argmax_kept(m: &[f64], a: &[f64], frac: f64) -> bool {
    let m = normalize_l1(m).unwrap();
    // A constant attractor vector shifts every class equally, so any weight is safe.
    let alpha = match mu(&m, a) {
        Ok(limit) => frac * limit,
        Err(Error::ZeroAttractorRange) => 10.0 * frac,
        Err(e) => panic!("{e}"),
    };
    combine(&m, a, alpha).unwrap().argmax() == m.argmax()
}

fn c6_argmax_preservation() -> Check {
    let random_violations: usize = (0..100u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(6, "accept/argmax", b);
            (0..1000)
                .filter(|_| {
                    let c = rng.random_range(2..=10);
                    let m: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-9).collect();
                    let a: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
                    !argmax_kept(&m, &a, rng.random::<f64>())
                })
                .count()
        })
        .sum();
    let q = 20;
    let levels: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
    let mut grid = 0usize;
    let mut grid_violations = 0usize;
    for i in 0..=q {
        for j in 0..=q - i {
            let m = [i as f64, j as f64, (q - i - j) as f64];
            let mut sorted = m;
            sorted.sort_by(|x, y| y.total_cmp(x));
            if sorted[0] == sorted[1] {
                continue;
            }
            for &a0 in &levels {
                for &a1 in &levels {
                    for &a2 in &levels {
                        for k in 0..10 {
                            grid += 1;
                            if !argmax_kept(&m, &[a0, a1, a2], k as f64 / 10.0) {
                                grid_violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(
        random_violations == 0 && grid_violations == 0,
        format!("random 100000: {random_violations} violations, grid {grid}: {grid_violations} violations"),
    )
}

fn c7_copy_score_contract() -> Check {
    let d = desk(0);
    let copies = [
        d.copy(PolicyKind::Fixed, 11).unwrap(),
        d.copy(PolicyKind::Adaptive, 12).unwrap(),
    ];
    let dim = d.config.model.dim;
    let bad: usize = (0..100u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(7, "accept/contract", b);
            (0..1000)
                .filter(|i| {
                    let x = Sample::new((0..dim).map(|_| rng.random::<f64>()).collect()).unwrap();
                    let s = copies[i % 2].score(&x).unwrap();
                    let v = s.as_slice();
                    (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 || v.iter().any(|e| *e < 0.0)
                })
                .count()
        })
        .sum();
    ensure(bad == 0, format!("{bad} of 100000 inputs off contract"))
}

fn c8_calibration_budget() -> Check {
    let d = desk(0);
    let mut ok = true;
    let mut notes = Vec::new();
    for b in &d.calibration.buckets {
        let bound = d.config.calibration.budget + 1.0 / b.count.max(1) as f64;
        ok &= b.accuracy_drop() <= bound;
        notes.push(format!(
            "[{:.1},{:.1}) drop {:.4} <= {:.4} alpha {:.4}",
            b.lower,
            b.upper,
            b.accuracy_drop(),
            bound,
            b.alpha
        ));
    }
    ensure(ok, notes.join("; "))
}

fn c9_accuracy_ordering() -> Check {
    let d = desk(0);
    let key = attractor_sim::desk::buyer_key(d.config.seed, 0);
    let fixed = d.copy(PolicyKind::Fixed, key).unwrap();
    let adaptive = d.copy(PolicyKind::Adaptive, key).unwrap();
    let t = accuracy_table(&*d.model, &fixed, &adaptive, &d.dataset).unwrap();
    ensure(
        t.adaptive >= t.fixed && t.original >= t.adaptive && t.original >= t.fixed,
        format!(
            "original {:.4}, adaptive {:.4}, fixed {:.4} at alpha {}",
            t.original,
            t.adaptive,
            t.fixed,
            d.config.fixed_alpha()
        ),
    )
}

fn collusion(d: &Desk, kind: PolicyKind, attack: AttackKind, counts: &[usize]) -> CollusionReport {
    let max = *counts.iter().max().unwrap();
    let pool = d.pool(kind, max).unwrap();
    let victim = d.victim(kind).unwrap();
    let samples = d.attack_set().unwrap();
    collusion_curve(
        &pool,
        &victim,
        &samples,
        attack,
        &d.config.attack.params,
        counts,
        d.config.seed,
    )
    .unwrap()
}

fn c10_shift_additivity() -> Check {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let counts: Vec<usize> = (1..=12).collect();
    for seed in 0.. {
        if checked >= 500 {
            break;
        }
        let d = desk(seed);
        let samples = d.attack_set().unwrap();
        for kind in [PolicyKind::Fixed, PolicyKind::Adaptive] {
            let report = collusion(&d, kind, AttackKind::Deepfool, &counts);
            let copy = d
                .copy(kind, attractor_sim::desk::buyer_key(seed, 0))
                .unwrap();
            for r in report.records.iter().filter(|r| r.outcome.success) {
                let x = &samples.items[r.sample_id].0;
                let xp = r.outcome.x_prime.as_ref().unwrap();
                let s = shift_decompose(&copy, x, xp, r.clean_class).unwrap();
                let raw = copy.components(x).unwrap().raw_class_score(r.clean_class)
                    - copy.components(xp).unwrap().raw_class_score(r.clean_class);
                worst = worst.max((raw - (s.delta_original + s.delta_attractor)).abs());
                checked += 1;
            }
        }
    }
    ensure(
        checked >= 500 && worst <= 1e-9,
        format!("{checked} attacks, max residual {worst:.2e}"),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
}

fn rates(curve: &RateCurve, ns: &[usize]) -> Vec<f64> {
    ns.iter()
        .map(|n| curve.rate(*n).unwrap_or(f64::NAN))
        .collect()
}

fn c11_collusion_shape() -> Check {
    let ns: Vec<usize> = (1..=12).collect();
    let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    let tail: Vec<usize> = (6..=12).collect();
    let tail_x: Vec<f64> = tail.iter().map(|n| *n as f64).collect();
    let (mut fixed_slopes, mut adaptive_slopes, mut lift) = (Vec::new(), Vec::new(), Vec::new());
    let mut fixed_curves = Vec::new();
    for seed in 0..20 {
        let d = desk(seed);
        let f = rates(
            &collusion(&d, PolicyKind::Fixed, AttackKind::Deepfool, &ns).curve,
            &ns,
        );
        let a = collusion(&d, PolicyKind::Adaptive, AttackKind::Deepfool, &ns).curve;
        fixed_slopes.push(ls_slope(&xs, &f));
        adaptive_slopes.push(ls_slope(&tail_x, &rates(&a, &tail)));
        lift.push(a.rate(12).unwrap() - a.rate(6).unwrap());
        fixed_curves.push(f);
    }
    let mean_curve: Vec<f64> = (0..ns.len())
        .map(|i| mean(&fixed_curves.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect();
    let step_ok = (1..ns.len()).all(|i| {
        let diffs: Vec<f64> = fixed_curves.iter().map(|c| c[i] - c[i - 1]).collect();
        mean(&diffs) >= -3.0 * std_err(&diffs)
    });
    let (fs, fse) = (mean(&fixed_slopes), std_err(&fixed_slopes));
    let asl = mean(&adaptive_slopes);
    let lf = mean(&lift);
    ensure(
        step_ok && fs > 3.0 * fse && asl < 0.5 * fs && lf <= 0.05,
        format!(
            "fixed slope {fs:.4} (se {fse:.4}), adaptive slope[6,12] {asl:.4}, adaptive rate(12)-rate(6) {lf:.4}, fixed mean rate(1) {:.3} rate(12) {:.3}, steps non-decreasing {step_ok}",
            mean_curve[0], mean_curve[11]
        ),
    )
}

fn c12_boundary_collusion() -> Check {
    let d = desk(0);
    let pool = d.pool(PolicyKind::Fixed, 8).unwrap();
    let samples = d.attack_set().unwrap();
    let mut rng = stream(12, "accept/proposals", 0);
    let mut subset_violations = 0;
    for (x, _) in &samples.items {
        let class = pool[0].predict(x).unwrap();
        for _ in 0..50 {
            let s = rng.random_range(0.01..0.6);
            let p: Vec<f64> = x
                .coords()
                .iter()
                .map(|c| (c + s * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0))
                .collect();
            for n in 1..pool.len() {
                if accepts(&pool[..n + 1], &p, class) && !accepts(&pool[..n], &p, class) {
                    subset_violations += 1;
                }
            }
        }
    }

    let ns: Vec<usize> = (1..=8).collect();
    let mut wins = vec![0usize; ns.len()];
    for seed in 0..20 {
        let d = desk(seed);
        let f = collusion(&d, PolicyKind::Fixed, AttackKind::Boundary, &ns).curve;
        let a = collusion(&d, PolicyKind::Adaptive, AttackKind::Boundary, &ns).curve;
        for (i, n) in ns.iter().enumerate() {
            if a.rate(*n).unwrap_or(0.0) <= f.rate(*n).unwrap_or(0.0) {
                wins[i] += 1;
            }
        }
    }
    let dominance = wins.iter().all(|w| *w >= 16);
    ensure(
        subset_violations == 0 && dominance,
        format!("subset violations {subset_violations}; runs with adaptive <= fixed per n=1..8: {wins:?} of 20 (need 16)"),
    )
}

fn c13_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_attractor-sim");
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for sub in [
        "sim1",
        "sim2",
        "replication",
        "collusion",
        "shift",
        "calibrate",
        "accuracy",
    ] {
        let mut bundles = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{sub}-{threads}"));
            let status = Command::new(bin)
                .args([
                    sub,
                    "--seed",
                    "5",
                    "--threads",
                    threads,
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap();
            if !status.status.success() {
                return Err(format!(
                    "{sub} failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            bundles.push(csvs(&out));
        }
        if bundles[0].is_empty() || bundles[0] != bundles[1] {
            mismatched.push(sub);
        }
    }
    ensure(
        mismatched.is_empty(),
        format!("7 subcommands, mismatched {mismatched:?}"),
    )
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("formulation-1 oracle equivalence", 30, c1_form1_oracle),
        ("formulation-1 degenerate cases", 5, c2_form1_degenerate),
        ("formulation-1 exhaustion", 60, c3_form1_exhaustion),
        ("formulation-2 oracle equivalence", 60, c4_form2_oracle),
        ("formulation-2 degenerate cases", 10, c5_form2_degenerate),
        ("argmax preservation", 60, c6_argmax_preservation),
        ("copy score contract", 60, c7_copy_score_contract),
        ("calibration budget", 60, c8_calibration_budget),
        ("accuracy ordering", 60, c9_accuracy_ordering),
        ("shift additivity", 600, c10_shift_additivity),
        (
            "fixed vs adaptive collusion shape",
            600,
            c11_collusion_shape,
        ),
        ("boundary collusion", 1200, c12_boundary_collusion),
        ("determinism across thread counts", 600, c13_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (ok, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1}s, limit {limit}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 13 criteria passed", 13 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
