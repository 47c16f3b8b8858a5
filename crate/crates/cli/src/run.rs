//! Experiment runners. Each returns its output files in memory; writing is
//! left to [`crate::manifest::write_bundle`].

use std::fmt::Write as _;

use adaptive_attractors::analysis::{
    accuracy_table, cluster_summary, shift_points, write_shift_csv,
};
use adaptive_attractors::attacks::{collusion_curve, replication_experiment, write_records_csv};
use adaptive_attractors::export::{fmt_opt, fmt_sig9};
use adaptive_attractors::sim1::{oracle_curve, simulate_form1};
use adaptive_attractors::sim2::simulate_form2;
use clap::ValueEnum;

use crate::config::ExperimentConfig;
use crate::desk::Desk;
use crate::manifest::Output;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Sim1,
    Sim2,
    Replication,
    Collusion,
    Shift,
    Calibrate,
    Accuracy,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Sim1 => "sim1",
            Experiment::Sim2 => "sim2",
            Experiment::Replication => "replication",
            Experiment::Collusion => "collusion",
            Experiment::Shift => "shift",
            Experiment::Calibrate => "calibrate",
            Experiment::Accuracy => "accuracy",
        }
    }
}

fn csv<F>(f: F) -> anyhow::Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs `experiment` under a resolved configuration.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> anyhow::Result<Vec<Output>> {
    match experiment {
        Experiment::Sim1 => sim1(cfg),
        Experiment::Sim2 => {
            let curve = simulate_form2(&cfg.sim2, cfg.seed)?;
            Ok(vec![Output::new("curve.csv", csv(|b| curve.write_csv(b))?)])
        }
        Experiment::Replication => replication(&Desk::build(cfg)?),
        Experiment::Collusion => collusion(&Desk::build(cfg)?),
        Experiment::Shift => shift(&Desk::build(cfg)?),
        Experiment::Calibrate => calibrate(&Desk::build(cfg)?),
        Experiment::Accuracy => accuracy(&Desk::build(cfg)?),
    }
}

fn sim1(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Output>> {
    let params = cfg.sim1.params();
    let curve = simulate_form1(&params, cfg.seed)?;
    let oracle = oracle_curve(params.eta, params.threshold, params.max_colluders)?;
    let mut text = String::from("n,oracle\n");
    for (i, v) in oracle.iter().enumerate() {
        writeln!(text, "{},{}", i + 1, fmt_sig9(*v))?;
    }
    Ok(vec![
        Output::new("curve.csv", csv(|b| curve.write_csv(b))?),
        Output::new("oracle.csv", text.into_bytes()),
    ])
}

fn replication(desk: &Desk) -> anyhow::Result<Vec<Output>> {
    let cfg = &desk.config;
    let samples = desk.attack_set()?;
    let mut summary =
        String::from("policy,attempts,successes,replicated,initial_rate,replication_rate\n");
    let mut outputs = Vec::new();
    for &kind in &cfg.attack.policies {
        let attacker = desk.copy(kind, crate::desk::buyer_key(cfg.seed, 0))?;
        let victim = desk.victim(kind)?;
        let report = replication_experiment(
            &attacker,
            &victim,
            &samples,
            cfg.replication.kind,
            &cfg.attack.params,
            cfg.seed,
        )?;
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            kind.label(),
            report.attempts,
            report.successes,
            report.replicated,
            fmt_sig9(report.initial_rate),
            fmt_opt(report.replication_rate)
        )?;
        outputs.push(Output::new(
            format!("{}/outcomes.csv", kind.label()),
            csv(|b| write_records_csv(&report.records, b))?,
        ));
    }
    outputs.insert(0, Output::new("replication.csv", summary.into_bytes()));
    Ok(outputs)
}

fn collusion(desk: &Desk) -> anyhow::Result<Vec<Output>> {
    let cfg = &desk.config;
    let samples = desk.attack_set()?;
    let counts: Vec<usize> = (1..=cfg.attack.max_colluders).collect();
    let mut outputs = Vec::new();
    for &kind in &cfg.attack.policies {
        let pool = desk.pool(kind, cfg.attack.max_colluders)?;
        let victim = desk.victim(kind)?;
        let report = collusion_curve(
            &pool,
            &victim,
            &samples,
            cfg.attack.kind,
            &cfg.attack.params,
            &counts,
            cfg.seed,
        )?;
        let dir = kind.label();
        outputs.push(Output::new(
            format!("{dir}/curve.csv"),
            csv(|b| report.curve.write_csv(b))?,
        ));
        outputs.push(Output::new(
            format!("{dir}/initial_curve.csv"),
            csv(|b| report.initial_curve.write_csv(b))?,
        ));
        outputs.push(Output::new(
            format!("{dir}/outcomes.csv"),
            csv(|b| write_records_csv(&report.records, b))?,
        ));
    }
    Ok(outputs)
}

fn shift(desk: &Desk) -> anyhow::Result<Vec<Output>> {
    let cfg = &desk.config;
    let samples = desk.attack_set()?;
    let counts = &cfg.shift.colluder_counts;
    let max = counts.iter().copied().max().unwrap_or(1);
    let mut outputs = Vec::new();
    for &kind in &cfg.attack.policies {
        let pool = desk.pool(kind, max)?;
        let victim = desk.victim(kind)?;
        let report = collusion_curve(
            &pool,
            &victim,
            &samples,
            cfg.attack.kind,
            &cfg.attack.params,
            counts,
            cfg.seed,
        )?;
        let points = shift_points(&pool[0], &samples, &report.records)?;
        let mut clusters =
            String::from("n,points,low_centroid,high_centroid,low_count,high_count,gap\n");
        for &n in counts {
            let at_n: Vec<_> = points
                .iter()
                .filter(|p| p.n_colluders == n)
                .copied()
                .collect();
            if at_n.len() < 2 {
                writeln!(clusters, "{n},{},nan,nan,0,0,nan", at_n.len())?;
                continue;
            }
            let s = cluster_summary(&at_n)?;
            writeln!(
                clusters,
                "{n},{},{},{},{},{},{}",
                at_n.len(),
                fmt_sig9(s.low_centroid),
                fmt_sig9(s.high_centroid),
                s.low_count,
                s.high_count,
                fmt_sig9(s.gap)
            )?;
        }
        let dir = kind.label();
        outputs.push(Output::new(
            format!("{dir}/shift.csv"),
            csv(|b| write_shift_csv(&points, b))?,
        ));
        outputs.push(Output::new(
            format!("{dir}/clusters.csv"),
            clusters.into_bytes(),
        ));
    }
    Ok(outputs)
}

fn calibrate(desk: &Desk) -> anyhow::Result<Vec<Output>> {
    let report = &desk.calibration;
    let mut text = String::from("lower,upper,count,original_accuracy,copy_accuracy,alpha\n");
    for b in &report.buckets {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            fmt_sig9(b.lower),
            fmt_sig9(b.upper),
            b.count,
            fmt_sig9(b.original_accuracy),
            fmt_sig9(b.copy_accuracy),
            fmt_sig9(b.alpha)
        )?;
    }
    Ok(vec![
        Output::new("ushape.toml", toml::to_string(&report.params)?.into_bytes()),
        Output::new("calibration.csv", text.into_bytes()),
    ])
}

fn accuracy(desk: &Desk) -> anyhow::Result<Vec<Output>> {
    let key = crate::desk::buyer_key(desk.config.seed, 0);
    let fixed = desk.copy(crate::config::PolicyKind::Fixed, key)?;
    let adaptive = desk.copy(crate::config::PolicyKind::Adaptive, key)?;
    let table = accuracy_table(&*desk.model, &fixed, &adaptive, &desk.dataset)?;
    Ok(vec![Output::new(
        "accuracy.csv",
        csv(|b| table.write_csv(b))?,
    )])
}
