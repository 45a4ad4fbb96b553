use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmucb::bandit::{bound_holds, coverage_fraction, run_batch, SyntheticSetup};
use mmucb::studies::{radii_trace, width_cell, MixtureKind, ProblemSettings, WidthCell};
use mmucb::{BanditRun, RunConfig};
use rayon::prelude::*;

use crate::aggregate::{aggregate, mean_std, write_aggregate};
use crate::config::ExperimentConfig;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Every configured policy on every seed, indexed `[seed][policy]`.
fn bandit_runs(cfg: &ExperimentConfig) -> Result<Vec<Vec<BanditRun>>> {
    let policies = cfg.policies()?;
    let spec = cfg.mixture_spec()?;
    let run_cfg = RunConfig::new(cfg.rounds, cfg.params()?);
    let actions = cfg.action_source()?;
    let noise = cfg.noise();
    let runs = run_batch(&policies, &cfg.run_seeds(), &spec, &run_cfg, |seed| {
        SyntheticSetup { map: cfg.features.build(seed)?, actions: actions.clone(), noise, theta_bound: cfg.bound_b }
            .build(seed)
    })?;
    Ok(runs)
}

pub struct PolicySummary {
    pub policy: &'static str,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub bound_held: f64,
    pub halted: usize,
}

/// Writes one CSV per run plus `aggregate.csv`, and returns per-policy summaries.
pub fn cmd_regret(cfg: &ExperimentConfig) -> Result<Vec<PolicySummary>> {
    let runs = bandit_runs(cfg)?;
    let seeds = cfg.run_seeds();
    for (seed, per_seed) in seeds.iter().zip(&runs) {
        for run in per_seed {
            let w = create(&cfg.out, &format!("{}_seed{seed}.csv", run.policy.name()))?;
            run.write_csv(w)?;
        }
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for j in 0..runs[0].len() {
        let column: Vec<&BanditRun> = runs.iter().map(|r| &r[j]).collect();
        rows.extend(aggregate(&column, cfg.smooth_bandwidth));
        let finals: Vec<f64> = column.iter().map(|r| r.cumulative_regret()).collect();
        let (mean_regret, std_regret) = mean_std(&finals);
        summary.push(PolicySummary {
            policy: column[0].policy.name(),
            mean_regret,
            std_regret,
            bound_held: column.iter().filter(|r| bound_holds(r)).count() as f64 / column.len() as f64,
            halted: column.iter().filter(|r| r.halted_at.is_some()).count(),
        });
    }
    write_aggregate(create(&cfg.out, "aggregate.csv")?, &rows, cfg.smooth_bandwidth.is_some())?;
    println!("{:<6} {:>6} {:>22} {:>12} {:>7}", "policy", "runs", "regret (mean +- std)", "bound held", "halted");
    for s in &summary {
        println!(
            "{:<6} {:>6} {:>22} {:>12.3} {:>7}",
            s.policy,
            runs.len(),
            format!("{:.4} +- {:.4}", s.mean_regret, s.std_regret),
            s.bound_held,
            s.halted
        );
    }
    Ok(summary)
}

/// Fraction of runs whose confidence sets contained `theta*` at every round,
/// per policy. Writes `coverage.csv`.
pub fn cmd_coverage(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, f64)>> {
    let runs = bandit_runs(cfg)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "coverage.csv")?);
    w.write_record(["policy", "runs", "rounds", "delta", "coverage"])?;
    let mut out = Vec::new();
    for j in 0..runs[0].len() {
        let column: Vec<BanditRun> = runs.iter().map(|r| r[j].clone()).collect();
        let frac = coverage_fraction(&column)?;
        let name = column[0].policy.name();
        w.write_record([name, &runs.len().to_string(), &cfg.rounds.to_string(), &cfg.delta.to_string(), &frac.to_string()])?;
        println!("{name}: coverage {frac:.4} over {} runs (target >= {:.4})", runs.len(), 1.0 - cfg.delta);
        out.push((name, frac));
    }
    w.flush()?;
    Ok(out)
}

fn width_settings(cfg: &ExperimentConfig) -> ProblemSettings {
    ProblemSettings {
        input_dim: cfg.widths.input_dim,
        lengthscale: cfg.widths.lengthscale,
        sigma: cfg.sigma(),
        bound_b: cfg.bound_b,
        delta: cfg.delta,
        c: cfg.c,
        seed: cfg.seed,
    }
}

/// Writes `widths.csv` (`method,d,T,mean_width`) and fails if any cell breaks
/// `cmm <= amm < oful`.
pub fn cmd_widths(cfg: &ExperimentConfig) -> Result<Vec<WidthCell>> {
    let s = width_settings(cfg);
    let cells: Vec<WidthCell> = cfg
        .widths
        .cells()
        .par_iter()
        .map(|&(d, t)| width_cell(&s, d, t, cfg.widths.test_points))
        .collect::<mmucb::Result<_>>()?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "widths.csv")?);
    w.write_record(["method", "d", "T", "mean_width"])?;
    for c in &cells {
        for (method, v) in [("cmm", c.cmm), ("amm", c.amm), ("oful", c.oful)] {
            w.write_record([method, &c.d.to_string(), &c.t.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    let bad: Vec<_> = cells.iter().filter(|c| !(c.ordered() && c.cmm <= c.amm && c.amm < c.oful)).collect();
    for c in &bad {
        eprintln!("width ordering violated at d={} T={}: {} test points", c.d, c.t, c.violations);
    }
    if !bad.is_empty() {
        bail!("{} of {} width cells violate cmm <= amm < oful", bad.len(), cells.len());
    }
    println!("{} cells written; cmm <= amm < oful holds at every test point", cells.len());
    Ok(cells)
}

/// Writes `radii.csv` with per-round radii of the standard and adaptive
/// mixtures on the same data, and fails if `r_amm < r_oful` breaks on a
/// standard row.
pub fn cmd_radii_compare(cfg: &ExperimentConfig) -> Result<()> {
    let s = ProblemSettings {
        input_dim: cfg.features.input_dim,
        lengthscale: cfg.features.lengthscale,
        sigma: cfg.sigma(),
        bound_b: cfg.bound_b,
        delta: cfg.delta,
        c: cfg.c,
        seed: cfg.seed,
    };
    let beta = Some(cfg.beta());
    let traces: Vec<_> = cfg
        .run_seeds()
        .par_iter()
        .map(|&seed| radii_trace(&s, cfg.features.dim, cfg.rounds, seed, beta))
        .collect::<mmucb::Result<_>>()?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "radii.csv")?);
    w.write_record(["seed", "t", "mixture", "r_mm", "r_amm", "r_oful"])?;
    let mut violations = 0;
    for row in traces.iter().flatten() {
        let kind = match row.mixture {
            MixtureKind::Standard => "standard",
            MixtureKind::Adaptive => "adaptive",
        };
        if row.mixture == MixtureKind::Standard && !(row.r_amm < row.r_oful) {
            violations += 1;
        }
        w.write_record([
            row.seed.to_string(),
            row.t.to_string(),
            kind.to_string(),
            row.r_mm.to_string(),
            row.r_amm.to_string(),
            row.r_oful.to_string(),
        ])?;
    }
    w.flush()?;
    let last = |kind: MixtureKind| {
        let finals: Vec<f64> =
            traces.iter().filter_map(|t| t.iter().rev().find(|r| r.mixture == kind).map(|r| r.r_amm)).collect();
        mean_std(&finals).0
    };
    println!(
        "final R_AMM (mean over {} runs): standard {:.4}, adaptive {:.4}",
        traces.len(),
        last(MixtureKind::Standard),
        last(MixtureKind::Adaptive)
    );
    if violations > 0 {
        bail!("r_amm < r_oful failed on {violations} standard rows");
    }
    Ok(())
}
