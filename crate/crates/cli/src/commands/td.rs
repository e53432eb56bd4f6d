use std::collections::BTreeMap;

use ratact_core::tdprobe::{collect_buffer, fitted_q_run, ProbeConfig, ProbeResult, ProbeSummary, QModelSpec};
use serde::Serialize;

use super::{median, num, parallel, seeds};
use crate::config::{self, resolve_out_dir, ExperimentConfig, QModelConfig, TdConfig};
use crate::error::CliError;
use crate::output::OutDir;
use crate::svg::{LinePlot, Series};
use crate::RunArgs;

#[derive(Serialize)]
struct UtdSummary {
    utd: usize,
    /// Diverged seeds count as infinite.
    median_peak_overestimation: f64,
    diverged_seeds: usize,
    exploded_seeds: usize,
}

#[derive(Serialize)]
struct Summary {
    by_utd: Vec<UtdSummary>,
    runs: Vec<(u64, ProbeSummary)>,
}

pub fn run_one(cfg: &TdConfig, utd: usize, s: u64) -> Result<ProbeResult, CliError> {
    let mdp = cfg.mdp.spec();
    let buffer = collect_buffer(&mdp, cfg.buffer_size, s)?;
    let model = match &cfg.model {
        QModelConfig::Net { network } => QModelSpec::Net {
            spec: network.spec(3, 1, s)?,
        },
        QModelConfig::Tabular { adam } => QModelSpec::Tabular { adam: *adam },
    };
    let probe = ProbeConfig {
        utd,
        env_steps: cfg.env_steps,
        tau: cfg.tau,
        batch_size: cfg.batch_size,
        checkpoint_every: cfg.checkpoint_every,
        reset: cfg.reset,
        coeff_decay: cfg.coeff_decay,
        seed: s,
        thresholds: cfg.thresholds,
    };
    Ok(fitted_q_run(&mdp, &buffer, &model, &probe)?)
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let ExperimentConfig::TdProbe(cfg) = config::load(&a.config)? else {
        return Err(CliError::Config("td-probe needs a `td_probe` experiment config".into()));
    };
    if cfg.utd.is_empty() {
        return Err(CliError::Config("`utd` must not be empty".into()));
    }
    cfg.mdp.spec().validate()?;
    let seeds = seeds(a.seed, &cfg.seeds)?;
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), cfg.out_dir.as_deref()))?;

    let jobs: Vec<(usize, u64)> = cfg.utd.iter().flat_map(|&u| seeds.iter().map(move |&s| (u, s))).collect();
    let results = parallel(a.jobs, jobs.clone(), |(u, s)| run_one(&cfg, u, s))?;

    let mut table = String::from("utd,seed,diverged,peak_overestimation,explosion_flags,final_max_error\n");
    let mut by_utd: BTreeMap<usize, Vec<&ProbeResult>> = BTreeMap::new();
    for (&(u, s), r) in jobs.iter().zip(&results) {
        out.write(&format!("td_utd{u}_seed{s}.csv"), &r.to_csv())?;
        table.push_str(&format!(
            "{u},{s},{},{},{},{}\n",
            u8::from(r.diverged),
            num(r.peak_overestimation),
            r.explosion_flags,
            num(r.final_max_error)
        ));
        by_utd.entry(u).or_default().push(r);
    }
    out.write("td_summary.csv", &table)?;

    let mut series = Vec::new();
    let mut utd_summaries = Vec::new();
    for (&u, runs) in &by_utd {
        let steps: Vec<usize> = runs
            .iter()
            .max_by_key(|r| r.checkpoints.len())
            .map(|r| r.checkpoints.iter().map(|c| c.env_step).collect())
            .unwrap_or_default();
        let mut curve = String::from("step,median_overestimation,min_overestimation,max_overestimation,finite_seeds\n");
        let mut pts = Vec::new();
        for &step in &steps {
            let v: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.checkpoints.iter().find(|c| c.env_step == step))
                .map(|c| c.overestimation)
                .filter(|v| v.is_finite())
                .collect();
            let m = median(&v);
            let lo = v.iter().copied().fold(f64::NAN, f64::min);
            let hi = v.iter().copied().fold(f64::NAN, f64::max);
            curve.push_str(&format!("{step},{},{},{},{}\n", num(m), num(lo), num(hi), v.len()));
            pts.push((step as f64, m));
        }
        out.write(&format!("td_curve_utd{u}.csv"), &curve)?;
        series.push(Series {
            name: format!("utd {u}"),
            points: pts,
        });
        let peaks: Vec<f64> = runs.iter().map(|r| r.peak_or_infinite()).collect();
        utd_summaries.push(UtdSummary {
            utd: u,
            median_peak_overestimation: median(&peaks),
            diverged_seeds: runs.iter().filter(|r| r.diverged).count(),
            exploded_seeds: runs.iter().filter(|r| r.exploded()).count(),
        });
    }
    out.write_json(
        "td_summary.json",
        &Summary {
            by_utd: utd_summaries,
            runs: jobs.iter().map(|j| j.1).zip(results.iter().map(ProbeResult::summary)).collect(),
        },
    )?;
    let plot = LinePlot {
        title: "Median overestimation".into(),
        x_label: "environment step".into(),
        y_label: "E_s[Q - Q*]".into(),
        series,
        log_y: false,
    };
    out.write("td_overestimation.svg", &plot.render())?;
    for ((u, s), r) in jobs.iter().zip(&results).filter(|(_, r)| r.diverged) {
        eprintln!("utd {u} seed {s} diverged: {}", r.first_explosion.as_deref().unwrap_or("unknown"));
    }
    eprintln!("wrote {}", out.root().display());
    Ok(())
}
