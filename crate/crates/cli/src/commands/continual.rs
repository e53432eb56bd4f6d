use ratact_core::continual::{make_stream, run_stream, RunOutput};
use ratact_core::diagnostics::{self, default_collapse_probe, drift_report, DriftReport};
use ratact_core::seed;
use serde::Serialize;

use super::{mean, num, parallel, seeds};
use crate::config::{self, resolve_out_dir, ContinualConfig, ExperimentConfig};
use crate::error::CliError;
use crate::output::OutDir;
use crate::svg::{LinePlot, Series};
use crate::RunArgs;

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    mean_auc: f64,
    diverged: bool,
    diverged_at_task: Option<usize>,
    divergence: Option<String>,
    spikes: usize,
    drift: Option<DriftReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ContinualConfig,
    seeds: Vec<SeedSummary>,
}

pub fn run_seed(cfg: &ContinualConfig, data: &ratact_core::data::Dataset, s: u64) -> Result<RunOutput, CliError> {
    let stream = make_stream(data, cfg.stream.config(seed::derive(s, seed::STREAM_TASKS)))?;
    let spec = cfg.network.spec(data.dim(), stream.classes_per_task(), s)?;
    Ok(run_stream(&spec, &stream, &cfg.run)?)
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let ExperimentConfig::Continual(cfg) = config::load(&a.config)? else {
        return Err(CliError::Config("train-continual needs a `continual` experiment config".into()));
    };
    let seeds = seeds(a.seed, &cfg.seeds)?;
    let data = cfg.dataset.load()?;
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), cfg.out_dir.as_deref()))?;

    let runs = parallel(a.jobs, seeds.clone(), |s| run_seed(&cfg, &data, s))?;

    let mut table = String::from("seed,task,auc,final_accuracy,diverged\n");
    let mut summaries = Vec::new();
    let mut acc_series = Vec::new();
    for (&s, r) in seeds.iter().zip(&runs) {
        let mut epochs = String::from("task,epoch,mean_loss,accuracy,spike\n");
        for e in &r.epochs {
            epochs.push_str(&format!(
                "{},{},{},{},{}\n",
                e.task,
                e.epoch,
                num(e.mean_loss),
                num(e.accuracy),
                u8::from(e.spike)
            ));
        }
        out.write(&format!("epochs_seed{s}.csv"), &epochs)?;
        if !r.diagnostics.is_empty() {
            out.write(&format!("diagnostics_seed{s}.csv"), &diagnostics::to_csv(&r.diagnostics))?;
        }
        for (t, (auc, fin)) in r.report.task_auc.iter().zip(&r.report.task_final_accuracy).enumerate() {
            let dead = r.report.diverged_at_task.is_some_and(|d| t >= d);
            table.push_str(&format!("{s},{t},{},{},{}\n", num(*auc), num(*fin), u8::from(dead)));
        }
        acc_series.push(Series {
            name: format!("seed {s}"),
            points: r.epochs.iter().enumerate().map(|(i, e)| (i as f64, e.accuracy)).collect(),
        });
        summaries.push(SeedSummary {
            seed: s,
            mean_auc: r.report.mean_auc(),
            diverged: r.report.diverged,
            diverged_at_task: r.report.diverged_at_task,
            divergence: r.divergence.clone(),
            spikes: r.spike_count(),
            drift: drift_report(&r.diagnostics, &r.final_rationals, &default_collapse_probe()).ok(),
        });
    }
    out.write("plasticity.csv", &table)?;

    let tasks = cfg.stream.n_tasks;
    let mut agg = String::from("task,mean_auc,min_auc,max_auc\n");
    let (mut mean_pts, mut min_pts, mut max_pts) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..tasks {
        let v: Vec<f64> = runs.iter().map(|r| r.report.task_auc[t]).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let m = mean(&v);
        agg.push_str(&format!("{t},{},{},{}\n", num(m), num(lo), num(hi)));
        mean_pts.push((t as f64, m));
        min_pts.push((t as f64, lo));
        max_pts.push((t as f64, hi));
    }
    out.write("plasticity_summary.csv", &agg)?;
    out.write_json("summary.json", &Summary { config: &cfg, seeds: summaries })?;

    let auc_plot = LinePlot {
        title: "Per-task training-accuracy AUC".into(),
        x_label: "task".into(),
        y_label: "AUC".into(),
        series: vec![
            Series { name: "mean".into(), points: mean_pts },
            Series { name: "min".into(), points: min_pts },
            Series { name: "max".into(), points: max_pts },
        ],
        log_y: false,
    };
    out.write("plasticity.svg", &auc_plot.render())?;
    let acc_plot = LinePlot {
        title: "Training accuracy per epoch".into(),
        x_label: "epoch".into(),
        y_label: "accuracy".into(),
        series: acc_series,
        log_y: false,
    };
    out.write("accuracy.svg", &acc_plot.render())?;

    for s in seeds.iter().zip(&runs).filter(|(_, r)| r.report.diverged) {
        eprintln!("seed {} diverged: {}", s.0, s.1.divergence.as_deref().unwrap_or("unknown"));
    }
    eprintln!("wrote {}", out.root().display());
    Ok(())
}
