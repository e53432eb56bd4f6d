use rand::Rng as _;
use ratact_core::continual::probe_batch;
use ratact_core::network::{Loss, Mlp};
use ratact_core::ntk::{kernel_from_jacobian, ntk_trace, NtkReport, NtkSummary};
use ratact_core::{seed, Matrix};
use serde::Serialize;

use super::{num, parallel, seeds};
use crate::config::{self, resolve_out_dir, ExperimentConfig, NtkConfig};
use crate::error::CliError;
use crate::output::OutDir;
use crate::svg::{LinePlot, Series};
use crate::NtkArgs;

#[derive(Serialize)]
struct SeedTrace {
    seed: u64,
    snapshots: Vec<NtkSummary>,
}

/// Kernel snapshots for one seed, training on random minibatches between them.
pub fn trace_seed(cfg: &NtkConfig, data: &ratact_core::data::Dataset, s: u64) -> Result<Vec<NtkReport>, CliError> {
    let spec = cfg.network.spec(data.dim(), data.classes, s)?;
    let mut net = Mlp::build(spec)?;
    let probe = probe_batch(data, cfg.batch_size, s);
    let mut rng = seed::derived_rng(s, seed::STREAM_BATCHES);
    let train_batch = cfg.train_batch.min(data.len());
    let reports = ntk_trace(&mut net, &probe, cfg.snapshots, cfg.every, |net, steps| {
        for _ in 0..steps {
            let rows: Vec<usize> = (0..train_batch).map(|_| rng.random_range(0..data.len())).collect();
            let x = data.features.select_rows(&rows);
            let y: Vec<usize> = rows.iter().map(|&r| data.labels[r]).collect();
            net.train_step(&x, Loss::CrossEntropy(&y), cfg.coeff_decay)?;
        }
        Ok(())
    })?;
    Ok(reports)
}

fn self_test(b: usize, a: &NtkArgs) -> Result<(), CliError> {
    let r = kernel_from_jacobian(&Matrix::identity(b), 0)?;
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), None))?;
    out.write("ntk_selftest.csv", &r.eigenvalues_csv())?;
    println!("{}", serde_json::to_string_pretty(&r.summary()).expect("serializable"));
    if r.numerical_rank != b {
        return Err(CliError::Numeric(format!("identity kernel rank {} != {b}", r.numerical_rank)));
    }
    Ok(())
}

pub fn run(a: &NtkArgs) -> Result<(), CliError> {
    if let Some(b) = a.self_test {
        return self_test(b, a);
    }
    let path = a.config.as_ref().expect("clap requires a config without --self-test");
    let ExperimentConfig::Ntk(cfg) = config::load(path)? else {
        return Err(CliError::Config("ntk needs an `ntk` experiment config".into()));
    };
    if cfg.batch_size < 2 || cfg.snapshots == 0 {
        return Err(CliError::Config("ntk needs batch_size >= 2 and snapshots >= 1".into()));
    }
    let seeds = seeds(a.seed, &cfg.seeds)?;
    let data = cfg.dataset.load()?;
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), cfg.out_dir.as_deref()))?;

    let traces = parallel(a.jobs, seeds.clone(), |s| {
        trace_seed(&cfg, &data, s).map_err(|e| match e {
            CliError::Numeric(msg) => CliError::Numeric(format!("seed {s}: {msg}")),
            other => other,
        })
    });
    let traces = match traces {
        Ok(t) => t,
        Err(CliError::Numeric(msg)) => {
            out.write_json("ntk_explosion.json", &serde_json::json!({ "error": msg }))?;
            return Err(CliError::Numeric(msg));
        }
        Err(e) => return Err(e),
    };

    let mut summary = String::from("seed,snapshot,step,batch_size,rank,lambda_max,lambda_min\n");
    let mut json = Vec::new();
    let mut series = Vec::new();
    for (&s, reports) in seeds.iter().zip(&traces) {
        for (k, r) in reports.iter().enumerate() {
            out.write(&format!("ntk_seed{s}_snap{k}.csv"), &r.eigenvalues_csv())?;
            summary.push_str(&format!(
                "{s},{k},{},{},{},{},{}\n",
                r.step,
                r.batch_size,
                r.numerical_rank,
                num(r.lambda_max()),
                num(r.lambda_min())
            ));
        }
        let (first, last) = (&reports[0], &reports[reports.len() - 1]);
        for (label, r) in [("init", first), ("final", last)].into_iter().take(reports.len().min(2)) {
            series.push(Series {
                name: format!("seed {s} {label}"),
                points: r.eigenvalues.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
            });
        }
        json.push(SeedTrace {
            seed: s,
            snapshots: reports.iter().map(NtkReport::summary).collect(),
        });
    }
    out.write("ntk_summary.csv", &summary)?;
    out.write_json("ntk_summary.json", &json)?;
    let plot = LinePlot {
        title: "NTK eigenvalue spectrum".into(),
        x_label: "index".into(),
        y_label: "log10 eigenvalue".into(),
        series,
        log_y: true,
    };
    out.write("ntk_spectrum.svg", &plot.render())?;
    eprintln!("wrote {}", out.root().display());
    Ok(())
}
