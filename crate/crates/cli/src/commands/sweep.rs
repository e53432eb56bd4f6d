use ratact_core::continual::{Cell, StreamConfig, SweepSetup, SweepTable};
use ratact_core::network::{ActivationKind, MlpSpec};
use ratact_core::seed;

use super::{num, parallel};
use crate::config::{self, resolve_out_dir, ExperimentConfig, SweepConfig};
use crate::error::CliError;
use crate::output::OutDir;
use crate::svg::Heatmap;
use crate::RunArgs;

pub fn setup(cfg: &SweepConfig, data: &ratact_core::data::Dataset, base_seed: u64) -> Result<SweepSetup, CliError> {
    let stream: StreamConfig = cfg.stream.config(seed::derive(base_seed, seed::STREAM_TASKS));
    let outputs = match stream.kind {
        ratact_core::continual::StreamKind::SplitClasses => data.classes / stream.n_tasks.max(1),
        _ => data.classes,
    };
    let mut widths = vec![data.dim()];
    widths.extend(&cfg.hidden);
    widths.push(outputs);
    let mut spec = MlpSpec::uniform(widths, ActivationKind::Relu, base_seed);
    spec.layer_norm = cfg.layer_norm;
    spec.init = cfg.init;
    spec.adam = cfg.adam;
    spec.validate()?;
    let s = SweepSetup {
        spec,
        stream,
        run: cfg.run.clone(),
        cells: cfg.cells()?,
        repeats: cfg.repeats,
        init: cfg.cell_init,
    };
    s.validate()?;
    Ok(s)
}

fn heatmap(table: &SweepTable, cells: &[Cell], value: impl Fn(&ratact_core::continual::SweepRow) -> f64, title: &str) -> Heatmap {
    let mut nums: Vec<usize> = cells.iter().map(|c| c.num_count).collect();
    let mut dens: Vec<usize> = cells.iter().map(|c| c.den_degree).collect();
    nums.sort_unstable();
    nums.dedup();
    dens.sort_unstable();
    dens.dedup();
    let mut values = vec![vec![f64::NAN; nums.len()]; dens.len()];
    for r in &table.rows {
        let i = dens.iter().position(|&d| d == r.den_degree).unwrap();
        let j = nums.iter().position(|&n| n == r.num_count).unwrap();
        values[i][j] = value(r);
    }
    Heatmap {
        title: title.into(),
        x_label: "numerator coefficients".into(),
        y_label: "denominator degree".into(),
        x_ticks: nums.iter().map(usize::to_string).collect(),
        y_ticks: dens.iter().map(usize::to_string).collect(),
        values,
    }
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let ExperimentConfig::DegreeSweep(cfg) = config::load(&a.config)? else {
        return Err(CliError::Config("degree-sweep needs a `degree_sweep` experiment config".into()));
    };
    let data = cfg.dataset.load()?;
    let setup = setup(&cfg, &data, a.seed.unwrap_or(cfg.seed))?;
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), cfg.out_dir.as_deref()))?;

    let outcomes = parallel(a.jobs, setup.jobs(), |j| Ok(setup.run_job(j, &data)?))?;
    let table = setup.aggregate(&outcomes);

    let mut runs = String::from("num_count,den_degree,repeat,mean_auc,diverged,spikes\n");
    for o in &outcomes {
        let (p, m) = o.job.cell.map_or(("relu".to_string(), "relu".to_string()), |c| {
            (c.num_count.to_string(), c.den_degree.to_string())
        });
        runs.push_str(&format!(
            "{p},{m},{},{},{},{}\n",
            o.job.repeat,
            num(o.mean_auc),
            u8::from(o.diverged),
            o.spikes
        ));
    }
    out.write("sweep_runs.csv", &runs)?;
    out.write("sweep.csv", &table.to_csv())?;
    out.write_json("sweep_summary.json", &table)?;
    out.write(
        "sweep_heatmap.svg",
        &heatmap(&table, &setup.cells, |r| r.mean_auc_norm, "Mean AUC / ReLU").render(),
    )?;
    out.write("sweep_std.svg", &heatmap(&table, &setup.cells, |r| r.std_auc, "Std of AUC").render())?;
    eprintln!("wrote {}", out.root().display());
    Ok(())
}
