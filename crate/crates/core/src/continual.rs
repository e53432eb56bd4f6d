//! Non-stationary classification streams and the training loops that measure
//! plasticity on them.

use serde::{Deserialize, Serialize};

use crate::data::{permutation, Dataset};
use crate::diagnostics::{self, DiagRecord};
use crate::error::{Error, Result};
use crate::fit::{fit_init, FitOptions, Target, DEFAULT_LEAKY_SLOPE};
use crate::matrix::Matrix;
use crate::network::{argmax_rows, ActivationKind, Loss, Mlp, MlpSpec, ResetPolicy};
use crate::rational::{RationalParams, Variant};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Same inputs every task, fresh random label permutation per task.
    LabelReshuffle,
    /// Disjoint contiguous class groups, one group per task.
    SplitClasses,
    /// Same labels, fresh random feature permutation per task.
    InputPermute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub kind: StreamKind,
    pub n_tasks: usize,
    #[serde(default = "default_epochs")]
    pub epochs_per_task: usize,
    #[serde(default)]
    pub seed: u64,
    /// Leave the first task untransformed.
    #[serde(default)]
    pub identity_first: bool,
    /// Use a random subset of this many samples of the base dataset.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_epochs() -> usize {
    10
}

impl StreamConfig {
    pub fn new(kind: StreamKind, n_tasks: usize, seed: u64) -> Self {
        StreamConfig {
            kind,
            n_tasks,
            epochs_per_task: default_epochs(),
            seed,
            identity_first: false,
            samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Transform {
    Labels(Vec<usize>),
    Classes(std::ops::Range<usize>),
    Features(Vec<usize>),
}

/// An ordered sequence of tasks derived from one base dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskStream {
    pub config: StreamConfig,
    base: Dataset,
    transforms: Vec<Transform>,
}

/// One materialized task.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub index: usize,
    pub data: Dataset,
    /// Original class -> task label, for label-reshuffle tasks.
    pub label_map: Option<Vec<usize>>,
}

pub fn make_stream(dataset: &Dataset, config: StreamConfig) -> Result<TaskStream> {
    if config.n_tasks == 0 {
        return Err(Error::Config("a stream needs at least one task".into()));
    }
    if config.epochs_per_task == 0 {
        return Err(Error::Config("epochs per task must be >= 1".into()));
    }
    let mut rng = seed::derived_rng(config.seed, seed::STREAM_TASKS);
    let base = match config.samples {
        Some(n) if n < dataset.len() => {
            if n == 0 {
                return Err(Error::Config("stream sample count must be >= 1".into()));
            }
            let mut rows = permutation(dataset.len(), &mut rng);
            rows.truncate(n);
            rows.sort_unstable();
            dataset.subset(&rows)
        }
        _ => dataset.clone(),
    };
    let classes = base.classes;
    let mut transforms = Vec::with_capacity(config.n_tasks);
    for t in 0..config.n_tasks {
        let identity = t == 0 && config.identity_first;
        transforms.push(match config.kind {
            StreamKind::LabelReshuffle => Transform::Labels(if identity {
                (0..classes).collect()
            } else {
                permutation(classes, &mut rng)
            }),
            StreamKind::InputPermute => Transform::Features(if identity {
                (0..base.dim()).collect()
            } else {
                permutation(base.dim(), &mut rng)
            }),
            StreamKind::SplitClasses => {
                if classes % config.n_tasks != 0 {
                    return Err(Error::Config(format!(
                        "{classes} classes cannot be split evenly into {} tasks",
                        config.n_tasks
                    )));
                }
                let k = classes / config.n_tasks;
                Transform::Classes(t * k..(t + 1) * k)
            }
        });
    }
    Ok(TaskStream {
        config,
        base,
        transforms,
    })
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    /// Number of distinct labels within one task.
    pub fn classes_per_task(&self) -> usize {
        match self.config.kind {
            StreamKind::SplitClasses => self.base.classes / self.config.n_tasks,
            _ => self.base.classes,
        }
    }

    pub fn task(&self, index: usize) -> Result<Task> {
        let tr = self
            .transforms
            .get(index)
            .ok_or_else(|| Error::Index(format!("task {index} of {}", self.len())))?;
        Ok(match tr {
            Transform::Labels(map) => {
                let labels = self.base.labels.iter().map(|&l| map[l]).collect();
                Task {
                    index,
                    data: Dataset {
                        labels,
                        ..self.base.clone()
                    },
                    label_map: Some(map.clone()),
                }
            }
            Transform::Features(perm) => Task {
                index,
                data: Dataset {
                    features: self.base.features.permute_cols(perm),
                    ..self.base.clone()
                },
                label_map: None,
            },
            Transform::Classes(range) => {
                let rows: Vec<usize> = (0..self.base.len())
                    .filter(|&r| range.contains(&self.base.labels[r]))
                    .collect();
                let mut data = self.base.subset(&rows);
                data.labels.iter_mut().for_each(|l| *l -= range.start);
                data.classes = range.len();
                Task {
                    index,
                    data,
                    label_map: None,
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Decoupled weight decay on activation coefficients.
    #[serde(default)]
    pub coeff_decay: f64,
    #[serde(default = "never")]
    pub reset: ResetPolicy,
    /// Record a diagnostics snapshot every this many steps (0 disables).
    #[serde(default)]
    pub diag_every: usize,
    /// An epoch counts as a loss spike when its mean loss exceeds this multiple
    /// of the median of comparable earlier epochs: the same task's earlier
    /// epochs, or for a task's first epoch, the first epochs of earlier tasks.
    #[serde(default = "default_spike")]
    pub spike_factor: f64,
}

fn default_batch() -> usize {
    64
}

fn never() -> ResetPolicy {
    ResetPolicy::Never
}

fn default_spike() -> f64 {
    10.0
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            batch_size: default_batch(),
            coeff_decay: 0.0,
            reset: never(),
            diag_every: 0,
            spike_factor: default_spike(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub task: usize,
    pub epoch: usize,
    pub mean_loss: f64,
    /// Online training accuracy over the epoch's minibatches.
    pub accuracy: f64,
    pub spike: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasticityReport {
    /// Trapezoidal area under the per-epoch accuracy curve, scaled to [0, 1].
    pub task_auc: Vec<f64>,
    pub task_final_accuracy: Vec<f64>,
    /// Mean AUC of the normalizing baseline run, when one is attached.
    pub baseline: Option<f64>,
    pub diverged: bool,
    pub diverged_at_task: Option<usize>,
}

impl PlasticityReport {
    pub fn mean_auc(&self) -> f64 {
        mean(&self.task_auc)
    }

    /// Mean AUC over the final `k` tasks.
    pub fn mean_auc_last(&self, k: usize) -> f64 {
        let n = self.task_auc.len();
        mean(&self.task_auc[n.saturating_sub(k)..])
    }

    pub fn normalized_mean_auc(&self) -> Option<f64> {
        self.baseline.map(|b| self.mean_auc() / b)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: PlasticityReport,
    pub epochs: Vec<EpochLog>,
    pub step_losses: Vec<f64>,
    pub diagnostics: Vec<DiagRecord>,
    /// Reason of the failure that ended the run early.
    pub divergence: Option<String>,
    pub final_rationals: Vec<RationalParams>,
    pub net: Mlp,
}

impl RunOutput {
    pub fn spike_count(&self) -> usize {
        self.epochs.iter().filter(|e| e.spike).count()
    }

    /// Whether any loss spike or divergence occurred.
    pub fn unstable(&self) -> bool {
        self.report.diverged || self.spike_count() > 0
    }
}

/// Area under the accuracy-per-epoch curve by the trapezoidal rule, divided by
/// the curve length so that constant accuracy `a` gives `a`.
pub fn trapezoid_auc(curve: &[f64]) -> f64 {
    match curve.len() {
        0 => 0.0,
        1 => curve[0],
        n => {
            let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            area / (n - 1) as f64
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    diagnostics::percentile_sorted(&s, 0.5)
}

/// Trains one network through every task of `stream` in order.
pub fn run_stream(spec: &MlpSpec, stream: &TaskStream, opts: &RunOptions) -> Result<RunOutput> {
    let out_width = *spec.widths.last().unwrap();
    if out_width < stream.classes_per_task() {
        return Err(Error::Config(format!(
            "output width {out_width} is below the {} classes per task",
            stream.classes_per_task()
        )));
    }
    if spec.widths[0] != stream.base().dim() {
        return Err(Error::Config(format!(
            "input width {} does not match dataset dimension {}",
            spec.widths[0],
            stream.base().dim()
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut net = Mlp::build(spec.clone())?;
    let mut rng = seed::derived_rng(spec.seed, seed::STREAM_BATCHES);
    let epochs = stream.config.epochs_per_task;

    let tasks: Vec<Task> = (0..stream.len()).map(|t| stream.task(t)).collect::<Result<_>>()?;
    let total_steps: u64 = tasks
        .iter()
        .map(|t| (epochs * t.data.len().div_ceil(opts.batch_size)) as u64)
        .sum();

    let mut report = PlasticityReport {
        task_auc: vec![0.0; tasks.len()],
        task_final_accuracy: vec![0.0; tasks.len()],
        baseline: None,
        diverged: false,
        diverged_at_task: None,
    };
    let mut epoch_log = Vec::new();
    let mut step_losses = Vec::new();
    let mut diag = Vec::new();
    let mut divergence = None;
    let mut step: u64 = 0;
    let mut first_epoch_losses: Vec<f64> = Vec::new();

    'tasks: for task in &tasks {
        let n = task.data.len();
        let mut curve = Vec::with_capacity(epochs);
        let mut epoch_losses: Vec<f64> = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let order = permutation(n, &mut rng);
            let (mut loss_sum, mut correct, mut batches) = (0.0, 0usize, 0usize);
            for chunk in order.chunks(opts.batch_size) {
                let x = task.data.features.select_rows(chunk);
                let y: Vec<usize> = chunk.iter().map(|&r| task.data.labels[r]).collect();
                match net.train_step(&x, Loss::CrossEntropy(&y), opts.coeff_decay) {
                    Ok(rep) => {
                        let pred = argmax_rows(rep.forward.output());
                        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
                        loss_sum += rep.loss;
                        batches += 1;
                        step_losses.push(rep.loss);
                        step += 1;
                        if opts.diag_every > 0 && step % opts.diag_every as u64 == 0 {
                            diag.push(DiagRecord::from_step(&net, &rep));
                        }
                    }
                    Err(e) if e.is_explosion() => {
                        step_losses.push(f64::NAN);
                        if let Error::Explosion { snapshot: Some(s), .. } = &e {
                            let mut s = (**s).clone();
                            s.explosion = true;
                            diag.push(s);
                        }
                        report.diverged = true;
                        report.diverged_at_task = Some(task.index);
                        divergence = Some(e.to_string());
                        epoch_log.push(EpochLog {
                            task: task.index,
                            epoch,
                            mean_loss: f64::NAN,
                            accuracy: f64::NAN,
                            spike: true,
                        });
                        break 'tasks;
                    }
                    Err(e) => return Err(e),
                }
                if opts.reset.fires(step, total_steps) {
                    net.reset();
                }
            }
            let mean_loss = loss_sum / batches as f64;
            let accuracy = correct as f64 / n as f64;
            let reference = if epoch == 0 { &first_epoch_losses } else { &epoch_losses };
            let spike = !reference.is_empty() && mean_loss > opts.spike_factor * median(reference);
            if epoch == 0 {
                first_epoch_losses.push(mean_loss);
            }
            epoch_losses.push(mean_loss);
            curve.push(accuracy);
            epoch_log.push(EpochLog {
                task: task.index,
                epoch,
                mean_loss,
                accuracy,
                spike,
            });
        }
        report.task_auc[task.index] = trapezoid_auc(&curve);
        report.task_final_accuracy[task.index] = *curve.last().unwrap();
    }

    let final_rationals = net.rationals().into_iter().flatten().collect();
    Ok(RunOutput {
        report,
        epochs: epoch_log,
        step_losses,
        diagnostics: diag,
        divergence,
        final_rationals,
        net,
    })
}

/// Accuracy of `net` on a dataset.
pub fn accuracy(net: &Mlp, data: &Dataset) -> Result<f64> {
    let out = net.predict(&data.features)?;
    let pred = argmax_rows(&out);
    Ok(pred.iter().zip(&data.labels).filter(|(p, t)| p == t).count() as f64 / data.len() as f64)
}

/// How degree-sweep cells initialize their rational coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepInit {
    /// Least-squares fit to Leaky ReLU on [-5, 5].
    #[default]
    FitLeakyRelu,
    /// `a_1 = 1`, everything else 0.
    Identity,
}

/// A degree-sweep grid cell in (numerator coefficient count, denominator degree)
/// coordinates: `(4, 2)` is `n = 3, m = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub num_count: usize,
    pub den_degree: usize,
}

impl Cell {
    pub fn new(num_count: usize, den_degree: usize) -> Self {
        Cell { num_count, den_degree }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSetup {
    /// Network template; the hidden activations are replaced per cell.
    pub spec: MlpSpec,
    pub stream: StreamConfig,
    pub run: RunOptions,
    pub cells: Vec<Cell>,
    pub repeats: usize,
    #[serde(default)]
    pub init: SweepInit,
}

/// One unit of sweep work: a cell (or the ReLU baseline when `cell` is `None`)
/// and a repeat index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepJob {
    pub cell: Option<Cell>,
    pub repeat: usize,
}

#[derive(Clone, Debug)]
pub struct JobOutcome {
    pub job: SweepJob,
    pub mean_auc: f64,
    pub diverged: bool,
    pub spikes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_count: usize,
    pub den_degree: usize,
    /// Mean over non-diverged repeats of mean AUC / baseline; NaN when every repeat diverged.
    pub mean_auc_norm: f64,
    pub std_auc: f64,
    pub diverged_fraction: f64,
    /// Fraction of repeats with at least one loss spike or divergence.
    pub unstable_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub baseline_auc: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("num_count,den_degree,mean_auc_norm,std_auc,diverged_fraction\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.num_count, r.den_degree, r.mean_auc_norm, r.std_auc, r.diverged_fraction
            ));
        }
        s
    }
}

impl SweepSetup {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("sweep needs at least one repeat".into()));
        }
        if let Some(c) = self.cells.iter().find(|c| c.num_count == 0) {
            return Err(Error::Config(format!("cell ({}, {}) has no numerator coefficients", c.num_count, c.den_degree)));
        }
        Ok(())
    }

    /// Baseline jobs first, then cells in order, each over all repeats.
    pub fn jobs(&self) -> Vec<SweepJob> {
        let mut jobs: Vec<SweepJob> = (0..self.repeats).map(|repeat| SweepJob { cell: None, repeat }).collect();
        for &c in &self.cells {
            jobs.extend((0..self.repeats).map(|repeat| SweepJob { cell: Some(c), repeat }));
        }
        jobs
    }

    /// Initial coefficients for a cell.
    pub fn cell_init(&self, cell: Cell) -> Result<RationalParams> {
        let degrees = (cell.num_count.saturating_sub(1), cell.den_degree);
        if degrees.0 == 0 {
            // A constant numerator cannot imitate anything; use a_0 = 0 and fit nothing.
            return RationalParams::original(vec![0.0], vec![0.0; degrees.1]);
        }
        match self.init {
            SweepInit::Identity => RationalParams::identity(degrees.0, degrees.1, Variant::Original, true),
            SweepInit::FitLeakyRelu => Ok(fit_init(
                &Target::LeakyRelu { slope: DEFAULT_LEAKY_SLOPE },
                (-5.0, 5.0),
                degrees,
                Variant::Original,
                &FitOptions::default(),
            )?
            .params),
        }
    }

    pub fn run_job(&self, job: SweepJob, data: &Dataset) -> Result<JobOutcome> {
        let run_seed = seed::derive(self.spec.seed, job.repeat as u64);
        let mut spec = self.spec.clone();
        spec.seed = run_seed;
        let activation = match job.cell {
            None => ActivationKind::Relu,
            Some(c) => ActivationKind::Rational { init: self.cell_init(c)? },
        };
        spec.activations = vec![activation; spec.hidden_layers()];
        let mut stream_cfg = self.stream.clone();
        stream_cfg.seed = seed::derive(self.stream.seed, job.repeat as u64);
        let stream = make_stream(data, stream_cfg)?;
        let out = run_stream(&spec, &stream, &self.run)?;
        Ok(JobOutcome {
            job,
            mean_auc: out.report.mean_auc(),
            diverged: out.report.diverged,
            spikes: out.spike_count(),
        })
    }

    pub fn aggregate(&self, outcomes: &[JobOutcome]) -> SweepTable {
        let baseline: Vec<f64> = outcomes.iter().filter(|o| o.job.cell.is_none()).map(|o| o.mean_auc).collect();
        let baseline_auc = mean(&baseline);
        let rows = self
            .cells
            .iter()
            .map(|&c| {
                let runs: Vec<&JobOutcome> = outcomes.iter().filter(|o| o.job.cell == Some(c)).collect();
                let ok: Vec<f64> = runs.iter().filter(|o| !o.diverged).map(|o| o.mean_auc / baseline_auc).collect();
                let m = mean(&ok);
                let std = if ok.is_empty() {
                    f64::NAN
                } else {
                    (ok.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ok.len() as f64).sqrt()
                };
                let total = runs.len().max(1) as f64;
                SweepRow {
                    num_count: c.num_count,
                    den_degree: c.den_degree,
                    mean_auc_norm: m,
                    std_auc: std,
                    diverged_fraction: runs.iter().filter(|o| o.diverged).count() as f64 / total,
                    unstable_fraction: runs.iter().filter(|o| o.diverged || o.spikes > 0).count() as f64 / total,
                }
            })
            .collect();
        SweepTable { baseline_auc, rows }
    }
}

/// Runs every cell of the sweep sequentially and normalizes by a global ReLU baseline.
pub fn degree_sweep(setup: &SweepSetup, data: &Dataset) -> Result<SweepTable> {
    setup.validate()?;
    let outcomes = setup
        .jobs()
        .into_iter()
        .map(|j| setup.run_job(j, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(setup.aggregate(&outcomes))
}

/// A fixed random subset of a dataset's rows, for probing a network.
pub fn probe_batch(data: &Dataset, size: usize, seed_value: u64) -> Matrix {
    let mut rng = seed::derived_rng(seed_value, seed::STREAM_PROBE);
    let mut rows = permutation(data.len(), &mut rng);
    rows.truncate(size.min(data.len()));
    data.features.select_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{blobs, digits, gaussian_mixture};

    #[test]
    fn auc_rule() {
        assert_eq!(trapezoid_auc(&[0.5; 7]), 0.5);
        assert_eq!(trapezoid_auc(&[0.0, 1.0]), 0.5);
        assert!((trapezoid_auc(&[0.0, 0.5, 1.0, 1.0]) - (0.25 + 0.75 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_first_task_is_base_data() {
        let d = gaussian_mixture(4, 3, 5, 0.3, 1).unwrap();
        let mut cfg = StreamConfig::new(StreamKind::LabelReshuffle, 1, 3);
        cfg.identity_first = true;
        let s = make_stream(&d, cfg).unwrap();
        assert_eq!(s.task(0).unwrap().data, d);
    }

    #[test]
    fn same_seed_same_stream() {
        let d = gaussian_mixture(5, 3, 4, 0.3, 1).unwrap();
        for kind in [StreamKind::LabelReshuffle, StreamKind::InputPermute] {
            let a = make_stream(&d, StreamConfig::new(kind, 4, 8)).unwrap();
            let b = make_stream(&d, StreamConfig::new(kind, 4, 8)).unwrap();
            assert_eq!(a, b);
            let c = make_stream(&d, StreamConfig::new(kind, 4, 9)).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn reshuffle_preserves_class_balance() {
        let d = digits();
        let s = make_stream(&d, StreamConfig::new(StreamKind::LabelReshuffle, 3, 2)).unwrap();
        let mut base = d.class_counts();
        base.sort();
        for t in 0..3 {
            let task = s.task(t).unwrap();
            let mut c = task.data.class_counts();
            c.sort();
            assert_eq!(c, base);
            let map = task.label_map.unwrap();
            for (l, tl) in d.labels.iter().zip(&task.data.labels) {
                assert_eq!(map[*l], *tl);
            }
        }
    }

    #[test]
    fn split_classes_partition() {
        let d = gaussian_mixture(100, 2, 2, 0.1, 0).unwrap();
        let s = make_stream(&d, StreamConfig::new(StreamKind::SplitClasses, 20, 0)).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for t in 0..20 {
            let task = s.task(t).unwrap();
            assert_eq!(task.data.classes, 5);
            assert_eq!(task.data.len(), 10);
            assert!(task.data.labels.iter().all(|&l| l < 5));
            for &r in task.data.features.data().iter().step_by(2) {
                assert!(seen.insert(r.to_bits()));
            }
        }
        assert!(make_stream(&d, StreamConfig::new(StreamKind::SplitClasses, 3, 0)).is_err());
    }

    #[test]
    fn blobs_loss_decreases_for_every_activation() {
        let data = blobs(128, 0.5, 4);
        let kinds = [
            ActivationKind::Relu,
            ActivationKind::LeakyRelu { slope: 0.01 },
            ActivationKind::Rational { init: crate::rational::preset("original_low").unwrap() },
            ActivationKind::Rational { init: crate::rational::preset("constrained_low").unwrap() },
        ];
        for kind in kinds {
            let mut spec = MlpSpec::uniform(vec![2, 16, 16, 2], kind.clone(), 5);
            spec.adam.lr = 1e-3;
            let mut net = Mlp::build(spec).unwrap();
            let mut losses = Vec::new();
            for _ in 0..200 {
                losses.push(net.train_step(&data.features, Loss::CrossEntropy(&data.labels), 0.0).unwrap().loss);
            }
            assert!(losses[199] < 0.5 * losses[0], "{kind:?}: {} -> {}", losses[0], losses[199]);
        }
    }

    #[test]
    fn zero_decay_matches_plain_adam_bitwise() {
        let data = blobs(32, 0.5, 2);
        let spec = MlpSpec::uniform(
            vec![2, 8, 2],
            ActivationKind::Rational { init: crate::rational::preset("constrained_low").unwrap() },
            3,
        );
        let mut a = Mlp::build(spec.clone()).unwrap();
        let mut b = Mlp::build(spec).unwrap();
        for _ in 0..20 {
            a.train_step(&data.features, Loss::CrossEntropy(&data.labels), 0.0).unwrap();
            b.train_step(&data.features, Loss::CrossEntropy(&data.labels), 0.0).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn small_stream_runs_and_reports() {
        let d = gaussian_mixture(4, 6, 20, 0.4, 3).unwrap();
        let mut cfg = StreamConfig::new(StreamKind::LabelReshuffle, 3, 1);
        cfg.epochs_per_task = 3;
        let s = make_stream(&d, cfg).unwrap();
        let spec = MlpSpec::uniform(vec![6, 16, 16, 4], ActivationKind::Relu, 2);
        let opts = RunOptions {
            batch_size: 16,
            diag_every: 5,
            ..RunOptions::default()
        };
        let out = run_stream(&spec, &s, &opts).unwrap();
        assert_eq!(out.report.task_auc.len(), 3);
        assert!(out.report.task_auc.iter().all(|a| (0.0..=1.0).contains(a)));
        assert_eq!(out.epochs.len(), 9);
        assert_eq!(out.step_losses.len(), 9 * 5);
        assert_eq!(out.diagnostics.len(), 9);
        assert!(!out.report.diverged);
        let again = run_stream(&spec, &s, &opts).unwrap();
        assert_eq!(out.step_losses, again.step_losses);
    }

    #[test]
    fn exploding_run_still_reports() {
        let d = gaussian_mixture(3, 4, 10, 0.3, 3).unwrap();
        let mut cfg = StreamConfig::new(StreamKind::LabelReshuffle, 3, 1);
        cfg.epochs_per_task = 2;
        let s = make_stream(&d, cfg).unwrap();
        // Huge polynomial coefficients and a huge learning rate overflow quickly.
        let init = RationalParams::original(vec![1e80, 1e80, 1e80, 1e80], vec![0.0]).unwrap();
        let mut spec = MlpSpec::uniform(vec![4, 8, 8, 3], ActivationKind::Rational { init }, 1);
        spec.adam.lr = 1.0;
        let out = run_stream(&spec, &s, &RunOptions::default()).unwrap();
        assert!(out.report.diverged);
        assert_eq!(out.report.task_auc.len(), 3);
        assert!(out.divergence.is_some());
    }

    #[test]
    fn sweep_table_shape() {
        let d = gaussian_mixture(3, 4, 10, 0.3, 3).unwrap();
        let mut stream = StreamConfig::new(StreamKind::LabelReshuffle, 2, 1);
        stream.epochs_per_task = 2;
        let setup = SweepSetup {
            spec: MlpSpec::uniform(vec![4, 8, 3], ActivationKind::Relu, 0),
            stream,
            run: RunOptions {
                batch_size: 10,
                ..RunOptions::default()
            },
            cells: vec![Cell::new(2, 0), Cell::new(4, 2)],
            repeats: 2,
            init: SweepInit::FitLeakyRelu,
        };
        let table = degree_sweep(&setup, &d).unwrap();
        assert_eq!(table.rows.len(), 2);
        let csv = table.to_csv();
        assert!(csv.starts_with("num_count,den_degree,mean_auc_norm,std_auc,diverged_fraction\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
