//! Experiment configuration files.
//!
//! Every config is a JSON object whose `experiment` field selects the schema.
//! Unknown fields anywhere are rejected before any work starts.

use std::path::{Path, PathBuf};

use ratact_core::continual::{Cell, RunOptions, StreamKind, SweepInit};
use ratact_core::data::{self, Dataset};
use ratact_core::diagnostics::ExplosionThresholds;
use ratact_core::gradcore::AdamConfig;
use ratact_core::network::{ActivationKind, MlpSpec, ResetPolicy, WeightInit};
use ratact_core::rational::RationalSource;
use ratact_core::tdprobe::{ChainEnd, MdpSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Continual(ContinualConfig),
    DegreeSweep(SweepConfig),
    Ntk(NtkConfig),
    TdProbe(TdConfig),
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Digits,
    Csv {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    GaussianMixture {
        classes: usize,
        dim: usize,
        per_class: usize,
        #[serde(default = "unit_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn unit_spread() -> f64 {
    1.0
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Digits
    }
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset, CliError> {
        Ok(match self {
            DatasetConfig::Digits => data::digits(),
            DatasetConfig::Csv { path } => data::read_csv(path)?,
            DatasetConfig::Idx { images, labels } => data::read_idx(images, labels)?,
            DatasetConfig::GaussianMixture {
                classes,
                dim,
                per_class,
                spread,
                seed,
            } => data::gaussian_mixture(*classes, *dim, *per_class, *spread, *seed)?,
        })
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationConfig {
    Relu {},
    LeakyRelu {
        #[serde(default = "default_slope")]
        slope: f64,
    },
    /// A preset name or inline coefficients.
    Rational { init: RationalSource },
}

fn default_slope() -> f64 {
    ratact_core::fit::DEFAULT_LEAKY_SLOPE
}

impl ActivationConfig {
    pub fn resolve(&self) -> Result<ActivationKind, CliError> {
        Ok(match self {
            ActivationConfig::Relu {} => ActivationKind::Relu,
            ActivationConfig::LeakyRelu { slope } => ActivationKind::LeakyRelu { slope: *slope },
            ActivationConfig::Rational { init } => ActivationKind::Rational { init: init.resolve()? },
        })
    }
}

/// Network shape without the input and output widths, which come from the task.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationConfig,
    #[serde(default)]
    pub layer_norm: bool,
    #[serde(default)]
    pub init: WeightInit,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl NetworkConfig {
    pub fn spec(&self, input: usize, output: usize, seed: u64) -> Result<MlpSpec, CliError> {
        if self.hidden.is_empty() {
            return Err(CliError::Config("network needs at least one hidden layer".into()));
        }
        let mut widths = vec![input];
        widths.extend(&self.hidden);
        widths.push(output);
        let mut spec = MlpSpec::uniform(widths, self.activation.resolve()?, seed);
        spec.layer_norm = self.layer_norm;
        spec.init = self.init;
        spec.adam = self.adam;
        spec.validate()?;
        Ok(spec)
    }
}

/// Stream settings; the stream seed is derived from each run seed.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub kind: StreamKind,
    pub n_tasks: usize,
    #[serde(default = "default_epochs")]
    pub epochs_per_task: usize,
    #[serde(default)]
    pub identity_first: bool,
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_epochs() -> usize {
    10
}

impl StreamSection {
    pub fn config(&self, seed: u64) -> ratact_core::continual::StreamConfig {
        let mut c = ratact_core::continual::StreamConfig::new(self.kind, self.n_tasks, seed);
        c.epochs_per_task = self.epochs_per_task;
        c.identity_first = self.identity_first;
        c.samples = self.samples;
        c
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub stream: StreamSection,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Hidden widths, optimizer and normalization; the activation is replaced per cell.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub layer_norm: bool,
    #[serde(default)]
    pub init: WeightInit,
    #[serde(default)]
    pub adam: AdamConfig,
    pub stream: StreamSection,
    #[serde(default)]
    pub run: RunOptions,
    /// Cells as `[numerator coefficient count, denominator degree]` pairs.
    #[serde(default)]
    pub cells: Vec<[usize; 2]>,
    /// Alternative to `cells`: the full grid over these ranges (inclusive).
    #[serde(default)]
    pub grid: Option<GridRange>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub cell_init: SweepInit,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub num_count: [usize; 2],
    pub den_degree: [usize; 2],
}

fn one() -> usize {
    1
}

impl SweepConfig {
    pub fn cells(&self) -> Result<Vec<Cell>, CliError> {
        let mut cells: Vec<Cell> = self.cells.iter().map(|c| Cell::new(c[0], c[1])).collect();
        if let Some(g) = &self.grid {
            if g.num_count[0] > g.num_count[1] || g.den_degree[0] > g.den_degree[1] {
                return Err(CliError::Config("grid ranges must be [low, high]".into()));
            }
            for p in g.num_count[0]..=g.num_count[1] {
                for m in g.den_degree[0]..=g.den_degree[1] {
                    cells.push(Cell::new(p, m));
                }
            }
        }
        if cells.is_empty() {
            return Err(CliError::Config("sweep needs `cells` or `grid`".into()));
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NtkConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    #[serde(default = "default_ntk_batch")]
    pub batch_size: usize,
    /// Number of kernel snapshots; the first is at initialization.
    #[serde(default = "one")]
    pub snapshots: usize,
    /// Training steps between snapshots.
    #[serde(default = "default_every")]
    pub every: usize,
    /// Minibatch size for the training between snapshots.
    #[serde(default = "default_train_batch")]
    pub train_batch: usize,
    #[serde(default)]
    pub coeff_decay: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_ntk_batch() -> usize {
    64
}

fn default_every() -> usize {
    100
}

fn default_train_batch() -> usize {
    64
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default)]
    pub end: ChainEnd,
    #[serde(default)]
    pub rewards: Option<Vec<[f64; 2]>>,
    #[serde(default = "unit_spread")]
    pub reward_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_states() -> usize {
    10
}

fn default_gamma() -> f64 {
    0.99
}

impl Default for MdpSection {
    fn default() -> Self {
        MdpSection {
            states: default_states(),
            end: ChainEnd::default(),
            rewards: None,
            reward_scale: 1.0,
            gamma: default_gamma(),
        }
    }
}

impl MdpSection {
    pub fn spec(&self) -> MdpSpec {
        MdpSpec {
            states: self.states,
            end: self.end,
            rewards: self.rewards.clone(),
            reward_scale: self.reward_scale,
            gamma: self.gamma,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QModelConfig {
    Net { network: NetworkConfig },
    Tabular {
        #[serde(default)]
        adam: AdamConfig,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TdConfig {
    #[serde(default)]
    pub mdp: MdpSection,
    pub model: QModelConfig,
    #[serde(default = "default_utd")]
    pub utd: Vec<usize>,
    pub env_steps: usize,
    #[serde(default = "default_buffer")]
    pub buffer_size: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_td_batch")]
    pub batch_size: usize,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    #[serde(default = "never")]
    pub reset: ResetPolicy,
    #[serde(default)]
    pub coeff_decay: f64,
    #[serde(default)]
    pub thresholds: ExplosionThresholds,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_utd() -> Vec<usize> {
    vec![1]
}

fn default_buffer() -> usize {
    1000
}

fn default_tau() -> f64 {
    0.005
}

fn default_td_batch() -> usize {
    32
}

fn default_checkpoint() -> usize {
    100
}

fn never() -> ResetPolicy {
    ResetPolicy::Never
}

/// `--out`, then the config's `out_dir`, then `RATACT_OUT_DIR`, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os("RATACT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_rejected() {
        let ok = r#"{"experiment": "ntk", "network": {"hidden": [4], "activation": {"kind": "relu"}}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(ok).is_ok());
        let bad = r#"{"experiment": "ntk", "network": {"hidden": [4], "activation": {"kind": "relu"}}, "typo": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
        let nested = r#"{"experiment": "ntk", "network": {"hidden": [4], "activation": {"kind": "relu", "x": 1}}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(nested).is_err());
    }

    #[test]
    fn rational_preset_or_inline() {
        let p: ActivationConfig = serde_json::from_str(r#"{"kind": "rational", "init": "constrained_low"}"#).unwrap();
        assert!(p.resolve().unwrap().is_rational());
        let inline = r#"{"kind": "rational", "init": {"variant": {"kind": "original"}, "numerator": [0, 1], "denominator": []}}"#;
        let p: ActivationConfig = serde_json::from_str(inline).unwrap();
        assert!(p.resolve().is_ok());
        let unknown: ActivationConfig = serde_json::from_str(r#"{"kind": "rational", "init": "nope"}"#).unwrap();
        assert!(unknown.resolve().is_err());
    }

    #[test]
    fn grid_expands() {
        let c: SweepConfig = serde_json::from_str(
            r#"{"hidden": [8], "stream": {"kind": "label_reshuffle", "n_tasks": 2},
                "grid": {"num_count": [2, 4], "den_degree": [0, 2]}}"#,
        )
        .unwrap();
        assert_eq!(c.cells().unwrap().len(), 9);
    }

    #[test]
    fn out_dir_precedence() {
        let flag = Path::new("a");
        let cfg = Path::new("b");
        assert_eq!(resolve_out_dir(Some(flag), Some(cfg)), PathBuf::from("a"));
        assert_eq!(resolve_out_dir(None, Some(cfg)), PathBuf::from("b"));
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            load(&path).unwrap_or_else(|e| panic!("{e}"));
            n += 1;
        }
        assert!(n > 0);
    }
}
