//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hwrel_core::macfault::{ArrayConfig, CarryMode};
use hwrel_core::netcore::{NumericMode, SyntheticSpec, TrainConfig, DEFAULT_MLP};
use hwrel_core::neurorel::{CrossbarConfig, EnduranceModel, NeuroMapConfig};

/// File names expected inside an IDX dataset directory.
pub const IDX_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic choice derives from it.
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Emit SVG charts next to the CSVs.
    #[serde(default = "yes")]
    pub charts: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub experiment: Experiment,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Directory holding the four standard IDX files.
    Idx {
        dir: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    Synthetic { train: SyntheticSpec, test: SyntheticSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// JSON checkpoint written by a `train` run.
    Checkpoint { path: PathBuf },
    /// Trained from scratch on the configured data before the experiment.
    Train {
        arch: Arch,
        #[serde(default)]
        schedule: Schedule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Arch {
    Mlp {
        #[serde(default = "default_mlp")]
        sizes: Vec<usize>,
    },
    Lenet5,
}

fn default_mlp() -> Vec<usize> {
    DEFAULT_MLP.to_vec()
}

/// SGD schedule; the shuffling seed is derived, not configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_decay: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: t.epochs, learning_rate: t.learning_rate, batch_size: t.batch_size, momentum: t.momentum, lr_decay: t.lr_decay }
    }
}

impl Schedule {
    pub fn with_seed(self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            momentum: self.momentum,
            lr_decay: self.lr_decay,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Train(TrainParams),
    DramBitpos(BitposParams),
    DramColumn(ColumnParams),
    MacSweep(SweepParams),
    Deactivate(DeactivateParams),
    FaultTrain(FaultTrainParams),
    EnduranceMap(EnduranceParams),
    NeuroMap(NeuroMapParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Train(_) => "train",
            Experiment::DramBitpos(_) => "dram-bitpos",
            Experiment::DramColumn(_) => "dram-column",
            Experiment::MacSweep(_) => "mac-sweep",
            Experiment::Deactivate(_) => "deactivate",
            Experiment::FaultTrain(_) => "fault-train",
            Experiment::EnduranceMap(_) => "endurance-map",
            Experiment::NeuroMap(_) => "neuro-map",
        }
    }

    fn needs_model(&self) -> bool {
        match self {
            Experiment::Deactivate(p) => p.evaluate,
            Experiment::EnduranceMap(_) | Experiment::NeuroMap(_) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// Numeric modes evaluated on the test set after training.
    pub modes: Vec<NumericMode>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { modes: vec![NumericMode::Float, NumericMode::Int8, NumericMode::BFloat16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitposParams {
    #[serde(default = "all_bits")]
    pub bit_positions: Vec<u32>,
    /// Faults per layer.
    pub counts: Vec<usize>,
    #[serde(default = "ten")]
    pub runs: usize,
}

fn all_bits() -> Vec<u32> {
    (0..8).rev().collect()
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnParams {
    pub columns: Vec<usize>,
    #[serde(default = "twenty")]
    pub faults_per_column: usize,
    #[serde(default = "seven")]
    pub bit_pos: u32,
    /// Physical grid width; defaults to the widest layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default = "ten")]
    pub runs: usize,
}

fn twenty() -> usize {
    20
}

fn seven() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    #[serde(default)]
    pub array: ArrayConfig,
    pub ks: Vec<u32>,
    /// Percent of PEs per column.
    pub fault_rates: Vec<f64>,
    #[serde(default = "ten")]
    pub runs: usize,
    #[serde(default = "half")]
    pub carry_probability: f64,
    #[serde(default)]
    pub carry_mode: CarryMode,
    /// Magnitude-prune this fraction of every weight matrix first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<f64>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeactivateParams {
    #[serde(default)]
    pub array: ArrayConfig,
    pub fault_rate: f64,
    pub fr_max_non_crit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsb_bits: Option<u32>,
    /// Share of faulty PEs given a critical signature.
    #[serde(default)]
    pub critical_fraction: f64,
    #[serde(default = "half")]
    pub carry_probability: f64,
    #[serde(default)]
    pub carry_mode: CarryMode,
    #[serde(default = "ten")]
    pub runs: usize,
    /// Measure accuracy before and after deactivation (needs data and model).
    #[serde(default = "yes")]
    pub evaluate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultTrainParams {
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default = "seven_half")]
    pub fault_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsb_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr_max_non_crit: Option<f64>,
    #[serde(default = "half")]
    pub carry_probability: f64,
    #[serde(default)]
    pub carry_mode: CarryMode,
    #[serde(default = "retrain_default")]
    pub retrain: Schedule,
    #[serde(default = "five")]
    pub runs: usize,
}

fn seven_half() -> f64 {
    7.5
}

fn five() -> usize {
    5
}

fn retrain_default() -> Schedule {
    Schedule { epochs: 1, learning_rate: 0.002, ..Schedule::default() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnduranceParams {
    pub crossbar: CrossbarConfig,
    pub model: EnduranceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuroMapParams {
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub mapping: NeuroMapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// JSON workload graph.
    File { path: PathBuf },
    Random { neurons: usize, synapses: usize, max_activation: u64 },
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn render(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configs always serialize")
}

/// Reads a config file; relative paths inside it resolve against the
/// returned directory.
pub fn load(path: &Path) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    let cfg = parse(&text).map_err(|message| ConfigError::Parse { path: path.into(), message })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    Ok((cfg, base))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Problems(Vec<String>);

impl Problems {
    fn check(&mut self, ok: bool, field: &str, msg: impl std::fmt::Display) {
        if !ok {
            self.0.push(format!("{field}: {msg}"));
        }
    }

    fn fraction(&mut self, field: &str, v: f64) {
        self.check((0.0..=1.0).contains(&v), field, format_args!("{v} is outside [0, 1]"));
    }

    fn percent(&mut self, field: &str, v: f64) {
        self.check((0.0..=100.0).contains(&v), field, format_args!("{v} is outside [0, 100]"));
    }

    fn runs(&mut self, field: &str, n: usize) {
        self.check(n >= 1, field, "must be at least 1");
    }

    fn file(&mut self, field: &str, p: &Path) {
        self.check(p.is_file(), field, format_args!("file {} does not exist", p.display()));
    }

    fn array(&mut self, field: &str, a: &ArrayConfig) {
        self.check(a.rows >= 1 && a.cols >= 1, field, format_args!("{}×{} array has no PEs", a.rows, a.cols));
    }

    fn lsb(&mut self, field: &str, k: u32, a: &ArrayConfig) {
        let w = a.format.cone_width();
        self.check((1..=w).contains(&k), field, format_args!("{k} is outside 1..={w} for {}", a.format));
    }

    fn schedule(&mut self, field: &str, s: &Schedule) {
        self.check(s.batch_size >= 1, &format!("{field}.batch_size"), "must be at least 1");
        self.check(s.learning_rate > 0.0 && s.learning_rate.is_finite(), &format!("{field}.learning_rate"), "must be positive");
        self.check((0.0..1.0).contains(&s.momentum), &format!("{field}.momentum"), "must be in [0, 1)");
        self.check(s.lr_decay > 0.0 && s.lr_decay <= 1.0, &format!("{field}.lr_decay"), "must be in (0, 1]");
    }
}

impl ExperimentConfig {
    /// Checks ranges and that every referenced file exists. Every problem
    /// is reported, not only the first.
    pub fn validate(&self, base: &Path) -> Result<(), ConfigError> {
        let mut p = Problems(Vec::new());
        p.check(self.seed <= i64::MAX as u64, "seed", "must fit in a signed 64-bit integer");
        let exp = &self.experiment;
        let needs_model = exp.needs_model();

        match &self.data {
            Some(DataSpec::Idx { dir, train_limit, test_limit }) => {
                for f in IDX_FILES {
                    p.file("data.dir", &resolve(base, dir).join(f));
                }
                p.check(*train_limit != Some(0), "data.train_limit", "must be at least 1");
                p.check(*test_limit != Some(0), "data.test_limit", "must be at least 1");
            }
            Some(DataSpec::Synthetic { train, test }) => {
                p.check(train.samples >= 1, "data.train.samples", "must be at least 1");
                p.check(test.samples >= 1, "data.test.samples", "must be at least 1");
                for (f, s) in [("data.train", train), ("data.test", test)] {
                    p.check(s.jitter >= 0.0, &format!("{f}.jitter"), "must be non-negative");
                    p.check(s.noise >= 0.0, &format!("{f}.noise"), "must be non-negative");
                }
            }
            None => p.check(!needs_model, "data", format_args!("required by `{}`", exp.kind())),
        }
        match &self.model {
            Some(ModelSpec::Checkpoint { path }) => p.file("model.path", &resolve(base, path)),
            Some(ModelSpec::Train { arch, schedule }) => {
                if let Arch::Mlp { sizes } = arch {
                    p.check(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "model.arch.sizes", "needs at least two positive sizes");
                }
                p.schedule("model.schedule", schedule);
            }
            None => p.check(!needs_model, "model", format_args!("required by `{}`", exp.kind())),
        }

        match exp {
            Experiment::Train(t) => {
                p.check(!t.modes.is_empty(), "experiment.modes", "must not be empty");
            }
            Experiment::DramBitpos(b) => {
                p.check(!b.bit_positions.is_empty(), "experiment.bit_positions", "must not be empty");
                for &bit in &b.bit_positions {
                    p.check(bit < 8, "experiment.bit_positions", format_args!("bit {bit} is outside 0..=7"));
                }
                p.check(!b.counts.is_empty(), "experiment.counts", "must not be empty");
                p.runs("experiment.runs", b.runs);
            }
            Experiment::DramColumn(c) => {
                p.check(!c.columns.is_empty(), "experiment.columns", "must not be empty");
                p.check(c.bit_pos < 8, "experiment.bit_pos", format_args!("bit {} is outside 0..=7", c.bit_pos));
                if let Some(w) = c.width {
                    for &col in &c.columns {
                        p.check(col < w, "experiment.columns", format_args!("column {col} is outside width {w}"));
                    }
                }
                p.runs("experiment.runs", c.runs);
            }
            Experiment::MacSweep(s) => {
                p.array("experiment.array", &s.array);
                p.check(!s.ks.is_empty(), "experiment.ks", "must not be empty");
                for &k in &s.ks {
                    p.lsb("experiment.ks", k, &s.array);
                }
                p.check(!s.fault_rates.is_empty(), "experiment.fault_rates", "must not be empty");
                for &fr in &s.fault_rates {
                    p.percent("experiment.fault_rates", fr);
                }
                p.fraction("experiment.carry_probability", s.carry_probability);
                if let Some(f) = s.prune {
                    p.fraction("experiment.prune", f);
                }
                p.runs("experiment.runs", s.runs);
            }
            Experiment::Deactivate(d) => {
                p.array("experiment.array", &d.array);
                p.percent("experiment.fault_rate", d.fault_rate);
                p.fraction("experiment.fr_max_non_crit", d.fr_max_non_crit);
                p.fraction("experiment.critical_fraction", d.critical_fraction);
                p.fraction("experiment.carry_probability", d.carry_probability);
                if let Some(k) = d.lsb_bits {
                    p.lsb("experiment.lsb_bits", k, &d.array);
                }
                p.runs("experiment.runs", d.runs);
            }
            Experiment::FaultTrain(f) => {
                p.array("experiment.array", &f.array);
                p.percent("experiment.fault_rate", f.fault_rate);
                if let Some(m) = f.fr_max_non_crit {
                    p.fraction("experiment.fr_max_non_crit", m);
                }
                if let Some(k) = f.lsb_bits {
                    p.lsb("experiment.lsb_bits", k, &f.array);
                }
                p.fraction("experiment.carry_probability", f.carry_probability);
                p.schedule("experiment.retrain", &f.retrain);
                p.runs("experiment.runs", f.runs);
            }
            Experiment::EnduranceMap(e) => {
                if let Err(err) = e.crossbar.validate() {
                    p.0.push(format!("experiment.crossbar: {err}"));
                }
            }
            Experiment::NeuroMap(n) => {
                match &n.workload {
                    WorkloadSpec::File { path } => p.file("experiment.workload.path", &resolve(base, path)),
                    WorkloadSpec::Random { neurons, .. } => {
                        p.check(*neurons >= 2, "experiment.workload.neurons", "must be at least 2")
                    }
                }
                if let Err(err) = n.mapping.crossbar.validate() {
                    p.0.push(format!("experiment.mapping.crossbar: {err}"));
                }
                p.check(!n.mapping.tiles.is_empty(), "experiment.mapping.tiles", "must not be empty");
                p.check(n.mapping.pso.particles >= 1, "experiment.mapping.pso.particles", "must be at least 1");
            }
        }
        if p.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(p.0))
        }
    }
}
