//! Running networks on a faulty array.
//!
//! Weight `(r, c)` of every layer matrix is pinned to PE
//! `(r mod N_Row, c mod N_Col)`; layers larger than the array reuse the PEs
//! tile by tile. A deactivated PE is bypassed, which prunes every weight it
//! hosts to zero.

use serde::{Deserialize, Serialize};

use super::seeding::{seed_fault_map, SignatureSpec};
use super::{ArrayConfig, ArrayState, CarryMode, MacError, MacFormat, WordFault};
use crate::exec::Exec;
use crate::netcore::dataset::LabeledDataset;
use crate::netcore::infer::{IdentityHook, MacHook, MacSite, PreparedModel};
use crate::netcore::model::Model;
use crate::netcore::train::{train_sgd_hooked, FaultContext, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy)]
enum PeOp {
    Exact,
    Off,
    Faulty(WordFault),
}

/// Routes every product through its hosting PE.
pub struct ArrayHook {
    config: ArrayConfig,
    ops: Vec<PeOp>,
}

impl ArrayHook {
    pub fn new(state: &ArrayState, carry: CarryMode) -> Self {
        let (rows, cols) = (state.config.rows, state.config.cols);
        let ops = (0..rows * cols)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                if !state.is_active(r, c) {
                    PeOp::Off
                } else if let Some(f) = state.fault(r, c) {
                    PeOp::Faulty(WordFault::new(f, carry))
                } else {
                    PeOp::Exact
                }
            })
            .collect();
        Self { config: state.config, ops }
    }

    fn pe(&self, site: MacSite) -> usize {
        let (r, c) = self.config.host(site.row, site.col);
        r * self.config.cols + c
    }

    fn apply(&self, op: PeOp, x: f64, w: f64) -> f64 {
        match op {
            PeOp::Exact => x * w,
            PeOp::Off => 0.0,
            PeOp::Faulty(f) => f.apply(x, w, self.config.format),
        }
    }
}

impl MacHook for ArrayHook {
    fn perturbs(&self, site: MacSite) -> bool {
        !matches!(self.ops[self.pe(site)], PeOp::Exact)
    }

    fn product(&self, x: f64, w: f64, site: MacSite) -> f64 {
        self.apply(self.ops[self.pe(site)], x, w)
    }

    fn site_key(&self, site: MacSite) -> u32 {
        self.pe(site) as u32
    }

    fn product_keyed(&self, x: f64, w: f64, _: MacSite, key: u32) -> f64 {
        self.apply(self.ops[key as usize], x, w)
    }
}

/// Top-1 accuracy with every multiply executed by its hosting PE.
pub fn run_array(
    model: &Model,
    state: &ArrayState,
    data: &LabeledDataset,
    carry: CarryMode,
    exec: Exec,
) -> Result<f64, MacError> {
    let p = PreparedModel::new(model, state.config.format.numeric_mode())?;
    run_prepared(&p, state, data, carry, exec)
}

pub fn run_prepared(
    p: &PreparedModel,
    state: &ArrayState,
    data: &LabeledDataset,
    carry: CarryMode,
    exec: Exec,
) -> Result<f64, MacError> {
    Ok(p.accuracy_hooked(data, &ArrayHook::new(state, carry), exec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub array: ArrayConfig,
    pub ks: Vec<u32>,
    pub fault_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "half")]
    pub carry_probability: f64,
    #[serde(default)]
    pub carry_mode: CarryMode,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub format: MacFormat,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "FR")]
    pub fr: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub drop_pp: f64,
}

/// Accuracy for every `(K, FR, seed)`, faults confined to cone bits `< K`
/// and left active (no deactivation).
pub fn lsb_sensitivity_sweep(
    model: &Model,
    data: &LabeledDataset,
    cfg: &SweepConfig,
    exec: Exec,
) -> Result<Vec<SweepRecord>, MacError> {
    cfg.array.validate()?;
    let p = PreparedModel::new(model, cfg.array.format.numeric_mode())?;
    let baseline = p.accuracy_hooked(data, &IdentityHook, exec)?;
    let mut jobs = Vec::new();
    for &k in &cfg.ks {
        if k == 0 || k > cfg.array.format.cone_width() {
            return Err(MacError::InvalidFault {
                row: 0,
                col: 0,
                reason: format!("K = {k} outside 1..={}", cfg.array.format.cone_width()),
            });
        }
        for &fr in &cfg.fault_rates {
            if !(0.0..=100.0).contains(&fr) {
                return Err(MacError::FaultRate(fr));
            }
            for &seed in &cfg.seeds {
                jobs.push((k, fr, seed));
            }
        }
    }
    let out = exec.map_slice(&jobs, |&(k, fr, seed)| -> Result<SweepRecord, MacError> {
        let spec = SignatureSpec { lsb_bits: k, critical_fraction: 0.0, carry_probability: cfg.carry_probability };
        let state = seed_fault_map(cfg.array, fr, &spec, seed)?;
        let accuracy = if state.num_faulty() == 0 {
            baseline
        } else {
            run_prepared(&p, &state, data, cfg.carry_mode, Exec::Sequential)?
        };
        Ok(SweepRecord { format: cfg.array.format, k, fr, seed, accuracy, drop_pp: 100.0 * (baseline - accuracy) })
    });
    out.into_iter().collect()
}

pub fn write_sweep_csv<W: std::io::Write>(records: &[SweepRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Retrains `model` with the array's faulty products in the forward pass
/// and straight-through gradients.
pub fn fault_aware_train(
    model: &Model,
    state: &ArrayState,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    carry: CarryMode,
) -> Result<(Model, TrainReport), MacError> {
    let hook = ArrayHook::new(state, carry);
    let ctx = FaultContext { mode: state.config.format.numeric_mode(), hook: &hook };
    Ok(train_sgd_hooked(model, train, test, cfg, Some(ctx))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultTrainConfig {
    pub array: ArrayConfig,
    pub fault_rate: f64,
    /// Cone bits `< lsb_bits`; `None` uses the format's non-critical width.
    #[serde(default)]
    pub lsb_bits: Option<u32>,
    /// Runs the deactivation protocol with this tolerance before training.
    #[serde(default)]
    pub fr_max_non_crit: Option<f64>,
    #[serde(default = "half")]
    pub carry_probability: f64,
    #[serde(default)]
    pub carry_mode: CarryMode,
    /// Retraining schedule; its seed is replaced by each run seed.
    pub retrain: TrainConfig,
    pub seeds: Vec<u64>,
}

/// One fault map before and after fault-aware retraining. The "after"
/// loss is taken against a control fine-tuned fault-free on the same
/// schedule, so plain extra training is not credited to fault awareness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultTrainRecord {
    pub seed: u64,
    pub faulty_pes: usize,
    pub deactivated: usize,
    pub clean_accuracy: f64,
    pub faulty_accuracy: f64,
    pub control_clean_accuracy: f64,
    pub retrained_faulty_accuracy: f64,
    /// `(clean − faulty) / clean`, percent.
    pub loss_before_pct: f64,
    /// `(control clean − retrained faulty) / control clean`, percent.
    pub loss_after_pct: f64,
}

pub fn fault_train_campaign(
    model: &Model,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &FaultTrainConfig,
    exec: Exec,
) -> Result<Vec<FaultTrainRecord>, MacError> {
    cfg.array.validate()?;
    let format = cfg.array.format;
    let clean = PreparedModel::new(model, format.numeric_mode())?.accuracy_hooked(test, &IdentityHook, exec)?;
    let spec = SignatureSpec {
        lsb_bits: cfg.lsb_bits.unwrap_or(format.non_critical_bits()),
        critical_fraction: 0.0,
        carry_probability: cfg.carry_probability,
    };
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut state = seed_fault_map(cfg.array, cfg.fault_rate, &spec, seed)?;
        let deactivated = match cfg.fr_max_non_crit {
            Some(fr_max) => {
                let fsr = state.fsr(fr_max);
                super::deactivate(&mut state, &fsr)?.len()
            }
            None => 0,
        };
        let faulty = run_array(model, &state, test, cfg.carry_mode, exec)?;
        let schedule = TrainConfig { seed, ..cfg.retrain };
        let (retrained, _) = fault_aware_train(model, &state, train, None, &schedule, cfg.carry_mode)?;
        let (control, _) = train_sgd_hooked(model, train, None, &schedule, None)?;
        let control_clean =
            PreparedModel::new(&control, format.numeric_mode())?.accuracy_hooked(test, &IdentityHook, exec)?;
        let after = run_array(&retrained, &state, test, cfg.carry_mode, exec)?;
        out.push(FaultTrainRecord {
            seed,
            faulty_pes: state.num_faulty(),
            deactivated,
            clean_accuracy: clean,
            faulty_accuracy: faulty,
            control_clean_accuracy: control_clean,
            retrained_faulty_accuracy: after,
            loss_before_pct: 100.0 * (clean - faulty) / clean,
            loss_after_pct: 100.0 * (control_clean - after) / control_clean,
        });
    }
    Ok(out)
}

/// Zeroes the `fraction` smallest-magnitude weights of every layer matrix.
/// Pruning is applied before faults are seeded.
pub fn prune_by_magnitude(model: &Model, fraction: f64) -> Result<Model, MacError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(MacError::Fraction("prune fraction", fraction));
    }
    let mut m = model.clone();
    for layer in &mut m.layers {
        if let Some((w, _)) = layer.params_mut() {
            let n = (fraction * w.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..w.len()).collect();
            let flat: Vec<f64> = w.iter().map(|v| v.abs()).collect();
            order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]).then(a.cmp(&b)));
            let cols = w.ncols();
            for &i in &order[..n] {
                w[[i / cols, i % cols]] = 0.0;
            }
        }
    }
    Ok(m)
}
