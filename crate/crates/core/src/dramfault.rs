//! Bit flips in weights stored in DRAM.
//!
//! Every gemm layer's int8 weight matrix is laid out neuron-per-column: the
//! cell at `(r, j)` holds the weight from input `r` into neuron `j`. A grid
//! can be wider than the layer (the physical row width of the bank); the
//! extra columns are unmapped and never read back into the model.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::netcore::dataset::{LabeledDataset, NUM_CLASSES};
use crate::netcore::infer::{accuracy_of, batch_matrix, per_class_recall, IdentityHook, NumericMode, PreparedModel};
use crate::netcore::model::{argmax, Model};
use crate::netcore::NetError;
use crate::quantnum::{flip_int8_bit, Int8Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DramError {
    #[error("bit position {0} outside 0..8")]
    BitOutOfRange(u32),
    #[error("{count} faults requested but only {eligible} eligible cells")]
    CountExceedsCells { count: usize, eligible: usize },
    #[error("column {column} beyond grid width {width}")]
    ColumnOutOfRange { column: usize, width: usize },
    #[error("grid width {width} narrower than the layer's {neurons} neurons")]
    WidthTooSmall { width: usize, neurons: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    pub rows: usize,
    pub width: usize,
    /// Row-major 8-bit words.
    pub cells: Vec<u8>,
    /// `column_map[j]` is the neuron stored in column `j`.
    pub column_map: Vec<Option<usize>>,
    pub scale: f64,
}

impl WeightGrid {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn neurons(&self) -> usize {
        self.column_map.iter().flatten().count()
    }

    fn mapped_columns(&self) -> Vec<usize> {
        (0..self.width).filter(|&c| self.column_map[c].is_some()).collect()
    }
}

/// Lays a `fan_in × fan_out` int8 matrix (row-major) out as a grid exactly
/// `fan_out` columns wide.
pub fn layout(t: &Int8Tensor, fan_in: usize, fan_out: usize) -> WeightGrid {
    layout_padded(t, fan_in, fan_out, fan_out).expect("width equals neuron count")
}

pub fn layout_padded(t: &Int8Tensor, fan_in: usize, fan_out: usize, width: usize) -> Result<WeightGrid, DramError> {
    if width < fan_out {
        return Err(DramError::WidthTooSmall { width, neurons: fan_out });
    }
    if t.len() != fan_in * fan_out {
        return Err(NetError::Shape(format!("{} weights for a {fan_in}×{fan_out} layer", t.len())).into());
    }
    let mut cells = vec![0u8; fan_in * width];
    for r in 0..fan_in {
        for j in 0..fan_out {
            cells[r * width + j] = t.raw[r * fan_out + j] as u8;
        }
    }
    let column_map = (0..width).map(|c| (c < fan_out).then_some(c)).collect();
    Ok(WeightGrid { rows: fan_in, width, cells, column_map, scale: t.scale })
}

/// Reads the mapped columns back into a row-major int8 matrix.
pub fn extract(grid: &WeightGrid) -> Int8Tensor {
    let neurons = grid.neurons();
    let mut raw = vec![0i8; grid.rows * neurons];
    for r in 0..grid.rows {
        for (c, n) in grid.column_map.iter().enumerate() {
            if let Some(n) = n {
                raw[r * neurons + n] = grid.get(r, c) as i8;
            }
        }
    }
    Int8Tensor { raw, scale: grid.scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "index")]
pub enum Target {
    /// Any mapped cell.
    Grid,
    /// Any cell of one physical column.
    Column(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub bit_pos: u32,
    pub count: usize,
    pub target: Target,
    pub seed: u64,
}

/// Flips `plan.bit_pos` in `plan.count` distinct cells drawn from the target
/// region; returns the flipped `(row, col)` sites in draw order.
pub fn inject(grid: &mut WeightGrid, plan: &InjectionPlan) -> Result<Vec<(usize, usize)>, DramError> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    inject_with(grid, plan.bit_pos, plan.count, plan.target, &mut rng)
}

fn inject_with(
    grid: &mut WeightGrid,
    bit_pos: u32,
    count: usize,
    target: Target,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>, DramError> {
    if bit_pos >= 8 {
        return Err(DramError::BitOutOfRange(bit_pos));
    }
    let region: Vec<(usize, usize)> = match target {
        Target::Grid => {
            let cols = grid.mapped_columns();
            (0..grid.rows).flat_map(|r| cols.iter().map(move |&c| (r, c))).collect()
        }
        Target::Column(c) => {
            if c >= grid.width {
                return Err(DramError::ColumnOutOfRange { column: c, width: grid.width });
            }
            (0..grid.rows).map(|r| (r, c)).collect()
        }
    };
    if count > region.len() {
        return Err(DramError::CountExceedsCells { count, eligible: region.len() });
    }
    let sites: Vec<(usize, usize)> = index::sample(rng, region.len(), count).into_iter().map(|i| region[i]).collect();
    for &(r, c) in &sites {
        let cell = &mut grid.cells[r * grid.width + c];
        *cell = flip_int8_bit(*cell as i8, bit_pos).expect("bit checked") as u8;
    }
    Ok(sites)
}

/// One evaluated fault-injection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub campaign: String,
    pub bit_pos: u32,
    pub column: Option<usize>,
    pub fault_count: usize,
    pub run_seed: u64,
    pub accuracy: f64,
    /// Baseline minus faulty accuracy, percentage points.
    pub drop_pp: f64,
}

pub fn write_csv<W: Write>(records: &[CampaignRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CampaignRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitposConfig {
    pub bit_positions: Vec<u32>,
    pub counts: Vec<usize>,
    pub run_seeds: Vec<u64>,
}

fn int8_layers(p: &PreparedModel) -> Vec<(Int8Tensor, usize, usize)> {
    (0..p.num_gemm_layers())
        .map(|g| {
            let (fi, fo) = p.gemm_dims(g);
            (p.int8_weights(g).expect("int8 model").clone(), fi, fo)
        })
        .collect()
}

/// Int8 accuracy of the fault-free model.
pub fn baseline_accuracy(model: &Model, data: &LabeledDataset, exec: Exec) -> Result<f64, DramError> {
    let p = PreparedModel::new(model, NumericMode::Int8)?;
    Ok(p.accuracy_hooked(data, &IdentityHook, exec)?)
}

/// For each `(bit_pos, count)` and run seed: flips `count` cells per layer
/// (independent draws per layer) and evaluates in int8.
///
/// The same seed selects the same cells for every bit position, so
/// positions are compared on identical fault sites.
pub fn bitpos_campaign(
    model: &Model,
    data: &LabeledDataset,
    cfg: &BitposConfig,
    exec: Exec,
) -> Result<Vec<CampaignRecord>, DramError> {
    let base = PreparedModel::new(model, NumericMode::Int8)?;
    base.check_input(data)?;
    let baseline = base.accuracy_hooked(data, &IdentityHook, exec)?;
    let layers = int8_layers(&base);
    for &b in &cfg.bit_positions {
        if b >= 8 {
            return Err(DramError::BitOutOfRange(b));
        }
    }
    for &count in &cfg.counts {
        for (t, fi, fo) in &layers {
            if count > fi * fo {
                return Err(DramError::CountExceedsCells { count, eligible: t.len() });
            }
        }
    }
    let mut jobs = Vec::new();
    for &bit in &cfg.bit_positions {
        for &count in &cfg.counts {
            for &seed in &cfg.run_seeds {
                jobs.push((bit, count, seed));
            }
        }
    }
    let results = exec.map_slice(&jobs, |&(bit, count, seed)| -> Result<CampaignRecord, DramError> {
        let accuracy = if count == 0 {
            baseline
        } else {
            let mut p = base.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (g, (t, fi, fo)) in layers.iter().enumerate() {
                let mut grid = layout(t, *fi, *fo);
                inject_with(&mut grid, bit, count, Target::Grid, &mut rng)?;
                p.set_int8_weights(g, extract(&grid))?;
            }
            // runs are already spread over the pool; evaluate each serially
            p.accuracy_hooked(data, &IdentityHook, Exec::Sequential)?
        };
        Ok(CampaignRecord {
            campaign: "bitpos".into(),
            bit_pos: bit,
            column: None,
            fault_count: count,
            run_seed: seed,
            accuracy,
            drop_pp: 100.0 * (baseline - accuracy),
        })
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub columns: Vec<usize>,
    #[serde(default = "default_faults_per_column")]
    pub faults_per_column: usize,
    #[serde(default = "default_bit")]
    pub bit_pos: u32,
    /// Physical width of the output layer's grid; `None` uses the widest
    /// layer of the model.
    #[serde(default)]
    pub width: Option<usize>,
    pub run_seeds: Vec<u64>,
}

fn default_faults_per_column() -> usize {
    20
}

fn default_bit() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub baseline: f64,
    pub width: usize,
    pub records: Vec<CampaignRecord>,
    /// `recall_drop[k][c]`: mean recall drop (pp) of class `c` when faults
    /// sit in `columns[k]`.
    pub recall_drop: Vec<Vec<f64>>,
}

/// Sign-bit (or `bit_pos`) attack on single columns of the output layer.
pub fn column_campaign(
    model: &Model,
    data: &LabeledDataset,
    cfg: &ColumnConfig,
    exec: Exec,
) -> Result<ColumnReport, DramError> {
    let base = PreparedModel::new(model, NumericMode::Int8)?;
    base.check_input(data)?;
    if cfg.bit_pos >= 8 {
        return Err(DramError::BitOutOfRange(cfg.bit_pos));
    }
    let last = base.num_gemm_layers() - 1;
    let (fan_in, fan_out) = base.gemm_dims(last);
    let widest = (0..=last).map(|g| base.gemm_dims(g).1).max().unwrap_or(fan_out);
    let width = cfg.width.unwrap_or(widest);
    let out_weights = base.int8_weights(last).expect("int8 model").clone();
    let grid = layout_padded(&out_weights, fan_in, fan_out, width)?;
    for &c in &cfg.columns {
        if c >= width {
            return Err(DramError::ColumnOutOfRange { column: c, width });
        }
    }
    if cfg.faults_per_column > fan_in {
        return Err(DramError::CountExceedsCells { count: cfg.faults_per_column, eligible: fan_in });
    }

    // Everything up to the output gemm is fault-free; cache its input.
    let layers = &base.model().layers;
    let out_layer = base.model().gemm_layers()[last];
    let plans = base.plans(&IdentityHook);
    let cached = base.run_layers(batch_matrix(data, 0..data.len()), 0..out_layer, &IdentityHook, &plans);
    let predict = |p: &PreparedModel| -> Vec<usize> {
        let logits = p.run_layers(cached.clone(), out_layer..layers.len(), &IdentityHook, &plans);
        logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect()
    };
    let base_pred = predict(&base);
    let baseline = accuracy_of(&base_pred, &data.labels);
    let base_recall = per_class_recall(&base_pred, &data.labels, NUM_CLASSES);

    let mut jobs = Vec::new();
    for (k, &column) in cfg.columns.iter().enumerate() {
        for &seed in &cfg.run_seeds {
            jobs.push((k, column, seed));
        }
    }
    let runs = exec.map_slice(&jobs, |&(_, column, seed)| -> Result<(CampaignRecord, Vec<f64>), DramError> {
        let mut g = grid.clone();
        let plan = InjectionPlan { bit_pos: cfg.bit_pos, count: cfg.faults_per_column, target: Target::Column(column), seed };
        inject(&mut g, &plan)?;
        let mut p = base.clone();
        p.set_int8_weights(last, extract(&g))?;
        let pred = predict(&p);
        let accuracy = accuracy_of(&pred, &data.labels);
        let recall = per_class_recall(&pred, &data.labels, NUM_CLASSES);
        let rec = CampaignRecord {
            campaign: "column".into(),
            bit_pos: cfg.bit_pos,
            column: Some(column),
            fault_count: cfg.faults_per_column,
            run_seed: seed,
            accuracy,
            drop_pp: 100.0 * (baseline - accuracy),
        };
        Ok((rec, recall))
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut recall_drop = vec![vec![0.0; NUM_CLASSES]; cfg.columns.len()];
    let n_runs = cfg.run_seeds.len().max(1) as f64;
    for (&(k, _, _), run) in jobs.iter().zip(runs) {
        let (rec, recall) = run?;
        for c in 0..NUM_CLASSES {
            recall_drop[k][c] += 100.0 * (base_recall[c] - recall[c]) / n_runs;
        }
        records.push(rec);
    }
    Ok(ColumnReport { baseline, width, records, recall_drop })
}

/// Mean and sample standard deviation of `drop_pp` per campaign cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub bit_pos: u32,
    pub column: Option<usize>,
    pub fault_count: usize,
    pub runs: usize,
    pub mean_drop_pp: f64,
    pub std_drop_pp: f64,
}

pub fn summarize(records: &[CampaignRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(u32, Option<usize>, usize)> = Vec::new();
    for r in records {
        let k = (r.bit_pos, r.column, r.fault_count);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(bit_pos, column, fault_count)| {
            let drops: Vec<f64> = records
                .iter()
                .filter(|r| (r.bit_pos, r.column, r.fault_count) == (bit_pos, column, fault_count))
                .map(|r| r.drop_pp)
                .collect();
            let (mean_drop_pp, std_drop_pp) = mean_std(&drops);
            CellSummary { bit_pos, column, fault_count, runs: drops.len(), mean_drop_pp, std_drop_pp }
        })
        .collect()
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
