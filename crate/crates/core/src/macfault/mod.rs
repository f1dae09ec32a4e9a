//! Stuck-at faults in the MAC units of a weight-stationary systolic array.
//!
//! A fault sits in the logic cone of some multiplier output bits: those
//! bits of the product word are stuck at fixed values, and optionally the
//! partial-product carry into the bit above the highest faulty one is
//! corrupted by `±2^(K+1)`.
//!
//! Product words are 16-bit sign-magnitude. For int8 the magnitude is the
//! exact integer product (bits 0..=14) and bit 15 the sign; for bfloat16 the
//! word is the rounded product and faults are confined to the 7 mantissa
//! bits. The carry term is added to the magnitude field.

pub mod array;
pub mod deactivate;
pub mod maccount;
pub mod seeding;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcore::infer::NumericMode;
use crate::netcore::NetError;
use crate::quantnum::BFloat16;

pub use array::{
    fault_aware_train, fault_train_campaign, lsb_sensitivity_sweep, prune_by_magnitude, read_sweep_csv, run_array,
    write_sweep_csv, ArrayHook, FaultTrainConfig, FaultTrainRecord, SweepConfig, SweepRecord,
};
pub use deactivate::deactivate;
pub use maccount::{mac_count, ArchDescriptor, LayerDesc};
pub use seeding::{faulty_per_column, seed_fault_map, SignatureSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("array dimensions must be at least 1×1, got {rows}×{cols}")]
    EmptyArray { rows: usize, cols: usize },
    #[error("PE ({row}, {col}) outside the {rows}×{cols} array")]
    PeOutOfRange { row: usize, col: usize, rows: usize, cols: usize },
    #[error("fault at PE ({row}, {col}): {reason}")]
    InvalidFault { row: usize, col: usize, reason: String },
    #[error("fault rate {0}% outside [0, 100]")]
    FaultRate(f64),
    #[error("{0} must lie in [0, 1], got {1}")]
    Fraction(&'static str, f64),
    #[error("deactivation infeasible: {0}")]
    Infeasible(String),
    #[error("inconsistent architecture: {0}")]
    Architecture(String),
    #[error("fault map file: {0}")]
    FaultMapFile(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacFormat {
    Int8,
    #[serde(alias = "bf16")]
    BFloat16,
}

impl MacFormat {
    pub fn numeric_mode(self) -> NumericMode {
        match self {
            MacFormat::Int8 => NumericMode::Int8,
            MacFormat::BFloat16 => NumericMode::BFloat16,
        }
    }

    /// Number of product-word bits a cone fault may touch.
    pub fn cone_width(self) -> u32 {
        match self {
            MacFormat::Int8 => 16,
            MacFormat::BFloat16 => BFloat16::MANTISSA_BITS,
        }
    }

    /// Faults whose highest bit is below this are non-critical.
    pub fn non_critical_bits(self) -> u32 {
        match self {
            MacFormat::Int8 => 2,
            MacFormat::BFloat16 => 4,
        }
    }
}

impl std::fmt::Display for MacFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MacFormat::Int8 => "int8",
            MacFormat::BFloat16 => "bfloat16",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub format: MacFormat,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { rows: 128, cols: 128, format: MacFormat::Int8 }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<(), MacError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(MacError::EmptyArray { rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    pub fn num_pes(&self) -> usize {
        self.rows * self.cols
    }

    /// PE hosting weight `(row, col)` of a layer matrix (tiled).
    pub fn host(&self, row: usize, col: usize) -> (usize, usize) {
        (row % self.rows, col % self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criticality {
    Critical,
    NonCritical,
}

/// One faulty PE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicConeFault {
    pub row: usize,
    pub col: usize,
    /// `(bit, stuck value)` pairs, distinct bits.
    pub cone_bits: Vec<(u32, bool)>,
    pub carry: bool,
    /// Direction of the carry perturbation in simulation mode.
    #[serde(default = "plus_one")]
    pub carry_sign: i8,
}

fn plus_one() -> i8 {
    1
}

impl LogicConeFault {
    pub fn max_bit(&self) -> u32 {
        self.cone_bits.iter().map(|&(b, _)| b).max().unwrap_or(0)
    }

    pub fn validate(&self, format: MacFormat) -> Result<(), MacError> {
        let bad = |reason: String| MacError::InvalidFault { row: self.row, col: self.col, reason };
        if self.cone_bits.is_empty() {
            return Err(bad("no cone bits".into()));
        }
        let width = format.cone_width();
        let mut seen = 0u32;
        for &(b, _) in &self.cone_bits {
            if b >= width {
                return Err(bad(format!("bit {b} outside the {width}-bit {format} product cone")));
            }
            if seen >> b & 1 == 1 {
                return Err(bad(format!("bit {b} listed twice")));
            }
            seen |= 1 << b;
        }
        if self.carry_sign != 1 && self.carry_sign != -1 {
            return Err(bad(format!("carry sign {} is not ±1", self.carry_sign)));
        }
        Ok(())
    }
}

/// `Σ_{i=0}^{K+1} 2^i`.
pub fn worst_case_error(k: u32) -> u64 {
    (1u64 << (k + 2)) - 1
}

pub fn classify(fault: &LogicConeFault, format: MacFormat) -> Criticality {
    // A carry lands on bit max+1, so the bound stays below the first
    // critical bit's weight whenever every cone bit is non-critical.
    if fault.max_bit() < format.non_critical_bits() {
        Criticality::NonCritical
    } else {
        Criticality::Critical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarryMode {
    /// Carry sign pushes the error further from zero.
    #[default]
    WorstCase,
    /// Carry sign taken from the fault's `carry_sign`.
    Simulation,
}

/// A fault reduced to word masks for repeated application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct WordFault {
    clear: u16,
    set: u16,
    /// `2^(max_bit + 1)` when the carry fires, else 0.
    carry: i64,
    /// Fixed carry sign, or 0 to pick the sign that widens the error.
    sign: i8,
}

impl WordFault {
    pub(crate) fn new(fault: &LogicConeFault, mode: CarryMode) -> Self {
        let (mut clear, mut set) = (0u16, 0u16);
        for &(b, v) in &fault.cone_bits {
            clear |= 1 << b;
            if v {
                set |= 1 << b;
            }
        }
        let carry = if fault.carry { 1i64 << (fault.max_bit() + 1) } else { 0 };
        let sign = match mode {
            CarryMode::WorstCase => 0,
            CarryMode::Simulation => fault.carry_sign,
        };
        Self { clear, set, carry, sign }
    }

    /// Stuck bits and carry on a 16-bit sign-magnitude word; the magnitude
    /// stays signed so the carry can swing it below zero.
    fn corrupt(&self, word: u16) -> (bool, i64) {
        let w = (word & !self.clear) | self.set;
        let neg = w >> 15 == 1;
        let mut mag = (w & 0x7FFF) as i64;
        if self.carry != 0 {
            let sign = match self.sign {
                0 if mag >= (word & 0x7FFF) as i64 => 1,
                0 => -1,
                s => s as i64,
            };
            mag += sign * self.carry;
        }
        (neg, mag)
    }

    pub(crate) fn apply(&self, x: f64, w: f64, format: MacFormat) -> f64 {
        let exact = x * w;
        match format {
            MacFormat::Int8 => {
                let p = exact as i64;
                let word = ((p < 0) as u16) << 15 | p.unsigned_abs() as u16;
                let (neg, mag) = self.corrupt(word);
                (if neg { -mag } else { mag }) as f64
            }
            MacFormat::BFloat16 => {
                let b = BFloat16::from_f64(exact);
                if !b.is_finite() {
                    return exact;
                }
                let (neg, mag) = self.corrupt(b.0);
                // keep the corrupted word finite
                let mag = mag.clamp(0, 0x7F7F) as u16;
                let faulty = BFloat16(((neg as u16) << 15) | mag).to_f64();
                exact + (faulty - b.to_f64())
            }
        }
    }
}

/// Product of two operands through an optionally faulty multiplier.
///
/// Int8 operands are raw integers; bfloat16 operands must be exactly
/// representable. The exact product is returned when there is no fault;
/// otherwise the exact product plus the error the fault causes on the
/// product word.
pub fn faulty_mac(x: f64, w: f64, fault: Option<&LogicConeFault>, format: MacFormat, mode: CarryMode) -> f64 {
    match fault {
        None => x * w,
        Some(f) => WordFault::new(f, mode).apply(x, w, format),
    }
}

/// Fault Status Register: one entry per faulty PE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultStatusRegister {
    pub entries: Vec<FsrEntry>,
    pub fr_max_non_crit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsrEntry {
    pub row: usize,
    pub col: usize,
    pub criticality: Criticality,
}

/// Array configuration, fault map and active mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayState {
    pub config: ArrayConfig,
    faults: Vec<Option<LogicConeFault>>,
    active: Vec<bool>,
}

impl ArrayState {
    pub fn new(config: ArrayConfig) -> Result<Self, MacError> {
        config.validate()?;
        let n = config.num_pes();
        Ok(Self { config, faults: vec![None; n], active: vec![true; n] })
    }

    pub fn with_faults(config: ArrayConfig, faults: Vec<LogicConeFault>) -> Result<Self, MacError> {
        let mut s = Self::new(config)?;
        for f in faults {
            s.insert_fault(f)?;
        }
        Ok(s)
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.config.cols + col
    }

    pub fn insert_fault(&mut self, fault: LogicConeFault) -> Result<(), MacError> {
        let (rows, cols) = (self.config.rows, self.config.cols);
        if fault.row >= rows || fault.col >= cols {
            return Err(MacError::PeOutOfRange { row: fault.row, col: fault.col, rows, cols });
        }
        fault.validate(self.config.format)?;
        let i = self.idx(fault.row, fault.col);
        self.faults[i] = Some(fault);
        Ok(())
    }

    pub fn fault(&self, row: usize, col: usize) -> Option<&LogicConeFault> {
        self.faults[self.idx(row, col)].as_ref()
    }

    pub fn faults(&self) -> impl Iterator<Item = &LogicConeFault> {
        self.faults.iter().flatten()
    }

    pub fn num_faulty(&self) -> usize {
        self.faults().count()
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.active[self.idx(row, col)]
    }

    pub fn set_active(&mut self, row: usize, col: usize, on: bool) {
        let i = self.idx(row, col);
        self.active[i] = on;
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn num_active_faulty(&self) -> usize {
        self.faults().filter(|f| self.is_active(f.row, f.col)).count()
    }

    /// Active faulty PEs over active PEs (0 when nothing is active).
    pub fn active_fault_rate(&self) -> f64 {
        let active = self.num_active();
        if active == 0 {
            0.0
        } else {
            self.num_active_faulty() as f64 / active as f64
        }
    }

    pub fn fsr(&self, fr_max_non_crit: f64) -> FaultStatusRegister {
        let entries = self
            .faults()
            .map(|f| FsrEntry { row: f.row, col: f.col, criticality: classify(f, self.config.format) })
            .collect();
        FaultStatusRegister { entries, fr_max_non_crit }
    }

    /// Pairs of 4-adjacent active faulty PEs.
    pub fn adjacent_active_faulty_pairs(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mut pairs = Vec::new();
        let live = |r: usize, c: usize| self.fault(r, c).is_some() && self.is_active(r, c);
        for f in self.faults() {
            let (r, c) = (f.row, f.col);
            if !live(r, c) {
                continue;
            }
            if r + 1 < self.config.rows && live(r + 1, c) {
                pairs.push(((r, c), (r + 1, c)));
            }
            if c + 1 < self.config.cols && live(r, c + 1) {
                pairs.push(((r, c), (r, c + 1)));
            }
        }
        pairs
    }
}

pub const FAULT_MAP_FORMAT: &str = "hwrel-faultmap";
pub const FAULT_MAP_VERSION: u32 = 1;

/// On-disk fault map: configuration, provenance of the draw, per-PE
/// entries, the FSR and the active mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultMapFile {
    pub format: String,
    pub version: u32,
    pub config: ArrayConfig,
    pub seed: Option<u64>,
    pub fault_rate_percent: Option<f64>,
    pub faults: Vec<FaultEntry>,
    pub fsr: FaultStatusRegister,
    /// Deactivated PEs as `(row, col)`.
    #[serde(default)]
    pub inactive: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    #[serde(flatten)]
    pub fault: LogicConeFault,
    pub criticality: Criticality,
}

impl FaultMapFile {
    pub fn from_state(state: &ArrayState, seed: Option<u64>, fault_rate_percent: Option<f64>, fr_max_non_crit: f64) -> Self {
        let format = state.config.format;
        let faults = state
            .faults()
            .map(|f| FaultEntry { fault: f.clone(), criticality: classify(f, format) })
            .collect();
        let inactive = (0..state.config.rows)
            .flat_map(|r| (0..state.config.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !state.is_active(r, c))
            .collect();
        Self {
            format: FAULT_MAP_FORMAT.into(),
            version: FAULT_MAP_VERSION,
            config: state.config,
            seed,
            fault_rate_percent,
            faults,
            fsr: state.fsr(fr_max_non_crit),
            inactive,
        }
    }

    pub fn to_state(&self) -> Result<ArrayState, MacError> {
        if self.format != FAULT_MAP_FORMAT || self.version != FAULT_MAP_VERSION {
            return Err(MacError::FaultMapFile(format!("unsupported {} v{}", self.format, self.version)));
        }
        let mut s = ArrayState::with_faults(self.config, self.faults.iter().map(|e| e.fault.clone()).collect())?;
        for e in &self.faults {
            if e.criticality != classify(&e.fault, self.config.format) {
                return Err(MacError::FaultMapFile(format!(
                    "PE ({}, {}) recorded as {:?} but its cone bits say otherwise",
                    e.fault.row, e.fault.col, e.criticality
                )));
            }
        }
        for &(r, c) in &self.inactive {
            if r >= self.config.rows || c >= self.config.cols {
                return Err(MacError::PeOutOfRange { row: r, col: c, rows: self.config.rows, cols: self.config.cols });
            }
            s.set_active(r, c, false);
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fault map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MacError> {
        serde_json::from_str(text).map_err(|e| MacError::FaultMapFile(e.to_string()))
    }
}
