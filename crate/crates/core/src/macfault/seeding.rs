//! Column-uniform fault seeding.
//!
//! Every column gets `round_half_up(0.01·FR·N_Row)` faulty PEs. The rows are
//! the head of a per-column random permutation, so raising FR only adds
//! faults. Each PE's signature comes from its own stream keyed by
//! `(seed, row, col)`, so a PE keeps the same draws across FR and K.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArrayConfig, ArrayState, LogicConeFault, MacError};

/// Distribution of fault signatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureSpec {
    /// Non-critical faults touch cone bits `< lsb_bits` only.
    pub lsb_bits: u32,
    /// Probability that a faulty PE instead carries a critical signature
    /// (top bit drawn from the critical range of the format).
    #[serde(default)]
    pub critical_fraction: f64,
    #[serde(default = "default_carry")]
    pub carry_probability: f64,
}

fn default_carry() -> f64 {
    0.5
}

impl SignatureSpec {
    pub fn non_critical(lsb_bits: u32) -> Self {
        Self { lsb_bits, critical_fraction: 0.0, carry_probability: default_carry() }
    }
}

/// `round_half_up(0.01 · FR · rows)`.
pub fn faulty_per_column(fr_percent: f64, rows: usize) -> usize {
    // the epsilon keeps exact halves from rounding down through binary error
    let x = fr_percent * rows as f64 / 100.0;
    let n = (x + 0.5 + 1e-9).floor() as usize;
    n.min(rows)
}

const COLUMN_STREAM: u64 = 1 << 40;

fn column_rng(seed: u64, col: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COLUMN_STREAM + col as u64);
    rng
}

fn pe_rng(seed: u64, row: usize, col: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((row as u64) << 20) | col as u64);
    rng
}

fn signature(row: usize, col: usize, config: &ArrayConfig, spec: &SignatureSpec, seed: u64) -> LogicConeFault {
    let mut rng = pe_rng(seed, row, col);
    let u_crit: f64 = rng.random();
    let u_top: f64 = rng.random();
    let u_carry: f64 = rng.random();
    let carry_sign = if rng.random::<bool>() { 1 } else { -1 };
    let stuck: u32 = rng.random();
    let width = config.format.cone_width();
    let thr = config.format.non_critical_bits();
    let top = if u_crit < spec.critical_fraction {
        thr + ((u_top * (width - thr) as f64) as u32).min(width - thr - 1)
    } else {
        let k = spec.lsb_bits.clamp(1, width);
        ((u_top * k as f64) as u32).min(k - 1)
    };
    let cone_bits = (0..=top).map(|b| (b, stuck >> b & 1 == 1)).collect();
    LogicConeFault { row, col, cone_bits, carry: u_carry < spec.carry_probability, carry_sign }
}

/// Seeds a fresh array state with `fr_percent` faulty PEs per column.
pub fn seed_fault_map(
    config: ArrayConfig,
    fr_percent: f64,
    spec: &SignatureSpec,
    seed: u64,
) -> Result<ArrayState, MacError> {
    config.validate()?;
    if !(0.0..=100.0).contains(&fr_percent) {
        return Err(MacError::FaultRate(fr_percent));
    }
    for (name, v) in [("critical_fraction", spec.critical_fraction), ("carry_probability", spec.carry_probability)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(MacError::Fraction(name, v));
        }
    }
    let n = faulty_per_column(fr_percent, config.rows);
    let mut state = ArrayState::new(config)?;
    let mut rows: Vec<usize> = (0..config.rows).collect();
    for col in 0..config.cols {
        rows.sort_unstable();
        rows.shuffle(&mut column_rng(seed, col));
        for &row in &rows[..n] {
            state.insert_fault(signature(row, col, &config, spec, seed))?;
        }
    }
    Ok(state)
}
