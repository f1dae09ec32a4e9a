//! Closed-form MTTF of the crossbar peripheral transistors.
//!
//! TDDB: `MTTF = A · exp(−γ·√V)`. BTI: `MTTF = A / V^γ · exp(Ea / (k_B·T))`.
//! `V` is the overdrive gate voltage `V_GS − V_th`. The two mechanisms own
//! separate parameter types because their `A` and `γ` mean different things.

use serde::{Deserialize, Serialize};

use super::NeuroError;

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TddbParams {
    pub a: f64,
    /// Per √V.
    pub gamma: f64,
}

impl Default for TddbParams {
    fn default() -> Self {
        Self { a: 1.0, gamma: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtiParams {
    pub a: f64,
    pub gamma: f64,
    /// Activation energy in eV.
    pub ea: f64,
}

impl Default for BtiParams {
    fn default() -> Self {
        Self { a: 1.0, gamma: 3.0, ea: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressProfile {
    /// Overdrive gate voltage (V).
    pub v: f64,
    /// Temperature (K).
    pub t: f64,
    /// Fraction of time under stress.
    pub duty: f64,
}

impl StressProfile {
    pub fn validate(&self) -> Result<(), NeuroError> {
        check("V", self.v, self.v >= 0.0 && self.v.is_finite(), "V >= 0")?;
        check("T", self.t, self.t > 0.0 && self.t.is_finite(), "T > 0")?;
        check("duty", self.duty, (0.0..=1.0).contains(&self.duty), "[0, 1]")
    }
}

fn check(name: &'static str, value: f64, ok: bool, domain: &'static str) -> Result<(), NeuroError> {
    if ok {
        Ok(())
    } else {
        Err(NeuroError::Domain { name, value, domain })
    }
}

fn check_a(a: f64) -> Result<(), NeuroError> {
    check("A", a, a > 0.0 && a.is_finite(), "A > 0")
}

pub fn mttf_tddb(v: f64, p: &TddbParams) -> Result<f64, NeuroError> {
    check_a(p.a)?;
    check("gamma", p.gamma, p.gamma >= 0.0, "gamma >= 0")?;
    check("V", v, v >= 0.0 && v.is_finite(), "V >= 0")?;
    Ok(p.a * (-p.gamma * v.sqrt()).exp())
}

pub fn mttf_bti(v: f64, t: f64, p: &BtiParams) -> Result<f64, NeuroError> {
    check_a(p.a)?;
    check("T", t, t > 0.0 && t.is_finite(), "T > 0")?;
    check("V", v, v >= 0.0 && v.is_finite(), "V >= 0")?;
    if v == 0.0 && p.gamma > 0.0 {
        return Err(NeuroError::Domain { name: "V", value: v, domain: "V > 0 when gamma > 0" });
    }
    Ok(p.a / v.powf(p.gamma) * (p.ea / (BOLTZMANN_EV * t)).exp())
}

/// Wear-out mechanisms of the periphery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "lowercase")]
pub enum Mechanism {
    Tddb(TddbParams),
    Bti(BtiParams),
    /// Hot-carrier injection; no calibrated model exists.
    Hci,
}

pub fn mttf(mechanism: &Mechanism, stress: &StressProfile) -> Result<f64, NeuroError> {
    stress.validate()?;
    match mechanism {
        Mechanism::Tddb(p) => mttf_tddb(stress.v, p),
        Mechanism::Bti(p) => mttf_bti(stress.v, stress.t, p),
        Mechanism::Hci => Err(NeuroError::Unsupported("hot-carrier injection")),
    }
}

/// Inter-spike interval: the inverse of the mean firing rate over `window`.
pub fn isi(spike_times: &[f64], window: f64) -> Result<f64, NeuroError> {
    if spike_times.is_empty() {
        return Err(NeuroError::EmptySpikeTrain);
    }
    check("window", window, window > 0.0 && window.is_finite(), "window > 0")?;
    if spike_times.iter().any(|t| !t.is_finite()) || spike_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(NeuroError::UnsortedSpikes);
    }
    Ok(window / spike_times.len() as f64)
}
