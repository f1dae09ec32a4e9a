//! Parasitic-driven self-heating and endurance of a PCM crossbar.
//!
//! Cell `(i, j)` is counted from the driver corner (bottom-left), so its
//! current path crosses `i + j` wire segments. The cell current is
//! `V_active / (R_device + (i + j)·r_seg)`, the Joule rise is
//! `α·I²·R_device` above ambient, and endurance falls exponentially with
//! temperature: `E = E_ref · exp(−β·(T − T_ref))`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::NeuroError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessDevice {
    Diode,
    Transistor,
}

impl AccessDevice {
    /// `(idle, active)` crossbar-periphery voltages.
    pub fn cp_voltages(self) -> (f64, f64) {
        match self {
            AccessDevice::Diode => (1.8, 3.0),
            AccessDevice::Transistor => (1.2, 1.8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossbarConfig {
    pub n: usize,
    /// Resistance of one wire segment (Ω).
    pub r_seg: f64,
    pub access: AccessDevice,
    /// Overrides the access device's `(idle, active)` voltages.
    pub cp_voltages: Option<(f64, f64)>,
    /// Ambient temperature (K).
    pub t_amb: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self { n: 128, r_seg: 20.0, access: AccessDevice::Diode, cp_voltages: None, t_amb: 298.0 }
    }
}

impl CrossbarConfig {
    pub fn voltages(&self) -> (f64, f64) {
        self.cp_voltages.unwrap_or_else(|| self.access.cp_voltages())
    }

    pub fn validate(&self) -> Result<(), NeuroError> {
        let bad = |name, value, domain| Err(NeuroError::Domain { name, value, domain });
        if self.n == 0 {
            return bad("n", 0.0, "n >= 1");
        }
        if !(self.r_seg >= 0.0 && self.r_seg.is_finite()) {
            return bad("r_seg", self.r_seg, "r_seg >= 0");
        }
        let (idle, active) = self.voltages();
        for (name, v) in [("idle voltage", idle), ("active voltage", active)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v, "> 0");
            }
        }
        if !(self.t_amb > 0.0 && self.t_amb.is_finite()) {
            return bad("t_amb", self.t_amb, "> 0");
        }
        Ok(())
    }
}

/// Parasitic segments on the current path of cell `(i, j)`.
pub fn cell_path_length(i: usize, j: usize, config: &CrossbarConfig) -> Result<usize, NeuroError> {
    if i >= config.n || j >= config.n {
        return Err(NeuroError::CellOutOfRange { row: i, col: j, n: config.n });
    }
    Ok(i + j)
}

/// Device and thermal constants of the endurance law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnduranceModel {
    /// Cell resistance (Ω).
    pub r_device: f64,
    /// Joule heating coefficient (K/W).
    pub alpha: f64,
    /// Endurance temperature sensitivity (1/K).
    pub beta: f64,
    pub e_ref: f64,
    pub t_ref: f64,
}

pub const DEFAULT_R_DEVICE: f64 = 10_000.0;
pub const DEFAULT_HOT_RISE: f64 = 80.0;

impl Default for EnduranceModel {
    fn default() -> Self {
        Self::calibrate(&CrossbarConfig::default(), DEFAULT_R_DEVICE, DEFAULT_HOT_RISE, 1e6, 1e10)
            .expect("default calibration is well posed")
    }
}

impl EnduranceModel {
    /// Fits `α`, `β`, `E_ref` so that on `reference` the driver corner
    /// heats by `hot_rise` and reaches `e_hot` cycles while the far corner
    /// reaches `e_cold`.
    pub fn calibrate(
        reference: &CrossbarConfig,
        r_device: f64,
        hot_rise: f64,
        e_hot: f64,
        e_cold: f64,
    ) -> Result<Self, NeuroError> {
        reference.validate()?;
        let bad = |name, value, domain| Err(NeuroError::Domain { name, value, domain });
        if !(r_device > 0.0 && r_device.is_finite()) {
            return bad("r_device", r_device, "> 0");
        }
        if !(hot_rise > 0.0 && hot_rise.is_finite()) {
            return bad("hot_rise", hot_rise, "> 0");
        }
        if !(e_hot > 0.0 && e_cold > e_hot && e_cold.is_finite()) {
            return bad("e_cold", e_cold, "> e_hot > 0");
        }
        let v = reference.voltages().1;
        let far = (2 * (reference.n - 1)) as f64;
        let i_hot = v / r_device;
        let i_cold = v / (r_device + far * reference.r_seg);
        let alpha = hot_rise / (i_hot * i_hot * r_device);
        let t_hot = reference.t_amb + hot_rise;
        let t_cold = reference.t_amb + alpha * i_cold * i_cold * r_device;
        if t_hot <= t_cold {
            return bad("r_seg", reference.r_seg, "> 0 on the calibration crossbar");
        }
        let beta = (e_cold / e_hot).ln() / (t_hot - t_cold);
        Ok(Self { r_device, alpha, beta, e_ref: e_cold, t_ref: t_cold })
    }

    fn validate(&self) -> Result<(), NeuroError> {
        let bad = |name, value, domain| Err(NeuroError::Domain { name, value, domain });
        if !(self.r_device > 0.0 && self.r_device.is_finite()) {
            return bad("r_device", self.r_device, "> 0");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha/beta", self.alpha.min(self.beta), ">= 0");
        }
        if !(self.e_ref > 0.0 && self.e_ref.is_finite()) {
            return bad("e_ref", self.e_ref, "> 0");
        }
        Ok(())
    }

    pub fn endurance_at(&self, t: f64) -> f64 {
        self.e_ref * (-self.beta * (t - self.t_ref)).exp()
    }
}

/// Per-cell temperature (K) and endurance (write cycles), indexed
/// `[i, j]` from the driver corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceMap {
    pub temperature: Array2<f64>,
    pub endurance: Array2<f64>,
}

impl EnduranceMap {
    pub fn n(&self) -> usize {
        self.endurance.nrows()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "path_length", "temperature", "endurance"])?;
        for ((i, j), e) in self.endurance.indexed_iter() {
            let t = self.temperature[[i, j]];
            w.write_record([i.to_string(), j.to_string(), (i + j).to_string(), t.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_endurance_map(config: &CrossbarConfig, model: &EnduranceModel) -> Result<EnduranceMap, NeuroError> {
    config.validate()?;
    model.validate()?;
    let n = config.n;
    let v = config.voltages().1;
    // depends on the path length only
    let by_length: Vec<(f64, f64)> = (0..2 * n - 1)
        .map(|len| {
            let i = v / (model.r_device + len as f64 * config.r_seg);
            let t = config.t_amb + model.alpha * i * i * model.r_device;
            (t, model.endurance_at(t))
        })
        .collect();
    Ok(EnduranceMap {
        temperature: Array2::from_shape_fn((n, n), |(i, j)| by_length[i + j].0),
        endurance: Array2::from_shape_fn((n, n), |(i, j)| by_length[i + j].1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_lengths() {
        let c = CrossbarConfig::default();
        assert_eq!(cell_path_length(0, 0, &c).unwrap(), 0);
        assert_eq!(cell_path_length(127, 127, &c).unwrap(), 254);
        assert!(cell_path_length(128, 0, &c).is_err());
        for i in 0..127 {
            assert!(cell_path_length(i + 1, 5, &c).unwrap() > cell_path_length(i, 5, &c).unwrap());
        }
    }

    #[test]
    fn default_calibration_hits_the_corners() {
        let m = build_endurance_map(&CrossbarConfig::default(), &EnduranceModel::default()).unwrap();
        assert!((m.endurance[[0, 0]] / 1e6 - 1.0).abs() < 1e-9);
        assert!((m.endurance[[127, 127]] / 1e10 - 1.0).abs() < 1e-9);
        assert!((m.temperature[[0, 0]] - 378.0).abs() < 1e-9);
        let ratio = m.endurance[[0, 0]] / m.endurance[[127, 127]];
        assert!((1e-5..=1e-3).contains(&ratio));
        for k in 1..128 {
            assert!(m.endurance[[k, k]] > m.endurance[[k - 1, k - 1]]);
        }
    }

    #[test]
    fn no_parasitics_is_uniform() {
        let c = CrossbarConfig { r_seg: 0.0, ..CrossbarConfig::default() };
        let m = build_endurance_map(&c, &EnduranceModel::default()).unwrap();
        let e0 = m.endurance[[0, 0]];
        assert!(m.endurance.iter().all(|&e| e == e0));
        assert!(m.temperature.iter().all(|&t| t == m.temperature[[0, 0]]));
    }

    #[test]
    fn rejects_non_physical_parameters() {
        let c = CrossbarConfig { r_seg: -1.0, ..CrossbarConfig::default() };
        assert!(build_endurance_map(&c, &EnduranceModel::default()).is_err());
        let m = EnduranceModel { r_device: -5.0, ..EnduranceModel::default() };
        assert!(build_endurance_map(&CrossbarConfig::default(), &m).is_err());
        assert!(EnduranceModel::calibrate(&CrossbarConfig { r_seg: 0.0, ..CrossbarConfig::default() }, 1e4, 80.0, 1e6, 1e10).is_err());
    }

    #[test]
    fn transistor_mode_runs_cooler() {
        let model = EnduranceModel::default();
        let d = build_endurance_map(&CrossbarConfig::default(), &model).unwrap();
        let t = CrossbarConfig { access: AccessDevice::Transistor, ..CrossbarConfig::default() };
        let m = build_endurance_map(&t, &model).unwrap();
        assert!(m.temperature[[0, 0]] < d.temperature[[0, 0]]);
        assert!(m.endurance[[0, 0]] > d.endurance[[0, 0]]);
    }
}
