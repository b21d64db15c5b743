//! Resolved run parameters, named presets and the flat `key = value` format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::NlcgOptions;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::qdd::QddConfig;
use crate::qle::QleConfig;
use crate::scenarios::{BarrierLayout, PacketShape, ScenarioKind, ScenarioParams};

pub const PRESETS: [&str; 5] =
    ["paper-default", "maxwellian", "hamiltonian-function", "wave-packets", "wave-packets-eps0.0025"];

/// Every knob of a QLE/QDD run. Times are in the scaled units of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: ScenarioKind,
    pub grid_points: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// QLE step.
    pub time_step: f64,
    /// QDD step; the QLE step when unset.
    pub qdd_time_step: Option<f64>,
    pub final_time: f64,
    /// Relative-step tolerance of the equilibrium minimizer.
    pub tolerance: f64,
    pub truncation: f64,
    /// Time between snapshots; must be a multiple of both steps.
    pub snapshot_stride: f64,
    pub barrier_height: f64,
    pub barrier_width: f64,
    pub well_center: f64,
    pub tilt: f64,
    pub packet_center: f64,
    pub packet_width: f64,
    pub packet_floor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let b = BarrierLayout::default();
        let p = PacketShape::default();
        Self {
            scenario: ScenarioKind::Maxwellian,
            grid_points: 400,
            alpha: 1.0,
            beta: 0.015,
            epsilon: 0.01,
            time_step: 1e-4,
            qdd_time_step: None,
            final_time: 0.1,
            tolerance: 1e-7,
            truncation: 1e-7,
            snapshot_stride: 1e-3,
            barrier_height: b.height,
            barrier_width: b.width,
            well_center: b.center,
            tilt: -2.0,
            packet_center: p.center,
            packet_width: p.width,
            packet_floor: p.floor,
        }
    }
}

/// Named parameter sets. All share `N = 400`, `alpha = 1`, `beta = 0.015`,
/// `h = 1e-4` and `T = 0.1`.
pub fn preset(name: &str) -> Result<SimConfig> {
    let base = SimConfig::default();
    let cfg = match name {
        "paper-default" | "maxwellian" => base,
        "hamiltonian-function" => SimConfig { scenario: ScenarioKind::HamiltonianFunction, ..base },
        "wave-packets" => SimConfig { scenario: ScenarioKind::WavePackets, ..base },
        "wave-packets-eps0.0025" => {
            SimConfig { scenario: ScenarioKind::WavePackets, epsilon: 0.0025, time_step: 5e-6, ..base }
        }
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl SimConfig {
    /// Sets one parameter from its textual form. Keys are the field names;
    /// dashes are accepted in place of underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "scenario" => self.scenario = value.parse().map_err(|_| Error::Config(format!("unknown scenario `{value}`")))?,
            "grid_points" => self.grid_points = parse_num(k, value)?,
            "alpha" => self.alpha = parse_num(k, value)?,
            "beta" => self.beta = parse_num(k, value)?,
            "epsilon" => self.epsilon = parse_num(k, value)?,
            "time_step" => self.time_step = parse_num(k, value)?,
            "qdd_time_step" => {
                self.qdd_time_step = if value.is_empty() || value == "none" { None } else { Some(parse_num(k, value)?) }
            }
            "final_time" => self.final_time = parse_num(k, value)?,
            "tolerance" => self.tolerance = parse_num(k, value)?,
            "truncation" => self.truncation = parse_num(k, value)?,
            "snapshot_stride" => self.snapshot_stride = parse_num(k, value)?,
            "barrier_height" => self.barrier_height = parse_num(k, value)?,
            "barrier_width" => self.barrier_width = parse_num(k, value)?,
            "well_center" => self.well_center = parse_num(k, value)?,
            "tilt" => self.tilt = parse_num(k, value)?,
            "packet_center" => self.packet_center = parse_num(k, value)?,
            "packet_width" => self.packet_width = parse_num(k, value)?,
            "packet_floor" => self.packet_floor = parse_num(k, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`. `#` starts
    /// a comment; a `preset = name` line resets to that preset first.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            if key.trim() == "preset" {
                *self = preset(value.trim())?;
            } else {
                self.set(key, value)?;
            }
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// The `key = value` form read back by [`SimConfig::from_kv`]. Floats are
    /// written in shortest round-trip form.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("scenario", self.scenario.to_string());
        put("grid_points", self.grid_points.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("epsilon", self.epsilon.to_string());
        put("time_step", self.time_step.to_string());
        put("qdd_time_step", self.qdd_time_step.map_or_else(|| "none".to_string(), |h| h.to_string()));
        put("final_time", self.final_time.to_string());
        put("tolerance", self.tolerance.to_string());
        put("truncation", self.truncation.to_string());
        put("snapshot_stride", self.snapshot_stride.to_string());
        put("barrier_height", self.barrier_height.to_string());
        put("barrier_width", self.barrier_width.to_string());
        put("well_center", self.well_center.to_string());
        put("tilt", self.tilt.to_string());
        put("packet_center", self.packet_center.to_string());
        put("packet_width", self.packet_width.to_string());
        put("packet_floor", self.packet_floor.to_string());
        s
    }

    pub fn qdd_step(&self) -> f64 {
        self.qdd_time_step.unwrap_or(self.time_step)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("time_step", self.time_step),
            ("qdd_time_step", self.qdd_step()),
            ("tolerance", self.tolerance),
            ("snapshot_stride", self.snapshot_stride),
            ("packet_width", self.packet_width),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("`{k}` must be positive and finite, got {v}")));
            }
        }
        let non_negative = [("final_time", self.final_time), ("truncation", self.truncation), ("packet_floor", self.packet_floor)];
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("`{k}` must be non-negative and finite, got {v}")));
            }
        }
        if self.grid_points < 2 {
            return Err(Error::Config(format!("`grid_points` must be at least 2, got {}", self.grid_points)));
        }
        self.stride_steps(self.time_step)?;
        self.stride_steps(self.qdd_step())?;
        Ok(())
    }

    /// Number of steps of size `h` between snapshots.
    pub fn stride_steps(&self, h: f64) -> Result<usize> {
        let ratio = self.snapshot_stride / h;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-6 * k {
            return Err(Error::Config(format!(
                "snapshot stride {} is not a multiple of the step {h}",
                self.snapshot_stride
            )));
        }
        Ok(k as usize)
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::new(self.grid_points)
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            beta: self.beta,
            truncation: self.truncation,
            barrier: BarrierLayout { height: self.barrier_height, width: self.barrier_width, center: self.well_center },
            tilt: self.tilt,
            packets: PacketShape { center: self.packet_center, width: self.packet_width, floor: self.packet_floor },
        }
    }

    pub fn nlcg(&self) -> NlcgOptions<f64> {
        NlcgOptions::default().with_tolerance(self.tolerance)
    }

    pub fn qle_config(&self) -> QleConfig<f64> {
        let mut c = QleConfig::new(self.time_step, self.epsilon, self.beta, self.alpha);
        c.nlcg = self.nlcg();
        c.truncation_threshold = self.truncation;
        c
    }

    pub fn qdd_config(&self) -> QddConfig<f64> {
        let mut c = QddConfig::new(self.qdd_step(), self.beta, self.alpha);
        c.nlcg = self.nlcg();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let p = preset("paper-default").unwrap();
        assert_eq!(p.grid_points, 400);
        assert_eq!(p.alpha, 1.0);
        assert_eq!((p.beta, p.tolerance, p.truncation, p.time_step, p.final_time), (0.015, 1e-7, 1e-7, 1e-4, 0.1));
        assert_eq!(preset("wave-packets-eps0.0025").unwrap().time_step, 5e-6);
        assert_eq!(preset("wave-packets-eps0.0025").unwrap().epsilon, 0.0025);
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = preset("hamiltonian-function").unwrap();
        cfg.epsilon = 0.1;
        cfg.qdd_time_step = Some(2e-4);
        cfg.well_center = 0.1 + 0.2;
        let back = SimConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn kv_parsing() {
        let text = "preset = wave-packets  # start here\n\n grid-points=100\nepsilon = 0.1\n";
        let cfg = SimConfig::from_kv(text).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::WavePackets);
        assert_eq!(cfg.grid_points, 100);
        assert_eq!(cfg.epsilon, 0.1);
        assert!(SimConfig::from_kv("beta 0.1").is_err());
        assert!(SimConfig::from_kv("colour = red").is_err());
        assert!(SimConfig::from_kv("beta = fast").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = SimConfig::default();
        assert_eq!(cfg.stride_steps(1e-4).unwrap(), 10);
        cfg.snapshot_stride = 1.5e-4;
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { epsilon: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { grid_points: 1, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        assert_eq!(preset("wave-packets-eps0.0025").unwrap().stride_steps(5e-6).unwrap(), 200);
    }
}
