//! JSON run configuration. Every key carries its unit; unknown keys are
//! rejected. Defaults reproduce the NV-centre parameter set (single probe
//! T2 = 2 ms, ensemble T2 = 84 us at 6.7e16 cm^-3, T = 1 s).

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spinprobe::montecarlo::Estimator;
use spinprobe::optimize::{log_space, SweepMode};
use spinprobe::physics::{CouplingConvention, DEFAULT_G};
use spinprobe::{Geometry, PhysicalConstants, Position, ProbeSpinParams, Shape, TargetSpin};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub constants: ConstantsConfig,
    pub single: SingleConfig,
    pub ensemble: EnsembleConfig,
    pub geometry: Option<GeometryConfig>,
    pub positions: Vec<PositionConfig>,
    pub protocol: ProtocolConfig,
    pub optimize: OptimizeConfig,
    pub sweep: SweepConfig,
    pub mc: McSettings,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            constants: ConstantsConfig::default(),
            single: SingleConfig::default(),
            ensemble: EnsembleConfig::default(),
            geometry: None,
            positions: vec![PositionConfig {
                x_um: 0.0,
                y_um: 0.0,
                z_um: 1.0,
                s: 1.0,
            }],
            protocol: ProtocolConfig::default(),
            optimize: OptimizeConfig::default(),
            sweep: SweepConfig::default(),
            mc: McSettings::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub g_e: f64,
    pub g_t: f64,
    pub coupling_convention: CouplingConvention,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            g_e: DEFAULT_G,
            g_t: DEFAULT_G,
            coupling_convention: CouplingConvention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleConfig {
    #[serde(rename = "T2_single_ms")]
    pub t2_single_ms: f64,
}

impl Default for SingleConfig {
    fn default() -> Self {
        Self { t2_single_ms: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    #[serde(rename = "T2_ens_us")]
    pub t2_ens_us: f64,
    pub rho_per_cm3: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            t2_ens_us: 84.0,
            rho_per_cm3: 6.7e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Column {
        z_min_um: f64,
        z_max_um: f64,
        r_max_um: f64,
    },
    Cylinder {
        r_min_um: f64,
        r_max_um: f64,
        z_max_um: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionConfig {
    pub x_um: f64,
    pub y_um: f64,
    pub z_um: f64,
    #[serde(default = "plus_one")]
    pub s: f64,
}

fn plus_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    #[serde(rename = "T_s")]
    pub total_s: f64,
    /// Interrogation time; `T2 / 2` of the probe in use when absent.
    #[serde(rename = "tI_s")]
    pub interrogation_s: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            total_s: 1.0,
            interrogation_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub shape: Shape,
    pub standoff_um: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Column,
            standoff_um: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub shape: Shape,
    pub mode: SweepMode,
    /// Explicit standoffs; overrides the log grid below when present.
    pub standoffs_um: Option<Vec<f64>>,
    pub start_um: f64,
    pub stop_um: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Column,
            mode: SweepMode::Ratio,
            standoffs_um: None,
            start_um: 0.05,
            stop_um: 3.0,
            points: 30,
        }
    }
}

impl SweepConfig {
    pub fn standoffs(&self) -> Vec<f64> {
        match &self.standoffs_um {
            Some(xs) => xs.clone(),
            None => log_space(self.start_um, self.stop_um, self.points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McTargetKind {
    Single,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub shots: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub target: McTargetKind,
    /// Simulated target state, +1 or -1.
    pub s: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            shots: 1000,
            seed: 0,
            estimator: Estimator::Linearized,
            target: McTargetKind::Single,
            s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Option<Format>,
}

/// Column optimum at 1 um standoff used when the ensemble verifier has no
/// geometry configured.
pub const DEFAULT_VERIFY_COLUMN: GeometryConfig = GeometryConfig::Column {
    z_min_um: 1.0,
    z_max_um: 1.87,
    r_max_um: 0.93,
};

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry, CliError> {
        let g = match *self {
            GeometryConfig::Column {
                z_min_um,
                z_max_um,
                r_max_um,
            } => Geometry::column(z_min_um, z_max_um, r_max_um),
            GeometryConfig::Cylinder {
                r_min_um,
                r_max_um,
                z_max_um,
            } => Geometry::cylinder(r_min_um, r_max_um, z_max_um),
        };
        g.map_err(|e| CliError::Config(e.to_string()))
    }
}

impl PositionConfig {
    pub fn position(&self) -> Position {
        Position::new(self.x_um, self.y_um, self.z_um)
    }

    pub fn spin(&self) -> Result<TargetSpin, CliError> {
        TargetSpin::from_sign(self.s).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl RunConfig {
    /// Parses a JSON document, rejecting unknown keys.
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("constants.g_e", self.constants.g_e)?;
        positive("constants.g_t", self.constants.g_t)?;
        positive("single.T2_single_ms", self.single.t2_single_ms)?;
        positive("ensemble.T2_ens_us", self.ensemble.t2_ens_us)?;
        positive("ensemble.rho_per_cm3", self.ensemble.rho_per_cm3)?;
        positive("protocol.T_s", self.protocol.total_s)?;
        if let Some(t) = self.protocol.interrogation_s {
            positive("protocol.tI_s", t)?;
        }
        positive("optimize.standoff_um", self.optimize.standoff_um)?;
        match &self.sweep.standoffs_um {
            Some(xs) => {
                for &x in xs {
                    positive("sweep.standoffs_um", x)?;
                }
            }
            None => {
                positive("sweep.start_um", self.sweep.start_um)?;
                positive("sweep.stop_um", self.sweep.stop_um)?;
                if self.sweep.points == 0 {
                    return Err(CliError::Config("sweep.points must be at least 1".into()));
                }
            }
        }
        if let Some(g) = &self.geometry {
            g.build()?;
        }
        for p in &self.positions {
            p.spin()?;
        }
        TargetSpin::from_sign(self.mc.s).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants {
            g_probe: self.constants.g_e,
            g_target: self.constants.g_t,
            convention: self.constants.coupling_convention,
            ..PhysicalConstants::default()
        }
    }

    pub fn single_params(&self) -> Result<ProbeSpinParams, CliError> {
        ProbeSpinParams::new(self.single.t2_single_ms * 1e-3)
            .and_then(|p| p.with_g(self.constants.g_e))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ensemble_params(&self) -> Result<ProbeSpinParams, CliError> {
        ProbeSpinParams::new(self.ensemble.t2_ens_us * 1e-6)
            .and_then(|p| p.with_g(self.constants.g_e))
            .and_then(|p| p.with_density_per_cm3(self.ensemble.rho_per_cm3))
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

pub const PRESETS: [&str; 5] = ["fig4", "fig5", "fig7", "fig8", "fig9"];

/// Configuration overlay for a figure-reproduction preset.
pub fn preset(name: &str) -> Result<Value, CliError> {
    let v = match name {
        "fig4" => json!({"optimize": {"shape": "column", "standoff_um": 1.0}}),
        "fig7" => json!({"optimize": {"shape": "cylinder", "standoff_um": 1.0}}),
        "fig5" => json!({"sweep": {
            "shape": "column", "mode": "ratio", "start_um": 0.05, "stop_um": 3.0, "points": 30
        }}),
        "fig8" => json!({"sweep": {
            "shape": "cylinder", "mode": "ratio", "start_um": 0.02, "stop_um": 3.0, "points": 30
        }}),
        "fig9" => json!({
            "protocol": {"T_s": 1.0},
            "sweep": {"shape": "column", "mode": "absolute", "start_um": 0.05, "stop_um": 3.0, "points": 30}
        }),
        other => {
            return Err(CliError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(v)
}

/// Recursively overlays `top` onto `base`; objects merge key by key, any
/// other value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
