//! Command-line front end for the spin-probe sensitivity library.
//!
//! Each subcommand maps a [`RunConfig`] to a data-only output (CSV or JSON).
//! Output is a pure function of the configuration, so identical inputs give
//! byte-identical files.

pub mod config;
pub mod output;

use std::fmt;

use serde::Serialize;
use serde_json::Value;
use spinprobe::montecarlo::{verify_delta_s, McConfig, McReport, McTarget};
use spinprobe::optimize::{
    optimize_geometry, ratio_crossover, ratio_monotone_within, standoff_at_delta, sweep_standoff,
    SweepMode, SweepRow,
};
use spinprobe::physics::{angular_factor, effective_field};
use spinprobe::sensing::{delta_s_ensemble, delta_s_single, min_delta_s_single};
use spinprobe::{EchoProtocol, Error, ProbeSpinParams, SensitivityResult, Shape, TargetSpin};

pub use config::{Format, RunConfig};
use config::{McTargetKind, DEFAULT_VERIFY_COLUMN};
use output::{csv_number, Table};

/// Target uncertainty used for the absolute-sweep summary.
pub const SIDECAR_DELTA_TARGET: f64 = 10.0;
/// Standoff window over which the sidecar reports ratio monotonicity.
pub const MONOTONE_WINDOW_UM: (f64, f64) = (0.3, 3.0);

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Physics(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Physics(m) => write!(f, "physics error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_physical() {
            CliError::Physics(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Field,
    Sensitivity,
    Optimize,
    Sweep,
    Verify,
}

impl Command {
    pub fn default_format(self) -> Format {
        match self {
            Command::Field | Command::Sweep => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Rendered result of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub body: String,
    /// Sweep summary, written next to the main output.
    pub sidecar: Option<String>,
    /// Non-zero when a result was produced but did not converge.
    pub exit_code: i32,
}

impl RunOutput {
    fn ok(body: String) -> Self {
        Self {
            body,
            sidecar: None,
            exit_code: 0,
        }
    }
}

pub fn run(command: Command, cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    match command {
        Command::Field => cmd_field(cfg, format),
        Command::Sensitivity => cmd_sensitivity(cfg, format),
        Command::Optimize => cmd_optimize(cfg, format),
        Command::Sweep => cmd_sweep(cfg, format),
        Command::Verify => cmd_verify(cfg, format),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Fields weaker than this are reported as exactly zero.
pub const FIELD_ZERO_T: f64 = 1e-18;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FieldRow {
    pub x_um: f64,
    pub y_um: f64,
    pub z_um: f64,
    pub s: f64,
    pub angular_factor: f64,
    #[serde(rename = "B_eff_T")]
    pub b_eff_t: f64,
}

pub fn field_rows(cfg: &RunConfig) -> Result<Vec<FieldRow>, CliError> {
    if cfg.positions.is_empty() {
        return Err(CliError::Config("positions list is empty".into()));
    }
    let constants = cfg.constants();
    cfg.positions
        .iter()
        .map(|p| {
            let pos = p.position();
            let b = effective_field(&pos, p.spin()?, &constants)?;
            Ok(FieldRow {
                x_um: p.x_um,
                y_um: p.y_um,
                z_um: p.z_um,
                s: p.s,
                angular_factor: angular_factor(&pos)?,
                b_eff_t: if b.abs() < FIELD_ZERO_T { 0.0 } else { b },
            })
        })
        .collect()
}

fn cmd_field(cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    let rows = field_rows(cfg)?;
    let body = match format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut t = Table::new(&["x_um", "y_um", "z_um", "angular_factor", "B_eff_T"]);
            for r in &rows {
                t.push(vec![
                    csv_number(r.x_um),
                    csv_number(r.y_um),
                    csv_number(r.z_um),
                    csv_number(r.angular_factor),
                    csv_number(r.b_eff_t),
                ]);
            }
            t.render()
        }
    };
    Ok(RunOutput::ok(body))
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub mode: &'static str,
    pub delta: f64,
    #[serde(rename = "tI_used_s")]
    pub interrogation_time_s: f64,
    #[serde(rename = "T_s")]
    pub total_time_s: f64,
    pub signal: f64,
    pub noise: f64,
    pub repetitions: f64,
    pub max_phase_rad: f64,
    pub small_angle_violated: bool,
    pub warnings: Vec<String>,
    /// Lone probe at the region's closest point, at its own optimal `tI`.
    pub single_probe_companion: Option<Companion>,
    /// `companion delta / delta`; above one favours the ensemble.
    pub ratio: Option<f64>,
    pub inputs: RunConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct Companion {
    pub x_um: f64,
    pub y_um: f64,
    pub z_um: f64,
    pub delta: f64,
    #[serde(rename = "tI_used_s")]
    pub interrogation_time_s: f64,
}

fn interrogation_time(cfg: &RunConfig, params: &ProbeSpinParams) -> f64 {
    cfg.protocol
        .interrogation_s
        .unwrap_or_else(|| params.optimal_interrogation_time())
}

pub fn sensitivity_report(cfg: &RunConfig) -> Result<SensitivityReport, CliError> {
    let constants = cfg.constants();
    let total = cfg.protocol.total_s;
    let (mode, result, companion): (_, SensitivityResult, _) = match &cfg.geometry {
        Some(g) => {
            let geom = g.build()?;
            let ens = cfg.ensemble_params()?;
            let single = cfg.single_params()?;
            let r = delta_s_ensemble(
                &geom,
                interrogation_time(cfg, &ens),
                total,
                &ens,
                &constants,
            )?;
            let p = geom.single_probe_reference();
            let lone = min_delta_s_single(&p, total, &single, &constants)?;
            let c = Companion {
                x_um: p.x,
                y_um: p.y,
                z_um: p.z,
                delta: lone.delta,
                interrogation_time_s: lone.interrogation_time,
            };
            ("ensemble", r, Some(c))
        }
        None => {
            let p = cfg.positions.first().ok_or_else(|| {
                CliError::Config("either geometry or a position is required".into())
            })?;
            let single = cfg.single_params()?;
            let r = delta_s_single(
                &p.position(),
                interrogation_time(cfg, &single),
                total,
                &single,
                &constants,
            )?;
            ("single", r, None)
        }
    };
    Ok(SensitivityReport {
        mode,
        delta: result.delta,
        interrogation_time_s: result.interrogation_time,
        total_time_s: result.total_time,
        signal: result.signal,
        noise: result.noise,
        repetitions: result.repetitions,
        max_phase_rad: result.max_phase,
        small_angle_violated: result.small_angle_violated,
        warnings: result.warnings(),
        ratio: companion.as_ref().map(|c| c.delta / result.delta),
        single_probe_companion: companion,
        inputs: cfg.clone(),
    })
}

fn cmd_sensitivity(cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    let report = sensitivity_report(cfg)?;
    let body = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut t = Table::new(&["delta", "tI_used_s", "T_s", "max_phase_rad", "ratio"]);
            t.push(vec![
                csv_number(report.delta),
                csv_number(report.interrogation_time_s),
                csv_number(report.total_time_s),
                csv_number(report.max_phase_rad),
                report.ratio.map(csv_number).unwrap_or_default(),
            ]);
            t.render()
        }
    };
    Ok(RunOutput::ok(body))
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub shape: Shape,
    pub standoff_um: f64,
    pub best_r_max_um: f64,
    pub best_z_max_um: f64,
    pub best_ratio: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub simplex_extent_um: (f64, f64),
    pub grid_stage_best: GridBest,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridBest {
    pub r_max_um: f64,
    pub z_max_um: f64,
    pub ratio: f64,
}

pub fn optimize_report(cfg: &RunConfig) -> Result<OptimizeReport, CliError> {
    let r = optimize_geometry(
        cfg.optimize.shape,
        cfg.optimize.standoff_um,
        &cfg.single_params()?,
        &cfg.ensemble_params()?,
        &cfg.constants(),
    )?;
    Ok(OptimizeReport {
        shape: r.shape,
        standoff_um: r.standoff,
        best_r_max_um: r.best_r_max,
        best_z_max_um: r.best_z_max,
        best_ratio: r.best_ratio,
        evaluations: r.evaluations,
        iterations: r.iterations,
        converged: r.converged,
        simplex_extent_um: r.simplex_extent,
        grid_stage_best: GridBest {
            r_max_um: r.grid_stage_best.r_max,
            z_max_um: r.grid_stage_best.z_max,
            ratio: r.grid_stage_best.ratio,
        },
    })
}

fn cmd_optimize(cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    let r = optimize_report(cfg)?;
    let body = match format {
        Format::Json => to_json(&r)?,
        Format::Csv => {
            let mut t = Table::new(&[
                "standoff_um",
                "opt_r_max_um",
                "opt_z_max_um",
                "ratio",
                "converged",
            ]);
            t.push(vec![
                csv_number(r.standoff_um),
                csv_number(r.best_r_max_um),
                csv_number(r.best_z_max_um),
                csv_number(r.best_ratio),
                r.converged.to_string(),
            ]);
            t.render()
        }
    };
    let exit_code = if r.converged { 0 } else { 4 };
    Ok(RunOutput {
        body,
        sidecar: None,
        exit_code,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub shape: Shape,
    pub mode: SweepMode,
    /// Standoff where the ratio crosses one, if inside the grid.
    pub crossover_um: Option<f64>,
    pub ratio_monotone_0p3_to_3_um: bool,
    pub failed_standoffs_um: Vec<f64>,
    pub unconverged_standoffs_um: Vec<f64>,
    /// Absolute mode: standoff where `delta_s_ens` reaches 10.
    pub delta_s_10_standoff_um: Option<f64>,
    /// Absolute mode: budget needed for `delta_s = 1` at that standoff.
    pub detection_time_s: Option<f64>,
}

pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    Ok(sweep_standoff(
        cfg.sweep.shape,
        &cfg.sweep.standoffs(),
        cfg.sweep.mode,
        cfg.protocol.total_s,
        &cfg.single_params()?,
        &cfg.ensemble_params()?,
        &cfg.constants(),
    )?)
}

pub fn sweep_summary(cfg: &RunConfig, rows: &[SweepRow]) -> SweepSummary {
    let absolute = cfg.sweep.mode == SweepMode::Absolute;
    let at_10 = if absolute {
        standoff_at_delta(rows, SIDECAR_DELTA_TARGET)
    } else {
        None
    };
    SweepSummary {
        shape: cfg.sweep.shape,
        mode: cfg.sweep.mode,
        crossover_um: ratio_crossover(rows),
        ratio_monotone_0p3_to_3_um: ratio_monotone_within(
            rows,
            MONOTONE_WINDOW_UM.0,
            MONOTONE_WINDOW_UM.1,
        ),
        failed_standoffs_um: rows
            .iter()
            .filter(|r| !r.ok())
            .map(|r| r.standoff)
            .collect(),
        unconverged_standoffs_um: rows
            .iter()
            .filter(|r| r.ok() && !r.converged)
            .map(|r| r.standoff)
            .collect(),
        delta_s_10_standoff_um: at_10,
        // delta scales as 1/sqrt(T): reaching 1 from 10 needs 100 T.
        detection_time_s: at_10.map(|_| cfg.protocol.total_s * SIDECAR_DELTA_TARGET.powi(2)),
    }
}

#[derive(Serialize)]
struct SweepJson<'a> {
    rows: &'a [SweepRow],
    summary: &'a SweepSummary,
}

fn cmd_sweep(cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    let rows = sweep_rows(cfg)?;
    let summary = sweep_summary(cfg, &rows);
    let absolute = cfg.sweep.mode == SweepMode::Absolute;
    let body = match format {
        Format::Json => to_json(&SweepJson {
            rows: &rows,
            summary: &summary,
        })?,
        Format::Csv => {
            let mut header = vec!["standoff_um", "opt_r_max_um", "opt_z_max_um", "ratio"];
            if absolute {
                header.push("delta_s_ens");
            }
            let mut t = Table::new(&header);
            for r in &rows {
                let mut cells = vec![
                    csv_number(r.standoff),
                    csv_number(r.optimal_r_max),
                    csv_number(r.optimal_z_max),
                    csv_number(r.ratio),
                ];
                if absolute {
                    cells.push(csv_number(r.delta_s_ens.unwrap_or(f64::NAN)));
                }
                t.push(cells);
            }
            t.render()
        }
    };
    let exit_code = if rows.iter().any(|r| !r.ok() || !r.converged) {
        4
    } else {
        0
    };
    Ok(RunOutput {
        body,
        sidecar: Some(to_json(&summary)?),
        exit_code,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub target: McTargetKind,
    pub pass: bool,
    #[serde(rename = "tI_used_s")]
    pub interrogation_time_s: f64,
    #[serde(rename = "T_s")]
    pub total_time_s: f64,
    pub seed: u64,
    pub report: McReport,
}

pub fn verify_report(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let constants = cfg.constants();
    let (target, params) = match cfg.mc.target {
        McTargetKind::Single => {
            let p = cfg.positions.first().ok_or_else(|| {
                CliError::Config("single-probe verification needs a position".into())
            })?;
            (McTarget::Single(p.position()), cfg.single_params()?)
        }
        McTargetKind::Ensemble => {
            let g = cfg.geometry.unwrap_or(DEFAULT_VERIFY_COLUMN).build()?;
            (McTarget::Ensemble(g), cfg.ensemble_params()?)
        }
    };
    let protocol = EchoProtocol::new(interrogation_time(cfg, &params), cfg.protocol.total_s)?;
    let mc = McConfig::new(cfg.mc.shots, cfg.mc.seed, cfg.mc.estimator)?;
    let spin = TargetSpin::from_sign(cfg.mc.s)?;
    let report = verify_delta_s(&target, spin, &protocol, &params, &constants, &mc)?;
    Ok(VerifyReport {
        target: cfg.mc.target,
        pass: report.pass(),
        interrogation_time_s: protocol.interrogation_time(),
        total_time_s: protocol.total_time(),
        seed: cfg.mc.seed,
        report,
    })
}

fn cmd_verify(cfg: &RunConfig, format: Format) -> Result<RunOutput, CliError> {
    let v = verify_report(cfg)?;
    let body = match format {
        Format::Json => to_json(&v)?,
        Format::Csv => {
            let mut t = Table::new(&[
                "empirical_std",
                "std_standard_error",
                "analytic_delta",
                "z_score",
                "shots",
                "pass",
            ]);
            t.push(vec![
                csv_number(v.report.empirical_std_of_estimate),
                csv_number(v.report.std_standard_error),
                csv_number(v.report.analytic_delta),
                csv_number(v.report.z_score),
                v.report.shots.to_string(),
                v.pass.to_string(),
            ]);
            t.render()
        }
    };
    Ok(RunOutput::ok(body))
}

/// Builds the effective configuration: preset, then the config document,
/// then flag overrides.
pub fn resolve_config(
    preset: Option<&str>,
    document: Option<Value>,
    seed: Option<u64>,
) -> Result<RunConfig, CliError> {
    let mut merged = Value::Object(Default::default());
    if let Some(name) = preset {
        config::merge(&mut merged, config::preset(name)?);
    }
    if let Some(doc) = document {
        if !doc.is_object() {
            return Err(CliError::Config(
                "configuration must be a JSON object".into(),
            ));
        }
        config::merge(&mut merged, doc);
    }
    let mut cfg = RunConfig::from_value(merged)?;
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    Ok(cfg)
}
