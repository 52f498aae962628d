//! Geometry optimisation of the ensemble-versus-single sensitivity ratio and
//! standoff sweeps built on it.
//!
//! The search runs in `(ln r_max, ln z_max)`: a coarse log grid followed by a
//! Nelder-Mead refinement started from the best grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Shape};
use crate::physics::PhysicalConstants;
use crate::sensing::{min_delta_s_ensemble, sensitivity_ratio, ProbeSpinParams};

pub const GRID_POINTS: usize = 60;
/// The grid spans `[standoff / GRID_SPAN, standoff * GRID_SPAN]` on both axes.
pub const GRID_SPAN: f64 = 100.0;
pub const MAX_ITERATIONS: usize = 500;
/// Convergence threshold on the simplex extent, um, per coordinate.
pub const SIMPLEX_TOLERANCE_UM: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub r_max: f64,
    pub z_max: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub shape: Shape,
    pub standoff: f64,
    pub best_r_max: f64,
    pub best_z_max: f64,
    pub best_ratio: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Final simplex extent in um along `r_max` and `z_max`.
    pub simplex_extent: (f64, f64),
    pub grid_stage_best: GridPoint,
}

impl OptimizationResult {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::from_shape(self.shape, self.standoff, self.best_r_max, self.best_z_max)
    }
}

/// Objective on the log plane: the sensitivity ratio, or `None` where the
/// geometry is invalid or carries no signal.
struct Objective<'a> {
    shape: Shape,
    standoff: f64,
    single: &'a ProbeSpinParams,
    ensemble: &'a ProbeSpinParams,
    constants: &'a PhysicalConstants,
}

impl Objective<'_> {
    fn ratio(&self, r_max: f64, z_max: f64) -> Option<f64> {
        let geom = Geometry::from_shape(self.shape, self.standoff, r_max, z_max).ok()?;
        if geom.volume() <= 0.0 {
            return None;
        }
        sensitivity_ratio(&geom, self.single, self.ensemble, 1.0, self.constants)
            .ok()
            .filter(|r| r.is_finite())
    }

    /// Nelder-Mead minimises; infeasible points sit at `+inf`.
    fn cost(&self, x: [f64; 2]) -> f64 {
        self.ratio(x[0].exp(), x[1].exp())
            .map_or(f64::INFINITY, |r| -r)
    }
}

fn log_grid(standoff: f64) -> Vec<f64> {
    let (lo, hi) = ((standoff / GRID_SPAN).ln(), (standoff * GRID_SPAN).ln());
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| (lo + step * i as f64).exp())
        .collect()
}

pub fn optimize_geometry(
    shape: Shape,
    standoff: f64,
    single: &ProbeSpinParams,
    ensemble: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<OptimizationResult> {
    if !(standoff.is_finite() && standoff > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "standoff must be positive, got {standoff} um"
        )));
    }
    constants.validate()?;
    let objective = Objective {
        shape,
        standoff,
        single,
        ensemble,
        constants,
    };

    let axis = log_grid(standoff);
    // Rows are r_max, columns z_max; reduction order is fixed so ties resolve
    // to the lexicographically smallest (r_max, z_max).
    let rows: Vec<Option<GridPoint>> = axis
        .par_iter()
        .map(|&r_max| {
            let mut best: Option<GridPoint> = None;
            for &z_max in &axis {
                if let Some(ratio) = objective.ratio(r_max, z_max) {
                    if best.is_none_or(|b| ratio > b.ratio) {
                        best = Some(GridPoint {
                            r_max,
                            z_max,
                            ratio,
                        });
                    }
                }
            }
            best
        })
        .collect();
    let grid_best = rows
        .into_iter()
        .flatten()
        .fold(None::<GridPoint>, |acc, p| match acc {
            Some(a) if a.ratio >= p.ratio => Some(a),
            _ => Some(p),
        })
        .ok_or(Error::NoFeasiblePoint)?;
    let mut evaluations = GRID_POINTS * GRID_POINTS;

    let step = (GRID_SPAN * GRID_SPAN).ln() / (GRID_POINTS - 1) as f64;
    let start = [grid_best.r_max.ln(), grid_best.z_max.ln()];
    let outcome = nelder_mead(|x| objective.cost(x), start, step);
    evaluations += outcome.evaluations;

    let (mut r_max, mut z_max, mut ratio) = (grid_best.r_max, grid_best.z_max, grid_best.ratio);
    if -outcome.value > ratio {
        r_max = outcome.point[0].exp();
        z_max = outcome.point[1].exp();
        ratio = -outcome.value;
    }
    Ok(OptimizationResult {
        shape,
        standoff,
        best_r_max: r_max,
        best_z_max: z_max,
        best_ratio: ratio,
        evaluations,
        iterations: outcome.iterations,
        converged: outcome.converged,
        simplex_extent: outcome.extent,
        grid_stage_best: grid_best,
    })
}

struct SimplexOutcome {
    point: [f64; 2],
    value: f64,
    evaluations: usize,
    iterations: usize,
    converged: bool,
    extent: (f64, f64),
}

/// Extent of the simplex in physical units (the coordinates are logs).
fn physical_extent(simplex: &[([f64; 2], f64); 3]) -> (f64, f64) {
    let span = |k: usize| {
        let vals = simplex.iter().map(|(x, _)| x[k].exp());
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        hi - lo
    };
    (span(0), span(1))
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2) on a 2-D problem.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, start: [f64; 2], step: f64) -> SimplexOutcome {
    let mut evaluations = 0usize;
    let mut eval = |x: [f64; 2]| {
        evaluations += 1;
        f(x)
    };
    let mut simplex = [
        (start, 0.0),
        ([start[0] + step, start[1]], 0.0),
        ([start[0], start[1] + step], 0.0),
    ];
    for v in simplex.iter_mut() {
        v.1 = eval(v.0);
    }
    let lerp =
        |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let extent = physical_extent(&simplex);
        if extent.0 < SIMPLEX_TOLERANCE_UM && extent.1 < SIMPLEX_TOLERANCE_UM {
            converged = true;
            break;
        }
        iterations += 1;
        let [best, second, worst] = simplex;
        let centroid = lerp(best.0, second.0, 0.5);
        let reflected = lerp(centroid, worst.0, -1.0);
        let fr = eval(reflected);
        if fr < best.1 {
            let expanded = lerp(centroid, worst.0, -2.0);
            let fe = eval(expanded);
            simplex[2] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < second.1 {
            simplex[2] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst.1 {
            let c = lerp(centroid, reflected, 0.5);
            (c, eval(c))
        } else {
            let c = lerp(centroid, worst.0, 0.5);
            (c, eval(c))
        };
        if fc < worst.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }
        for v in simplex.iter_mut().skip(1) {
            v.0 = lerp(best.0, v.0, 0.5);
            v.1 = eval(v.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    SimplexOutcome {
        point: simplex[0].0,
        value: simplex[0].1,
        evaluations,
        iterations,
        converged,
        extent: physical_extent(&simplex),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Ratio,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub standoff: f64,
    pub optimal_r_max: f64,
    pub optimal_z_max: f64,
    pub ratio: f64,
    /// Optimal-geometry ensemble uncertainty for the sweep's budget
    /// (absolute mode only).
    pub delta_s_ens: Option<f64>,
    pub converged: bool,
    pub failure: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    shape: Shape,
    standoff: f64,
    mode: SweepMode,
    total_time: f64,
    single: &ProbeSpinParams,
    ensemble: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> SweepRow {
    let run = || -> Result<SweepRow> {
        let opt = optimize_geometry(shape, standoff, single, ensemble, constants)?;
        let delta_s_ens = match mode {
            SweepMode::Ratio => None,
            SweepMode::Absolute => {
                Some(min_delta_s_ensemble(&opt.geometry()?, total_time, ensemble, constants)?.delta)
            }
        };
        Ok(SweepRow {
            standoff,
            optimal_r_max: opt.best_r_max,
            optimal_z_max: opt.best_z_max,
            ratio: opt.best_ratio,
            delta_s_ens,
            converged: opt.converged,
            failure: None,
        })
    };
    run().unwrap_or_else(|e| SweepRow {
        standoff,
        optimal_r_max: f64::NAN,
        optimal_z_max: f64::NAN,
        ratio: f64::NAN,
        delta_s_ens: None,
        converged: false,
        failure: Some(e.to_string()),
    })
}

/// Optimises the geometry at every standoff. Rows that fail are kept and
/// marked; rows are returned in input order.
#[allow(clippy::too_many_arguments)]
pub fn sweep_standoff(
    shape: Shape,
    standoffs: &[f64],
    mode: SweepMode,
    total_time: f64,
    single: &ProbeSpinParams,
    ensemble: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<Vec<SweepRow>> {
    if standoffs.is_empty() {
        return Err(Error::InvalidParameter("standoff list is empty".into()));
    }
    if standoffs.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParameter("standoffs must be positive".into()));
    }
    if standoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "standoffs must be strictly ascending".into(),
        ));
    }
    if mode == SweepMode::Absolute && !(total_time.is_finite() && total_time > 0.0) {
        return Err(Error::InvalidProtocol(format!(
            "total time must be positive, got {total_time} s"
        )));
    }
    Ok(standoffs
        .par_iter()
        .map(|&s| sweep_row(shape, s, mode, total_time, single, ensemble, constants))
        .collect())
}

/// `n` log-spaced points from `start` to `stop` inclusive.
pub fn log_space(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// First standoff where the ratio crosses one, interpolating the ratio
/// linearly in `ln(standoff)` between the bracketing rows.
pub fn ratio_crossover(rows: &[SweepRow]) -> Option<f64> {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.ok()).collect();
    ok.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (a.ratio - 1.0, b.ratio - 1.0);
        if fa == 0.0 {
            return Some(a.standoff);
        }
        if fa * fb > 0.0 {
            return None;
        }
        let t = fa / (fa - fb);
        Some((a.standoff.ln() + t * (b.standoff.ln() - a.standoff.ln())).exp())
    })
}

/// Standoff at which the optimal ensemble uncertainty equals `target`,
/// interpolating `ln delta` linearly in `ln standoff`.
pub fn standoff_at_delta(rows: &[SweepRow], target: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ok())
        .filter_map(|r| r.delta_s_ens.map(|d| (r.standoff.ln(), d.ln())))
        .collect();
    let lt = target.ln();
    pts.windows(2).find_map(|w| {
        let ((xa, ya), (xb, yb)) = (w[0], w[1]);
        if (ya - lt) * (yb - lt) > 0.0 || ya == yb {
            return None;
        }
        Some((xa + (lt - ya) / (yb - ya) * (xb - xa)).exp())
    })
}

/// Whether ratios are non-decreasing over rows whose standoff lies in
/// `[lo, hi]`.
pub fn ratio_monotone_within(rows: &[SweepRow], lo: f64, hi: f64) -> bool {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.ok() && r.standoff >= lo && r.standoff <= hi)
        .map(|r| r.ratio)
        .collect();
    vals.windows(2).all(|w| w[1] >= w[0])
}
