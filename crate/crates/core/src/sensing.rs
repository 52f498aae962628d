//! Analytic uncertainties of spin-echo estimators in the small-phase limit.
//!
//! Every estimator has the form `delta = noise / (|signal| sqrt(N))` with
//! `N = T / t_I` repetitions, `signal` the slope of the per-shot expectation
//! with respect to the estimated parameter, and `noise` the per-shot standard
//! deviation of the observable at zero signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::physics::{
    angular_factor, angular_numerator, derive_g, PhysicalConstants, Position, BOHR_MAGNETON,
    DEFAULT_G, HBAR, PER_CM3_TO_PER_UM3,
};

/// Above this accumulated phase (rad) the linearised estimators are flagged.
pub const SMALL_ANGLE_LIMIT_RAD: f64 = 0.1;

/// Below this `|3 z^2 / r^2 - 1|` a position counts as on the magic cone.
pub const MAGIC_ANGLE_EPS: f64 = 1e-12;

/// Below this `|region integral|` an ensemble carries no signal.
pub const ZERO_SIGNAL_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpinParams {
    t2: f64,
    g: f64,
    density: Option<f64>,
}

impl ProbeSpinParams {
    /// `t2` in seconds.
    pub fn new(t2: f64) -> Result<Self> {
        if !(t2.is_finite() && t2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coherence time must be positive, got {t2} s"
            )));
        }
        Ok(Self {
            t2,
            g: DEFAULT_G,
            density: None,
        })
    }

    pub fn with_g(mut self, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "g-factor must be positive, got {g}"
            )));
        }
        self.g = g;
        Ok(self)
    }

    /// Probe spins per um^3.
    pub fn with_density(mut self, per_um3: f64) -> Result<Self> {
        if !(per_um3.is_finite() && per_um3 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density must be positive, got {per_um3} um^-3"
            )));
        }
        self.density = Some(per_um3);
        Ok(self)
    }

    pub fn with_density_per_cm3(self, per_cm3: f64) -> Result<Self> {
        self.with_density(per_cm3 * PER_CM3_TO_PER_UM3)
    }

    /// Single NV centre: T2 = 2 ms.
    pub fn nv_single() -> Self {
        Self::new(2e-3).expect("valid")
    }

    /// Dense NV ensemble: T2 = 84 us, 6.7e16 cm^-3.
    pub fn nv_ensemble() -> Self {
        Self::new(84e-6)
            .and_then(|p| p.with_density_per_cm3(6.7e16))
            .expect("valid")
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.t2
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn density(&self) -> Option<f64> {
        self.density
    }

    fn require_density(&self) -> Result<f64> {
        self.density.ok_or_else(|| {
            Error::InvalidParameter("ensemble estimate needs a probe density".into())
        })
    }

    /// Interrogation time minimising every estimator: `T2 / 2`.
    pub fn optimal_interrogation_time(&self) -> f64 {
        0.5 * self.t2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoProtocol {
    interrogation_time: f64,
    total_time: f64,
}

impl EchoProtocol {
    pub fn new(interrogation_time: f64, total_time: f64) -> Result<Self> {
        if !(interrogation_time.is_finite() && interrogation_time > 0.0) {
            return Err(Error::InvalidProtocol(format!(
                "interrogation time must be positive, got {interrogation_time} s"
            )));
        }
        if !(total_time.is_finite() && total_time >= interrogation_time) {
            return Err(Error::InvalidProtocol(format!(
                "total time {total_time} s is shorter than interrogation time {interrogation_time} s"
            )));
        }
        Ok(Self {
            interrogation_time,
            total_time,
        })
    }

    pub fn optimal(params: &ProbeSpinParams, total_time: f64) -> Result<Self> {
        Self::new(params.optimal_interrogation_time(), total_time)
    }

    pub fn interrogation_time(&self) -> f64 {
        self.interrogation_time
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Whole echo sequences that fit in the budget.
    pub fn repetitions(&self) -> u64 {
        ((self.total_time / self.interrogation_time).floor() as u64).max(1)
    }

    /// `T / t_I` without rounding, as used by the analytic estimators.
    pub fn repetitions_continuous(&self) -> f64 {
        self.total_time / self.interrogation_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// Uncertainty: dimensionless for spin-state estimates, tesla for fields.
    pub delta: f64,
    pub interrogation_time: f64,
    pub total_time: f64,
    /// d<observable>/d(parameter) for one shot.
    pub signal: f64,
    /// Standard deviation of the observable for one shot.
    pub noise: f64,
    pub repetitions: f64,
    /// Largest phase any probe accumulates, rad.
    pub max_phase: f64,
    pub small_angle_violated: bool,
}

impl SensitivityResult {
    fn new(protocol: EchoProtocol, signal: f64, noise: f64, max_phase: f64) -> Self {
        let repetitions = protocol.repetitions_continuous();
        Self {
            delta: noise / (signal.abs() * repetitions.sqrt()),
            interrogation_time: protocol.interrogation_time,
            total_time: protocol.total_time,
            signal,
            noise,
            repetitions,
            max_phase,
            small_angle_violated: max_phase > SMALL_ANGLE_LIMIT_RAD,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.small_angle_violated {
            out.push(format!(
                "accumulated phase {:.3} rad exceeds {SMALL_ANGLE_LIMIT_RAD} rad; linearised estimate is unreliable",
                self.max_phase
            ));
        }
        out
    }
}

/// `<sigma_y> = exp(-gamma t_I) sin(g mu_B B t_I / hbar)` after the echo.
pub fn echo_expectation(field: f64, interrogation_time: f64, params: &ProbeSpinParams) -> f64 {
    let phase = params.g * BOHR_MAGNETON / HBAR * field * interrogation_time;
    (-interrogation_time * params.gamma()).exp() * phase.sin()
}

/// Uncertainty of a global AC field amplitude, small-field limit.
pub fn delta_b(
    interrogation_time: f64,
    total_time: f64,
    params: &ProbeSpinParams,
) -> Result<SensitivityResult> {
    let protocol = EchoProtocol::new(interrogation_time, total_time)?;
    let gyro = params.g * BOHR_MAGNETON / HBAR;
    let signal = (-interrogation_time * params.gamma()).exp() * gyro * interrogation_time;
    Ok(SensitivityResult::new(protocol, signal, 1.0, 0.0))
}

/// Uncertainty of the target state `s` read out by one probe at `p`.
pub fn delta_s_single(
    p: &Position,
    interrogation_time: f64,
    total_time: f64,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<SensitivityResult> {
    let protocol = EchoProtocol::new(interrogation_time, total_time)?;
    if angular_numerator(p)?.abs() < MAGIC_ANGLE_EPS {
        return Err(Error::MagicAngle);
    }
    let rate = 2.0 * derive_g(constants).rad_um3_per_s * angular_factor(p)?;
    let signal = (-interrogation_time * params.gamma()).exp() * rate * interrogation_time;
    let max_phase = rate.abs() * interrogation_time;
    Ok(SensitivityResult::new(protocol, signal, 1.0, max_phase))
}

/// Uncertainty of `s` from the summed readout `M_y` of a homogeneous
/// ensemble filling `geom`, with projection noise `<dM dM> = L = rho V`.
pub fn delta_s_ensemble(
    geom: &Geometry,
    interrogation_time: f64,
    total_time: f64,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<SensitivityResult> {
    geom.validate()?;
    let protocol = EchoProtocol::new(interrogation_time, total_time)?;
    let density = params.require_density()?;
    let integral = geom.integral();
    if integral.abs() < ZERO_SIGNAL_EPS {
        return Err(Error::ZeroSignal);
    }
    let coupling = 2.0 * derive_g(constants).rad_um3_per_s;
    let signal = (-interrogation_time * params.gamma()).exp()
        * coupling
        * density
        * integral
        * interrogation_time;
    let probes = density * geom.volume();
    let max_phase = coupling * geom.max_abs_angular_factor() * interrogation_time;
    Ok(SensitivityResult::new(
        protocol,
        signal,
        probes.sqrt(),
        max_phase,
    ))
}

/// Single-probe uncertainty at `t_I = T2 / 2`.
pub fn min_delta_s_single(
    p: &Position,
    total_time: f64,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<SensitivityResult> {
    delta_s_single(
        p,
        params.optimal_interrogation_time(),
        total_time,
        params,
        constants,
    )
}

/// Ensemble uncertainty at `t_I = T2 / 2`.
pub fn min_delta_s_ensemble(
    geom: &Geometry,
    total_time: f64,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
) -> Result<SensitivityResult> {
    delta_s_ensemble(
        geom,
        params.optimal_interrogation_time(),
        total_time,
        params,
        constants,
    )
}

/// `delta_s_single_min / delta_s_ens_min`, with the lone probe placed at the
/// region's closest point. Values above one favour the ensemble. Independent
/// of `G` and `T`.
pub fn sensitivity_ratio(
    geom: &Geometry,
    single: &ProbeSpinParams,
    ensemble: &ProbeSpinParams,
    total_time: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let reference = geom.single_probe_reference();
    let lone = min_delta_s_single(&reference, total_time, single, constants)?;
    let many = min_delta_s_ensemble(geom, total_time, ensemble, constants)?;
    Ok(lone.delta / many.delta)
}

/// Minimises `delta(t_I)` numerically: a log-spaced scan of `points` samples
/// over `[lo, hi]` followed by golden-section refinement around the best
/// sample. Failed evaluations count as `+inf`.
pub fn numeric_optimal_interrogation_time<F>(delta: F, lo: f64, hi: f64, points: usize) -> f64
where
    F: Fn(f64) -> Result<f64>,
{
    let eval = |t: f64| delta(t).unwrap_or(f64::INFINITY);
    let points = points.max(3);
    let step = (hi / lo).ln() / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo * (step * i as f64).exp()).collect();
    let best = (0..points)
        .min_by(|&a, &b| eval(grid[a]).total_cmp(&eval(grid[b])))
        .unwrap_or(0);
    let (mut a, mut b) = (
        grid[best.saturating_sub(1)].ln(),
        grid[(best + 1).min(points - 1)].ln(),
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| eval(x.exp());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b)).exp()
}
