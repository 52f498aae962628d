//! Monte Carlo simulation of the echo protocol as a check on the analytic
//! uncertainties.
//!
//! A probe is a two-level system in the basis `{|0>, |1>}` with `|0>` the
//! lower Zeeman level, so the free Hamiltonian is `diag(-w/2, +w/2)` and the
//! coherence `rho_01` winds as `exp(+i w t)`. Dephasing damps the
//! off-diagonals at rate `gamma`. Pulses are instantaneous and ideal.
//!
//! Random streams: experiment `e` under seed `k` keys a ChaCha8 generator
//! from `(k, e)`; probe `j` reads stream `j` of that key. Results therefore
//! do not depend on how experiments are scheduled across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::physics::{
    angular_factor, derive_g, PhysicalConstants, Position, TargetSpin, BOHR_MAGNETON, HBAR,
};
use crate::sensing::{
    delta_s_ensemble, delta_s_single, EchoProtocol, ProbeSpinParams, MAGIC_ANGLE_EPS,
};

pub const MIN_SHOTS: usize = 100;
/// Ensembles larger than this are represented by this many sampled probes.
pub const PROBE_CAP: usize = 1_000_000;
/// Phase bins used to aggregate probes once the cap is exceeded.
pub const PHASE_BINS: usize = 10_000;

const POSITION_STREAM_EXPERIMENT: u64 = u64::MAX;

type Matrix = [[Complex64; 2]; 2];

/// 2x2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Matrix,
}

impl QubitState {
    /// `|+> = (|0> + |1>) / sqrt(2)`.
    pub fn plus() -> Self {
        let h = Complex64::new(0.5, 0.0);
        Self {
            rho: [[h, h], [h, h]],
        }
    }

    pub fn from_matrix(rho: Matrix) -> Self {
        Self { rho }
    }

    pub fn matrix(&self) -> Matrix {
        self.rho
    }

    pub fn expectation_x(&self) -> f64 {
        2.0 * self.rho[0][1].re
    }

    pub fn expectation_y(&self) -> f64 {
        -2.0 * self.rho[0][1].im
    }

    pub fn expectation_z(&self) -> f64 {
        (self.rho[0][0] - self.rho[1][1]).re
    }

    /// Hermitian, unit trace and positive semidefinite within `tol`.
    pub fn validate(&self, tol: f64) -> std::result::Result<(), String> {
        let m = &self.rho;
        if (m[0][1] - m[1][0].conj()).norm() > tol
            || m[0][0].im.abs() > tol
            || m[1][1].im.abs() > tol
        {
            return Err("not Hermitian".into());
        }
        let trace = (m[0][0] + m[1][1]).re;
        if (trace - 1.0).abs() > tol {
            return Err(format!("trace {trace} != 1"));
        }
        let (a, d) = (m[0][0].re, m[1][1].re);
        let disc = ((a - d) * (a - d) / 4.0 + m[0][1].norm_sqr()).sqrt();
        let low = 0.5 * (a + d) - disc;
        if low < -tol {
            return Err(format!("negative eigenvalue {low}"));
        }
        Ok(())
    }

    /// Free precession at angular frequency `omega` with dephasing `gamma`.
    pub fn free_evolution(&self, omega: f64, gamma: f64, t: f64) -> Self {
        let factor = Complex64::from_polar((-gamma * t).exp(), omega * t);
        let mut rho = self.rho;
        rho[0][1] *= factor;
        rho[1][0] *= factor.conj();
        Self { rho }
    }

    /// Ideal pi rotation about x: `rho -> X rho X`.
    pub fn pi_pulse_x(&self) -> Self {
        let m = &self.rho;
        Self {
            rho: [[m[1][1], m[1][0]], [m[0][1], m[0][0]]],
        }
    }
}

/// States after preparation, the first half, the refocusing pulse and the
/// second half of an echo in which the field reverses at `t_I / 2`.
pub fn evolve_echo_steps(
    field: f64,
    interrogation_time: f64,
    params: &ProbeSpinParams,
) -> [QubitState; 4] {
    let omega = params.g() * BOHR_MAGNETON / HBAR * field;
    let half = 0.5 * interrogation_time;
    let gamma = params.gamma();
    let prepared = QubitState::plus();
    let first = prepared.free_evolution(omega, gamma, half);
    let flipped = first.pi_pulse_x();
    let last = flipped.free_evolution(-omega, gamma, half);
    [prepared, first, flipped, last]
}

pub fn evolve_echo(field: f64, interrogation_time: f64, params: &ProbeSpinParams) -> QubitState {
    evolve_echo_steps(field, interrogation_time, params)[3]
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator for stream `stream` of experiment `experiment`.
pub fn stream_rng(seed: u64, experiment: u64, stream: u64) -> ChaCha8Rng {
    let words = [
        splitmix(seed),
        splitmix(experiment),
        splitmix(seed ^ 0x5851_F42D_4C95_7F2D),
        splitmix(experiment ^ 0x1405_7B7E_F767_814F),
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn plus_probability(state: &QubitState) -> f64 {
    ((1.0 + state.expectation_y()) / 2.0).clamp(0.0, 1.0)
}

fn draw_sigma_y<R: Rng>(p_plus: f64, shots: usize, rng: &mut R) -> impl Iterator<Item = i8> + '_ {
    (0..shots).map(move |_| if rng.gen::<f64>() < p_plus { 1 } else { -1 })
}

/// Projective `sigma_y` readouts of `shots` copies of `state`.
pub fn sample_sigma_y(state: &QubitState, shots: usize, seed: u64) -> Vec<i8> {
    let mut rng = stream_rng(seed, 0, 0);
    draw_sigma_y(plus_probability(state), shots, &mut rng).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `s = m / slope`.
    #[default]
    Linearized,
    /// Inverts the mean per-probe `sin` response; for large phases.
    Arcsine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Simulated experiments, each lasting the full budget `T`.
    pub shots: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl McConfig {
    pub fn new(shots: usize, seed: u64, estimator: Estimator) -> Result<Self> {
        if shots < MIN_SHOTS {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_SHOTS} simulated experiments are required, got {shots}"
            )));
        }
        Ok(Self {
            shots,
            seed,
            estimator,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum McTarget {
    /// One probe; outcomes are drawn shot by shot.
    Single(Position),
    /// Homogeneous ensemble with probes placed uniformly at random.
    Ensemble(Geometry),
    /// Explicit probe positions; the analytic slope is the discrete sum.
    Probes(Vec<Position>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub empirical_mean: f64,
    pub empirical_std_of_estimate: f64,
    /// Standard error of the empirical standard deviation.
    pub std_standard_error: f64,
    pub mean_standard_error: f64,
    pub analytic_delta: f64,
    pub z_score: f64,
    pub shots: usize,
    pub repetitions: u64,
    pub probes: u64,
    pub estimator: Estimator,
}

impl McReport {
    pub fn pass(&self) -> bool {
        self.z_score < 3.0
    }
}

/// A group of `count` probes sharing one readout probability.
#[derive(Debug, Clone, Copy)]
struct ProbeGroup {
    count: u64,
    p_plus: f64,
}

struct Layout {
    groups: Vec<ProbeGroup>,
    probes: u64,
    /// d<M_y>/ds per repetition.
    slope: f64,
    analytic_delta: f64,
    shot_by_shot: bool,
}

fn echo_group(
    rate: f64,
    count: u64,
    protocol: &EchoProtocol,
    params: &ProbeSpinParams,
) -> ProbeGroup {
    let field = rate * HBAR / (params.g() * BOHR_MAGNETON);
    let state = evolve_echo(field, protocol.interrogation_time(), params);
    ProbeGroup {
        count,
        p_plus: plus_probability(&state),
    }
}

fn build_layout(
    target: &McTarget,
    s: TargetSpin,
    protocol: &EchoProtocol,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
    seed: u64,
) -> Result<Layout> {
    let coupling = 2.0 * derive_g(constants).rad_um3_per_s;
    let (t_i, total) = (protocol.interrogation_time(), protocol.total_time());
    let decay = (-t_i * params.gamma()).exp();
    match target {
        McTarget::Single(p) => {
            let analytic = delta_s_single(p, t_i, total, params, constants)?;
            let rate = coupling * angular_factor(p)? * s.sign();
            Ok(Layout {
                groups: vec![echo_group(rate, 1, protocol, params)],
                probes: 1,
                slope: analytic.signal,
                analytic_delta: analytic.delta,
                shot_by_shot: true,
            })
        }
        McTarget::Probes(positions) => {
            if positions.is_empty() {
                return Err(Error::ZeroSignal);
            }
            let mut groups = Vec::with_capacity(positions.len());
            let mut slope = 0.0;
            for p in positions {
                let af = angular_factor(p)?;
                slope += decay * coupling * af * t_i;
                groups.push(echo_group(coupling * af * s.sign(), 1, protocol, params));
            }
            let l = positions.len() as f64;
            if slope.abs() < MAGIC_ANGLE_EPS * coupling * t_i {
                return Err(Error::ZeroSignal);
            }
            Ok(Layout {
                groups,
                probes: positions.len() as u64,
                slope,
                analytic_delta: l.sqrt() / (slope.abs() * protocol.repetitions_continuous().sqrt()),
                shot_by_shot: false,
            })
        }
        McTarget::Ensemble(geom) => {
            let analytic = delta_s_ensemble(geom, t_i, total, params, constants)?;
            let density = params.density().unwrap_or_default();
            let probes = (density * geom.volume()).round() as u64;
            if probes == 0 {
                return Err(Error::ZeroSignal);
            }
            let sampled = probes.min(PROBE_CAP as u64) as usize;
            let mut rng = stream_rng(seed, POSITION_STREAM_EXPERIMENT, 0);
            let rates: Vec<f64> = (0..sampled)
                .map(|_| {
                    let p = geom.uniform_point([rng.gen(), rng.gen(), rng.gen()]);
                    angular_factor(&p).map(|af| coupling * af * s.sign())
                })
                .collect::<Result<_>>()?;
            let groups = if probes as usize == sampled {
                rates
                    .iter()
                    .map(|&w| echo_group(w, 1, protocol, params))
                    .collect()
            } else {
                bin_rates(&rates, probes, protocol, params)
            };
            Ok(Layout {
                groups,
                probes,
                slope: analytic.signal,
                analytic_delta: analytic.delta,
                shot_by_shot: false,
            })
        }
    }
}

/// Aggregates sampled precession rates into equal-width bins, each standing
/// for its share of the full probe count.
fn bin_rates(
    rates: &[f64],
    probes: u64,
    protocol: &EchoProtocol,
    params: &ProbeSpinParams,
) -> Vec<ProbeGroup> {
    let (lo, hi) = rates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });
    let width = ((hi - lo) / PHASE_BINS as f64).max(f64::MIN_POSITIVE);
    let mut sums = vec![(0usize, 0.0f64); PHASE_BINS];
    for &w in rates {
        let k = (((w - lo) / width) as usize).min(PHASE_BINS - 1);
        sums[k].0 += 1;
        sums[k].1 += w;
    }
    let weight = probes as f64 / rates.len() as f64;
    sums.into_iter()
        .filter(|(n, _)| *n > 0)
        .map(|(n, sum)| {
            echo_group(
                sum / n as f64,
                (n as f64 * weight).round() as u64,
                protocol,
                params,
            )
        })
        .filter(|g| g.count > 0)
        .collect()
}

impl Layout {
    /// Summed `M_y` over all repetitions of experiment `e`.
    fn experiment_total(&self, seed: u64, e: u64, repetitions: u64) -> f64 {
        if self.shot_by_shot {
            let mut rng = stream_rng(seed, e, 0);
            return draw_sigma_y(self.groups[0].p_plus, repetitions as usize, &mut rng)
                .map(f64::from)
                .sum();
        }
        let mut total = 0i64;
        for (j, g) in self.groups.iter().enumerate() {
            let trials = g.count * repetitions;
            let mut rng = stream_rng(seed, e, j as u64);
            let ups = Binomial::new(trials, g.p_plus)
                .expect("probability in [0, 1]")
                .sample(&mut rng);
            total += 2 * ups as i64 - trials as i64;
        }
        total as f64
    }

    fn estimate(&self, mean_signal: f64, estimator: Estimator, decay: f64) -> f64 {
        match estimator {
            Estimator::Linearized => mean_signal / self.slope,
            Estimator::Arcsine => {
                let scale = self.probes as f64 * decay;
                let phase_per_s = self.slope / scale;
                (mean_signal / scale).clamp(-1.0, 1.0).asin() / phase_per_s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// One estimate of `s` per simulated experiment, in experiment order.
    pub estimates: Vec<f64>,
    pub analytic_delta: f64,
    pub repetitions: u64,
    pub probes: u64,
}

/// Runs `mc.shots` independent experiments, each with
/// `floor(T / t_I)` echo repetitions, and returns the estimates of `s`.
pub fn simulate_estimates(
    target: &McTarget,
    s: TargetSpin,
    protocol: &EchoProtocol,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
    mc: &McConfig,
) -> Result<Simulation> {
    McConfig::new(mc.shots, mc.seed, mc.estimator)?;
    let layout = build_layout(target, s, protocol, params, constants, mc.seed)?;
    let repetitions = protocol.repetitions();
    let decay = (-protocol.interrogation_time() * params.gamma()).exp();
    let estimates = (0..mc.shots as u64)
        .into_par_iter()
        .map(|e| {
            let mean = layout.experiment_total(mc.seed, e, repetitions) / repetitions as f64;
            layout.estimate(mean, mc.estimator, decay)
        })
        .collect();
    Ok(Simulation {
        estimates,
        analytic_delta: layout.analytic_delta,
        repetitions,
        probes: layout.probes,
    })
}

pub fn verify_delta_s(
    target: &McTarget,
    s: TargetSpin,
    protocol: &EchoProtocol,
    params: &ProbeSpinParams,
    constants: &PhysicalConstants,
    mc: &McConfig,
) -> Result<McReport> {
    let sim = simulate_estimates(target, s, protocol, params, constants, mc)?;
    let n = sim.estimates.len() as f64;
    let mean = sim.estimates.iter().sum::<f64>() / n;
    let var = sim
        .estimates
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let std = var.sqrt();
    let std_se = std / (2.0 * (n - 1.0)).sqrt();
    Ok(McReport {
        empirical_mean: mean,
        empirical_std_of_estimate: std,
        std_standard_error: std_se,
        mean_standard_error: std / n.sqrt(),
        analytic_delta: sim.analytic_delta,
        z_score: (std - sim.analytic_delta).abs() / std_se,
        shots: mc.shots,
        repetitions: sim.repetitions,
        probes: sim.probes,
        estimator: mc.estimator,
    })
}
