//! Statistical agreement between simulated echo experiments and the analytic
//! uncertainties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinprobe::montecarlo::{
    evolve_echo, evolve_echo_steps, sample_sigma_y, simulate_estimates, verify_delta_s, Estimator,
    McConfig, McTarget,
};
use spinprobe::sensing::{echo_expectation, EchoProtocol, ProbeSpinParams};
use spinprobe::{Error, Geometry, PhysicalConstants, Position, TargetSpin};

fn single_setup() -> (McTarget, EchoProtocol, ProbeSpinParams) {
    let params = ProbeSpinParams::nv_single();
    let protocol = EchoProtocol::optimal(&params, 1.0).unwrap();
    (McTarget::Single(Position::on_axis(1.0)), protocol, params)
}

#[test]
fn echo_matches_closed_form_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let t2 = 10f64.powf(rng.gen_range(-6.0..-1.0));
        let params = ProbeSpinParams::new(t2).unwrap();
        let t = t2 * rng.gen_range(0.01..5.0);
        let gyro = params.g() * spinprobe::physics::BOHR_MAGNETON / spinprobe::physics::HBAR;
        let field = rng.gen_range(-3.0..3.0) / (gyro * t);
        let steps = evolve_echo_steps(field, t, &params);
        for st in steps {
            st.validate(1e-12).unwrap();
        }
        let y = steps[3].expectation_y();
        assert!((y - echo_expectation(field, t, &params)).abs() < 1e-12);
    }
}

#[test]
fn zero_mean_readout_concentrates() {
    let st = evolve_echo(0.0, 1e-3, &ProbeSpinParams::nv_single());
    let outcomes = sample_sigma_y(&st, 1_000_000, 5);
    let mean = outcomes.iter().map(|&o| f64::from(o)).sum::<f64>() / 1e6;
    assert!(mean.abs() < 4.0 / 1e3, "{mean}");
}

#[test]
fn single_probe_spread_matches_analytic() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(1000, 2024, Estimator::Linearized).unwrap();
    let r = verify_delta_s(&target, TargetSpin::Up, &protocol, &params, &c, &mc).unwrap();
    println!("{r:?}");
    assert_eq!(r.repetitions, 1000);
    let rel = (r.empirical_std_of_estimate - r.analytic_delta).abs() / r.analytic_delta;
    assert!(rel < 0.05, "{rel}");
    assert!(r.pass());
}

#[test]
fn ensemble_spread_matches_analytic() {
    let params = ProbeSpinParams::nv_ensemble();
    let protocol = EchoProtocol::optimal(&params, 1.0).unwrap();
    let geom = Geometry::column(1.0, 1.87, 0.93).unwrap();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(300, 7, Estimator::Linearized).unwrap();
    let r = verify_delta_s(
        &McTarget::Ensemble(geom),
        TargetSpin::Up,
        &protocol,
        &params,
        &c,
        &mc,
    )
    .unwrap();
    println!("{r:?}");
    let rel = (r.empirical_std_of_estimate - r.analytic_delta).abs() / r.analytic_delta;
    assert!(rel < 0.10, "{rel}");
    assert!(r.pass());
}

#[test]
fn estimates_are_unbiased_for_both_states() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(3000, 99, Estimator::Linearized).unwrap();
    for s in [TargetSpin::Up, TargetSpin::Down] {
        let r = verify_delta_s(&target, s, &protocol, &params, &c, &mc).unwrap();
        assert!(
            (r.empirical_mean - s.sign()).abs() < 3.0 * r.mean_standard_error,
            "{s:?}: {r:?}"
        );
    }
}

#[test]
fn arcsine_estimator_agrees_in_small_phase_regime() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let lin = McConfig::new(300, 1, Estimator::Linearized).unwrap();
    let asin = McConfig {
        estimator: Estimator::Arcsine,
        ..lin
    };
    let a = simulate_estimates(&target, TargetSpin::Up, &protocol, &params, &c, &lin).unwrap();
    let b = simulate_estimates(&target, TargetSpin::Up, &protocol, &params, &c, &asin).unwrap();
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        // same draws; asin(m) differs from m by m^3/6
        assert!((x - y).abs() <= 0.2 * x.abs().max(1.0), "{x} {y}");
    }
}

#[test]
fn convergence_over_shot_counts() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    for shots in [300, 1000, 3000] {
        let passes = [1u64, 2, 3]
            .iter()
            .filter(|&&seed| {
                let mc = McConfig::new(shots, seed, Estimator::Linearized).unwrap();
                verify_delta_s(&target, TargetSpin::Up, &protocol, &params, &c, &mc)
                    .unwrap()
                    .z_score
                    < 3.0
            })
            .count();
        assert!(passes >= 2, "{shots} shots: {passes}/3");
    }
}

#[test]
fn error_bars_shrink_with_shots() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let se = |shots| {
        let mc = McConfig::new(shots, 8, Estimator::Linearized).unwrap();
        verify_delta_s(&target, TargetSpin::Up, &protocol, &params, &c, &mc)
            .unwrap()
            .std_standard_error
    };
    let ratio = se(100) / se(3000);
    assert!((ratio / 30f64.sqrt() - 1.0).abs() < 0.25, "{ratio}");
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn lone_ensemble_probe_reproduces_single_probe() {
    let (target, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let one = McTarget::Probes(vec![Position::on_axis(1.0)]);
    let a = McConfig::new(1000, 11, Estimator::Linearized).unwrap();
    let b = McConfig::new(1000, 12, Estimator::Linearized).unwrap();
    let x = simulate_estimates(&target, TargetSpin::Up, &protocol, &params, &c, &a).unwrap();
    let y = simulate_estimates(&one, TargetSpin::Up, &protocol, &params, &c, &b).unwrap();
    assert!((x.analytic_delta - y.analytic_delta).abs() < 1e-9 * x.analytic_delta);
    let d = ks_statistic(&x.estimates, &y.estimates);
    let critical = 1.628 * (2.0 / 1000.0f64).sqrt();
    assert!(d < critical, "KS {d} >= {critical}");
}

#[test]
fn singular_targets_propagate() {
    let (_, protocol, params) = single_setup();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(100, 0, Estimator::Linearized).unwrap();
    let cone = McTarget::Single(Position::new(2f64.sqrt(), 0.0, 1.0));
    assert_eq!(
        verify_delta_s(&cone, TargetSpin::Up, &protocol, &params, &c, &mc),
        Err(Error::MagicAngle)
    );
    let ens = ProbeSpinParams::nv_ensemble();
    let flat = McTarget::Ensemble(Geometry::column(1.0, 1.0, 1.0).unwrap());
    let p = EchoProtocol::optimal(&ens, 1.0).unwrap();
    assert_eq!(
        verify_delta_s(&flat, TargetSpin::Up, &p, &ens, &c, &mc),
        Err(Error::ZeroSignal)
    );
}

#[test]
fn simulation_is_deterministic() {
    let params = ProbeSpinParams::nv_ensemble();
    let protocol = EchoProtocol::optimal(&params, 0.1).unwrap();
    let geom = Geometry::cylinder(0.5, 0.9, 0.3).unwrap();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(100, 77, Estimator::Linearized).unwrap();
    let t = McTarget::Ensemble(geom);
    let a = simulate_estimates(&t, TargetSpin::Down, &protocol, &params, &c, &mc).unwrap();
    let b = simulate_estimates(&t, TargetSpin::Down, &protocol, &params, &c, &mc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn capped_ensemble_uses_phase_bins() {
    // 6.7e4 um^-3 * 20 um^3 > 1e6 probes
    let params = ProbeSpinParams::nv_ensemble();
    let protocol = EchoProtocol::optimal(&params, 0.05).unwrap();
    let geom = Geometry::column(1.0, 3.5, 1.6).unwrap();
    let c = PhysicalConstants::default();
    let mc = McConfig::new(200, 5, Estimator::Linearized).unwrap();
    let r = verify_delta_s(
        &McTarget::Ensemble(geom),
        TargetSpin::Up,
        &protocol,
        &params,
        &c,
        &mc,
    )
    .unwrap();
    assert!(r.probes > 1_000_000);
    assert!(r.z_score < 4.0, "{r:?}");
}
