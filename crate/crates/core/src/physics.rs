//! Physical constants and the secular dipolar field of the target spin.
//!
//! Lengths are in micrometres at the API boundary and converted to SI
//! internally. The target spin sits at the origin with its quantisation axis
//! along `z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability, N/A^2 (CODATA 2018).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton, J/T (CODATA 2018).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant, J s (exact since 2019).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Default g-factor for both probe and target spins.
pub const DEFAULT_G: f64 = 2.0028;

/// Cubic micrometres per cubic metre.
pub const UM3_PER_M3: f64 = 1e18;
/// Probe densities quoted per cm^3 become per um^3 after this factor.
pub const PER_CM3_TO_PER_UM3: f64 = 1e-12;

/// Positions closer than this to the target spin are rejected.
pub const MIN_DISTANCE_UM: f64 = 1e-6;

/// How the dipolar prefactor `G` in front of the Pauli-operator coupling
/// `G/r^3 (3 (s1.r)(s2.r)/r^2 - s1.s2)` is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConvention {
    /// `G = mu0 g_e g_t mu_B^2 / (16 pi)`: spin-1/2 moments `g mu_B sigma / 2`.
    #[default]
    Pauli,
    /// `G = mu0 g_e g_t mu_B^2 / (4 pi)`: each Pauli operator carries the
    /// full moment `g mu_B`.
    FullMoment,
}

impl CouplingConvention {
    fn denominator(self) -> f64 {
        match self {
            CouplingConvention::FullMoment => 4.0 * std::f64::consts::PI,
            CouplingConvention::Pauli => 16.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub bohr_magneton: f64,
    /// Probe-spin g-factor.
    pub g_probe: f64,
    /// Target-spin g-factor.
    pub g_target: f64,
    pub hbar: f64,
    pub convention: CouplingConvention,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu0: MU0,
            bohr_magneton: BOHR_MAGNETON,
            g_probe: DEFAULT_G,
            g_target: DEFAULT_G,
            hbar: HBAR,
            convention: CouplingConvention::default(),
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu0", self.mu0),
            ("bohr_magneton", self.bohr_magneton),
            ("g_probe", self.g_probe),
            ("g_target", self.g_target),
            ("hbar", self.hbar),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Angular precession frequency of the probe per tesla, rad/(s T).
    pub fn probe_gyromagnetic_ratio(&self) -> f64 {
        self.g_probe * self.bohr_magneton / self.hbar
    }

    pub fn with_coupling_scale(mut self, factor: f64) -> Self {
        // g_target enters G linearly, so scaling it rescales G and nothing else.
        self.g_target *= factor;
        self
    }
}

/// Dipolar prefactor `G` in SI and in angular-frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipolarCoupling {
    /// J m^3
    pub joule_m3: f64,
    /// rad um^3 / s
    pub rad_um3_per_s: f64,
}

pub fn derive_g(constants: &PhysicalConstants) -> DipolarCoupling {
    let joule_m3 =
        constants.mu0 * constants.g_probe * constants.g_target * constants.bohr_magneton.powi(2)
            / constants.convention.denominator();
    DipolarCoupling {
        joule_m3,
        rad_um3_per_s: joule_m3 / constants.hbar * UM3_PER_M3,
    }
}

/// Probe-spin position relative to the target spin, in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn on_axis(z: f64) -> Self {
        Self::new(0.0, 0.0, z)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.x * factor, self.y * factor, self.z * factor)
    }

    fn check(&self) -> Result<f64> {
        let r = self.norm();
        if !r.is_finite() || r < MIN_DISTANCE_UM {
            return Err(Error::SingularPosition {
                x: self.x,
                y: self.y,
                z: self.z,
            });
        }
        Ok(r)
    }
}

/// Classical value of the target's `sigma_z` after the secular approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSpin {
    Up,
    Down,
}

impl TargetSpin {
    pub fn sign(self) -> f64 {
        match self {
            TargetSpin::Up => 1.0,
            TargetSpin::Down => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Result<Self> {
        if s == 1.0 {
            Ok(TargetSpin::Up)
        } else if s == -1.0 {
            Ok(TargetSpin::Down)
        } else {
            Err(Error::InvalidParameter(format!(
                "target spin state must be +1 or -1, got {s}"
            )))
        }
    }
}

/// `(3 z^2 / r^2 - 1) / r^3` in um^-3.
pub fn angular_factor(p: &Position) -> Result<f64> {
    let r = p.check()?;
    let r2 = r * r;
    Ok((3.0 * p.z * p.z / r2 - 1.0) / (r2 * r))
}

/// Numerator `3 z^2 / r^2 - 1` alone; zero on the magic-angle cone.
pub fn angular_numerator(p: &Position) -> Result<f64> {
    let r = p.check()?;
    Ok(3.0 * p.z * p.z / (r * r) - 1.0)
}

/// Static field, in tesla, equivalent to the target's secular coupling on a
/// probe at `p`: `B = 2 G / (g_e mu_B) * angular_factor * s`.
pub fn effective_field(p: &Position, s: TargetSpin, constants: &PhysicalConstants) -> Result<f64> {
    let af = angular_factor(p)? * UM3_PER_M3;
    let g = derive_g(constants);
    Ok(2.0 * g.joule_m3 / (constants.g_probe * constants.bohr_magneton) * af * s.sign())
}

/// Probe precession rate `2 G angular_factor s` in rad/s.
pub fn precession_rate(p: &Position, s: TargetSpin, constants: &PhysicalConstants) -> Result<f64> {
    Ok(2.0 * derive_g(constants).rad_um3_per_s * angular_factor(p)? * s.sign())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn coupling_matches_hand_calculation() {
        let c = PhysicalConstants::default();
        let g = derive_g(&c);
        // mu0 / (4 pi) = 1e-7 to 1e-10, and the Pauli form carries another 1/4
        let hand = 1e-7 * 2.0028 * 2.0028 * 9.274_010_078_3e-24_f64.powi(2) / 4.0;
        assert!(rel(g.joule_m3, hand) < 1e-9);
        assert!(rel(g.rad_um3_per_s, hand / 1.054_571_817e-34 * 1e18) < 1e-9);
        // two electrons 1 um apart: ~0.082 rad/s
        assert!((g.rad_um3_per_s - 0.0818).abs() < 1e-3);

        let full = derive_g(&PhysicalConstants {
            convention: CouplingConvention::FullMoment,
            ..c
        });
        assert!(rel(g.joule_m3 * 4.0, full.joule_m3) < 1e-15);
    }

    #[test]
    fn coupling_field_at_one_micron_is_sub_microtesla() {
        let c = PhysicalConstants::default();
        let g = derive_g(&c);
        let field = 2.0 * g.joule_m3 / (c.g_probe * c.bohr_magneton * 1e-18);
        assert!(field > 0.0 && field < 1e-6, "{field}");
    }

    #[test]
    fn coupling_is_linear_in_g_factors() {
        let c = PhysicalConstants::default();
        let zero = PhysicalConstants { g_target: 0.0, ..c };
        assert_eq!(derive_g(&zero).joule_m3, 0.0);
        let doubled = PhysicalConstants {
            g_probe: 2.0 * c.g_probe,
            ..c
        };
        assert!(rel(derive_g(&doubled).joule_m3, 2.0 * derive_g(&c).joule_m3) < 1e-15);
        assert!(zero.validate().is_err());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn angular_factor_reference_points() {
        assert_eq!(angular_factor(&Position::new(0.0, 0.0, 1.0)).unwrap(), 2.0);
        assert_eq!(angular_factor(&Position::new(1.0, 0.0, 0.0)).unwrap(), -1.0);
        let z = 1.0;
        let rho = (2.0f64).sqrt() * z; // z^2 = r^2 / 3
        let v = angular_factor(&Position::new(rho, 0.0, z)).unwrap();
        assert!(v.abs() < 1e-15, "{v}");
    }

    #[test]
    fn origin_is_singular() {
        assert!(matches!(
            angular_factor(&Position::new(0.0, 0.0, 0.0)),
            Err(Error::SingularPosition { .. })
        ));
        assert!(angular_factor(&Position::new(5e-7, 0.0, 0.0)).is_err());
        assert!(angular_factor(&Position::new(2e-6, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn on_axis_field() {
        let c = PhysicalConstants::default();
        let z = 0.7;
        let b = effective_field(&Position::on_axis(z), TargetSpin::Up, &c).unwrap();
        let g = derive_g(&c).joule_m3;
        let expect = 4.0 * g / (c.g_probe * c.bohr_magneton * (z * 1e-6f64).powi(3));
        assert!(rel(b, expect) < 1e-12);
        assert!(b > 0.0);
    }

    #[test]
    fn magic_angle_field_vanishes() {
        let c = PhysicalConstants::default();
        let p = Position::new(1.0, 1.0, 1.0); // 3 z^2 = r^2
        for s in [TargetSpin::Up, TargetSpin::Down] {
            assert!(effective_field(&p, s, &c).unwrap().abs() < 1e-25);
        }
    }

    #[test]
    fn precession_rate_matches_field() {
        let c = PhysicalConstants::default();
        let p = Position::new(0.3, -0.2, 0.9);
        let b = effective_field(&p, TargetSpin::Up, &c).unwrap();
        let w = precession_rate(&p, TargetSpin::Up, &c).unwrap();
        assert!(rel(b * c.probe_gyromagnetic_ratio(), w) < 1e-12);
    }

    #[test]
    fn target_spin_from_sign() {
        assert_eq!(TargetSpin::from_sign(-1.0).unwrap(), TargetSpin::Down);
        assert!(TargetSpin::from_sign(0.5).is_err());
    }

    fn position() -> impl Strategy<Value = Position> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_filter("away from origin", |(x, y, z)| x * x + y * y + z * z > 1e-2)
            .prop_map(|(x, y, z)| Position::new(x, y, z))
    }

    proptest! {
        #[test]
        fn scales_as_inverse_cube(p in position(), lambda in 0.01..100.0f64) {
            let a = angular_factor(&p).unwrap();
            let b = angular_factor(&p.scaled(lambda)).unwrap();
            prop_assert!((b * lambda.powi(3) - a).abs() <= 1e-12 / p.norm().powi(3));
        }

        #[test]
        fn symmetric_under_rotation_and_reflection(p in position(), phi in 0.0..std::f64::consts::TAU) {
            let a = angular_factor(&p).unwrap();
            let (s, c) = phi.sin_cos();
            let rotated = Position::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
            let reflected = Position::new(p.x, p.y, -p.z);
            let scale = 1.0 / p.norm().powi(3);
            prop_assert!((angular_factor(&rotated).unwrap() - a).abs() < 1e-12 * scale);
            prop_assert_eq!(angular_factor(&reflected).unwrap(), a);
        }

        #[test]
        fn sign_changes_across_magic_cone(r in 0.1..10.0f64, phi in 0.0..std::f64::consts::TAU) {
            let cone = (1.0f64 / 3.0).sqrt().acos();
            for (offset, expect) in [(-1e-9, 1.0), (1e-9, -1.0)] {
                let theta = cone + offset;
                let p = Position::new(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
                prop_assert_eq!(angular_factor(&p).unwrap().signum(), expect);
            }
        }

        #[test]
        fn field_is_odd_in_target_state(p in position()) {
            let c = PhysicalConstants::default();
            let up = effective_field(&p, TargetSpin::Up, &c).unwrap();
            let down = effective_field(&p, TargetSpin::Down, &c).unwrap();
            prop_assert_eq!(up, -down);
        }
    }
}
