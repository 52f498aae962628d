//! Probe-ensemble regions and the region integral of the dipolar angular
//! factor `(3 z^2 / r^2 - 1) / r^3`.
//!
//! Both regions are axially symmetric about the target's quantisation axis,
//! so the azimuthal integral contributes a factor `2 pi` and everything else
//! lives on the `(rho, z)` half-plane, `rho` being the cylindrical radius.
//! In that plane the integrand `rho (2 z^2 - rho^2) / (rho^2 + z^2)^(5/2)` has
//! the mixed antiderivative `z / sqrt(rho^2 + z^2)`, which gives closed forms
//! for any annular slab.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::Position;
use crate::quadrature::{integrate_rect, CubatureOptions, Rect};

/// Pillar on the symmetry axis: `z_min <= z <= z_max`, radius `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnGeometry {
    pub z_min: f64,
    pub z_max: f64,
    pub r_max: f64,
}

/// Annular cylinder around the target: `r_min <= rho <= r_max`,
/// `-z_max <= z <= z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderGeometry {
    pub r_min: f64,
    pub r_max: f64,
    /// Half-height.
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Geometry {
    Column(ColumnGeometry),
    Cylinder(CylinderGeometry),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Column,
    Cylinder,
}

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn non_negative_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

impl ColumnGeometry {
    /// Degenerate columns (`z_max == z_min` or `r_max == 0`) are accepted and
    /// have zero volume and zero integral.
    pub fn new(z_min: f64, z_max: f64, r_max: f64) -> Result<Self> {
        positive_finite("z_min", z_min)?;
        non_negative_finite("r_max", r_max)?;
        if !(z_max.is_finite() && z_max >= z_min) {
            return Err(Error::InvalidGeometry(format!(
                "z_max ({z_max}) must not be below z_min ({z_min})"
            )));
        }
        Ok(Self {
            z_min,
            z_max,
            r_max,
        })
    }

    pub fn volume(&self) -> f64 {
        PI * self.r_max * self.r_max * (self.z_max - self.z_min)
    }

    pub fn integral(&self) -> f64 {
        // The rho = 0 edge contributes W(0, z) = 1 at both ends and cancels,
        // leaving slab_edge(r_max, z_min, z_max), rearranged so that thin or
        // distant columns do not lose digits to cancellation.
        let (r, z0, z1) = (self.r_max, self.z_min, self.z_max);
        let (h0, h1) = (r.hypot(z0), r.hypot(z1));
        if r == 0.0 {
            return 0.0;
        }
        2.0 * PI * r * r * (z1 - z0) * (z1 + z0) / (h0 * h1 * (z1 * h0 + z0 * h1))
    }
}

impl CylinderGeometry {
    pub fn new(r_min: f64, r_max: f64, z_max: f64) -> Result<Self> {
        positive_finite("r_min", r_min)?;
        non_negative_finite("z_max", z_max)?;
        if !(r_max.is_finite() && r_max >= r_min) {
            return Err(Error::InvalidGeometry(format!(
                "r_max ({r_max}) must not be below r_min ({r_min})"
            )));
        }
        Ok(Self {
            r_min,
            r_max,
            z_max,
        })
    }

    pub fn volume(&self) -> f64 {
        2.0 * PI * self.z_max * (self.r_max * self.r_max - self.r_min * self.r_min)
    }

    /// Always `<= 0`: the equatorial band dominates.
    pub fn integral(&self) -> f64 {
        let (r0, r1, h) = (self.r_min, self.r_max, self.z_max);
        // 4 pi h (1/a - 1/b) with the difference taken exactly.
        let (a, b) = (r1.hypot(h), r0.hypot(h));
        4.0 * PI * h * (r0 - r1) * (r0 + r1) / (a * b * (a + b))
    }
}

/// `z / sqrt(rho^2 + z^2)`; mixed antiderivative of the half-plane integrand.
pub fn dipolar_antiderivative(rho: f64, z: f64) -> f64 {
    z / rho.hypot(z)
}

/// `2 pi [W(rho, z1) - W(rho, z0)]`: the contribution of the outer radial edge
/// `rho` of a slab spanning `z0..z1`. The integral over an annulus
/// `rho_a..rho_b` is `slab_edge(rho_b) - slab_edge(rho_a)`.
pub fn slab_edge(rho: f64, z0: f64, z1: f64) -> f64 {
    2.0 * PI * (dipolar_antiderivative(rho, z1) - dipolar_antiderivative(rho, z0))
}

pub fn column_integral_closed(geom: &ColumnGeometry) -> f64 {
    geom.integral()
}

pub fn cylinder_integral_closed(geom: &CylinderGeometry) -> f64 {
    geom.integral()
}

impl Geometry {
    pub fn column(z_min: f64, z_max: f64, r_max: f64) -> Result<Self> {
        ColumnGeometry::new(z_min, z_max, r_max).map(Geometry::Column)
    }

    pub fn cylinder(r_min: f64, r_max: f64, z_max: f64) -> Result<Self> {
        CylinderGeometry::new(r_min, r_max, z_max).map(Geometry::Cylinder)
    }

    /// Builds a region of `shape` from its standoff and the two free extents.
    pub fn from_shape(shape: Shape, standoff: f64, r_max: f64, z_max: f64) -> Result<Self> {
        match shape {
            Shape::Column => Self::column(standoff, z_max, r_max),
            Shape::Cylinder => Self::cylinder(standoff, r_max, z_max),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Geometry::Column(_) => Shape::Column,
            Geometry::Cylinder(_) => Shape::Cylinder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Column(c) => ColumnGeometry::new(c.z_min, c.z_max, c.r_max).map(|_| ()),
            Geometry::Cylinder(c) => CylinderGeometry::new(c.r_min, c.r_max, c.z_max).map(|_| ()),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Geometry::Column(c) => c.volume(),
            Geometry::Cylinder(c) => c.volume(),
        }
    }

    /// Closed-form region integral of the angular factor (dimensionless).
    pub fn integral(&self) -> f64 {
        match self {
            Geometry::Column(c) => c.integral(),
            Geometry::Cylinder(c) => c.integral(),
        }
    }

    /// Closest approach of the region to the target spin.
    pub fn standoff(&self) -> f64 {
        match self {
            Geometry::Column(c) => c.z_min,
            Geometry::Cylinder(c) => c.r_min,
        }
    }

    /// `(r_max, z_max)`, the two extents the optimiser varies.
    pub fn free_extents(&self) -> (f64, f64) {
        match self {
            Geometry::Column(c) => (c.r_max, c.z_max),
            Geometry::Cylinder(c) => (c.r_max, c.z_max),
        }
    }

    /// Where a lone probe at the same standoff would sit.
    pub fn single_probe_reference(&self) -> Position {
        match self {
            Geometry::Column(c) => Position::on_axis(c.z_min),
            Geometry::Cylinder(c) => Position::new(c.r_min, 0.0, 0.0),
        }
    }

    /// Supremum of `|angular_factor|` over the region. Attained at the
    /// closest point in both shapes: on axis at `z_min` (value `2/z_min^3`)
    /// and on the equator at `r_min` (value `1/r_min^3`).
    pub fn max_abs_angular_factor(&self) -> f64 {
        match self {
            Geometry::Column(c) => 2.0 / c.z_min.powi(3),
            Geometry::Cylinder(c) => 1.0 / c.r_min.powi(3),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Geometry::Column(c) => Geometry::Column(ColumnGeometry {
                z_min: c.z_min * factor,
                z_max: c.z_max * factor,
                r_max: c.r_max * factor,
            }),
            Geometry::Cylinder(c) => Geometry::Cylinder(CylinderGeometry {
                r_min: c.r_min * factor,
                r_max: c.r_max * factor,
                z_max: c.z_max * factor,
            }),
        }
    }

    /// Maps three uniform deviates in `[0, 1)` to a point uniformly
    /// distributed in the region.
    pub fn uniform_point(&self, u: [f64; 3]) -> Position {
        let phi = 2.0 * PI * u[2];
        let (rho, z) = match *self {
            Geometry::Column(c) => (c.r_max * u[0].sqrt(), c.z_min + (c.z_max - c.z_min) * u[1]),
            Geometry::Cylinder(c) => {
                let (a, b) = (c.r_min * c.r_min, c.r_max * c.r_max);
                ((a + (b - a) * u[0]).sqrt(), c.z_max * (2.0 * u[1] - 1.0))
            }
        };
        Position::new(rho * phi.cos(), rho * phi.sin(), z)
    }

    fn half_plane(&self) -> Rect {
        match *self {
            Geometry::Column(c) => Rect::new((0.0, c.r_max), (c.z_min, c.z_max)),
            Geometry::Cylinder(c) => Rect::new((c.r_min, c.r_max), (-c.z_max, c.z_max)),
        }
    }
}

/// Integrand on the `(rho, z)` half-plane with the azimuth already integrated.
fn half_plane_integrand(rho: f64, z: f64) -> f64 {
    let r2 = rho * rho + z * z;
    2.0 * PI * rho * (2.0 * z * z - rho * rho) / (r2 * r2 * r2.sqrt())
}

/// Whether `2 z^2 - rho^2` changes sign inside the panel.
fn straddles_magic_cone(rect: &Rect) -> bool {
    let z2_max = rect.y0.powi(2).max(rect.y1.powi(2));
    let z2_min = if rect.y0 < 0.0 && rect.y1 > 0.0 {
        0.0
    } else {
        rect.y0.powi(2).min(rect.y1.powi(2))
    };
    let hi = 2.0 * z2_max - rect.x0 * rect.x0;
    let lo = 2.0 * z2_min - rect.x1 * rect.x1;
    lo < 0.0 && hi > 0.0
}

pub const QUADRATURE_PANEL_BUDGET: usize = 1_000_000;

/// Adaptive numerical region integral, independent of the closed forms.
/// Degenerate regions return zero.
pub fn region_integral_quadrature(geom: &Geometry, rel_tol: f64) -> Result<f64> {
    if !(1e-12..=1e-3).contains(&rel_tol) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance must lie in [1e-12, 1e-3], got {rel_tol}"
        )));
    }
    geom.validate()?;
    let rect = geom.half_plane();
    if rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
        return Ok(0.0);
    }
    let options = CubatureOptions {
        // The embedded-rule estimate is pessimistic; a margin keeps the
        // delivered error well inside the requested tolerance.
        rel_tol: rel_tol * 0.1,
        max_panels: QUADRATURE_PANEL_BUDGET,
    };
    let weight = |r: &Rect| if straddles_magic_cone(r) { 4.0 } else { 1.0 };
    integrate_rect(half_plane_integrand, rect, options, weight).map(|c| c.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / b.abs()
        }
    }

    #[test]
    fn volumes() {
        let col = Geometry::column(1.0, 2.0, 1.0).unwrap();
        assert!(rel(col.volume(), PI) < 1e-15);
        let cyl = Geometry::cylinder(1.0, 1.77, 0.58).unwrap();
        let expect = 2.0 * PI * 0.58 * (1.77f64 * 1.77 - 1.0);
        assert!(rel(cyl.volume(), expect) < 1e-15);
        assert!((cyl.volume() - 7.773).abs() < 1e-3);
        assert_eq!(Geometry::cylinder(1.0, 1.0, 0.58).unwrap().volume(), 0.0);
    }

    #[test]
    fn column_closed_form_reference() {
        let c = ColumnGeometry::new(1.0, 2.0, 1.0).unwrap();
        let expect = 2.0 * PI * (2.0 / 5f64.sqrt() - 1.0 / 2f64.sqrt());
        assert!(rel(column_integral_closed(&c), expect) < 1e-15);
        assert!((column_integral_closed(&c) - 1.17697).abs() < 1e-5);
        // frozen from the quadrature oracle at rel_tol 1e-12
        let q = region_integral_quadrature(&Geometry::Column(c), 1e-12).unwrap();
        assert!(rel(q, expect) < 1e-11, "{q}");
    }

    #[test]
    fn cylinder_closed_form_reference() {
        let c = CylinderGeometry::new(1.0, 1.77, 0.58).unwrap();
        let j = cylinder_integral_closed(&c);
        assert!(j < 0.0);
        assert!((j + 2.392).abs() < 1e-3, "{j}");
        let q = region_integral_quadrature(&Geometry::Cylinder(c), 1e-12).unwrap();
        assert!(rel(q, j) < 1e-11, "{q} vs {j}");
    }

    #[test]
    fn degenerate_regions_integrate_to_zero() {
        let thin = ColumnGeometry::new(1.0, 1.0, 3.0).unwrap();
        assert_eq!(thin.integral(), 0.0);
        assert_eq!(thin.volume(), 0.0);
        let needle = ColumnGeometry::new(1.0, 4.0, 0.0).unwrap();
        assert_eq!(needle.integral(), 0.0);
        let shell = CylinderGeometry::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(shell.integral(), 0.0);
        for g in [
            Geometry::Column(thin),
            Geometry::Column(needle),
            Geometry::Cylinder(shell),
        ] {
            assert_eq!(region_integral_quadrature(&g, 1e-9).unwrap(), 0.0);
        }
        let tiny = ColumnGeometry::new(1.0, 2.0, 1e-7).unwrap();
        assert!(tiny.integral().abs() < 1e-12);
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(Geometry::column(0.0, 1.0, 1.0).is_err());
        assert!(Geometry::column(2.0, 1.0, 1.0).is_err());
        assert!(Geometry::column(1.0, 2.0, -1.0).is_err());
        assert!(Geometry::cylinder(1.0, 0.5, 1.0).is_err());
        assert!(Geometry::cylinder(-1.0, 0.5, 1.0).is_err());
        assert!(Geometry::cylinder(1.0, 2.0, f64::NAN).is_err());
    }

    #[test]
    fn tolerance_range_enforced() {
        let g = Geometry::column(1.0, 2.0, 1.0).unwrap();
        assert!(region_integral_quadrature(&g, 1e-13).is_err());
        assert!(region_integral_quadrature(&g, 1e-2).is_err());
    }

    #[test]
    fn sign_changing_column_converges() {
        let g = Geometry::column(1.0, 1.001, 100.0).unwrap();
        let q = region_integral_quadrature(&g, 1e-9).unwrap();
        assert!(rel(q, g.integral()) < 1e-9, "{q} vs {}", g.integral());
    }

    #[test]
    fn tall_cylinder_matches_oracle() {
        let g = Geometry::cylinder(1.0, 3.0, 1e3).unwrap();
        let q = region_integral_quadrature(&g, 1e-9).unwrap();
        assert!(rel(q, g.integral()) < 1e-9, "{q} vs {}", g.integral());
        // J ~ 2 pi (r_min^2 - r_max^2) / z_max^2 as the half-height grows
        let asymptote = 2.0 * PI * (1.0 - 9.0) / 1e6;
        assert!(rel(g.integral(), asymptote) < 1e-5);
    }

    #[test]
    fn thin_distant_regions_keep_precision() {
        // Series in (r / h)^2, truncated where the remainder is below 1e-13.
        let (r0, r1, h) = (0.02, 0.04, 80.0);
        let series = |r: f64| -r * r / (2.0 * h * h) + 3.0 * r.powi(4) / (8.0 * h.powi(4));
        let expect = 4.0 * PI * (series(r1) - series(r0));
        let got = CylinderGeometry::new(r0, r1, h).unwrap().integral();
        assert!(rel(got, expect) < 1e-12, "{got} vs {expect}");

        let (r, z0, z1) = (0.03, 50.0, 50.5);
        let tail = |z: f64| r * r / (2.0 * z * z) - 3.0 * r.powi(4) / (8.0 * z.powi(4));
        let expect = 2.0 * PI * (tail(z0) - tail(z1));
        let got = ColumnGeometry::new(z0, z1, r).unwrap().integral();
        assert!(rel(got, expect) < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn annulus_is_difference_of_edges() {
        let c = CylinderGeometry::new(0.4, 2.5, 0.9).unwrap();
        let diff = slab_edge(c.r_max, -c.z_max, c.z_max) - slab_edge(c.r_min, -c.z_max, c.z_max);
        assert!((c.integral() - diff).abs() < 1e-12);
    }

    #[test]
    fn column_is_additive_in_height() {
        let a = ColumnGeometry::new(0.5, 1.3, 0.8).unwrap();
        let b = ColumnGeometry::new(1.3, 4.0, 0.8).unwrap();
        let whole = ColumnGeometry::new(0.5, 4.0, 0.8).unwrap();
        assert!((a.integral() + b.integral() - whole.integral()).abs() < 1e-14);
    }

    #[test]
    fn cone_straddle_detection() {
        assert!(straddles_magic_cone(&Rect::new((0.5, 2.0), (0.5, 1.0))));
        assert!(!straddles_magic_cone(&Rect::new((0.0, 0.1), (1.0, 2.0))));
        assert!(!straddles_magic_cone(&Rect::new((2.0, 3.0), (-0.5, 0.5))));
    }

    #[test]
    fn peak_angular_factor_bounds_region() {
        let cyl = Geometry::cylinder(0.7, 2.0, 1.5).unwrap();
        let col = Geometry::column(0.7, 2.0, 1.5).unwrap();
        for g in [cyl, col] {
            let bound = g.max_abs_angular_factor();
            for i in 0..40 {
                for j in 0..40 {
                    for k in 0..3 {
                        let p = g.uniform_point([i as f64 / 39.0, j as f64 / 39.0, k as f64 / 3.0]);
                        let af = crate::physics::angular_factor(&p).unwrap();
                        assert!(af.abs() <= bound * (1.0 + 1e-12));
                    }
                }
            }
        }
    }
}
