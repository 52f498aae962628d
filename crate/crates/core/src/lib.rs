//! Sensitivity model for detecting a single target spin with spin-echo
//! magnetometry, using either one probe spin or a homogeneous probe-spin
//! ensemble shaped as a column or a holed cylinder.
//!
//! * [`physics`]: constants, dipolar coupling and the effective field.
//! * [`sensing`]: analytic uncertainties for field and spin-state estimation.
//! * [`geometry`]: ensemble regions, their volumes and region integrals.
//! * [`optimize`]: geometry optimisation and standoff sweeps.
//! * [`montecarlo`]: stochastic simulation of the echo protocol.

pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod optimize;
pub mod physics;
pub mod quadrature;
pub mod sensing;

pub use error::{Error, Result};
pub use geometry::{ColumnGeometry, CylinderGeometry, Geometry, Shape};
pub use physics::{CouplingConvention, PhysicalConstants, Position, TargetSpin};
pub use sensing::{EchoProtocol, ProbeSpinParams, SensitivityResult};
