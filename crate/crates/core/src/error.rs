use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("position ({x}, {y}, {z}) um is within 1e-6 um of the target spin")]
    SingularPosition { x: f64, y: f64, z: f64 },

    #[error("position lies on the magic-angle cone; the secular coupling vanishes")]
    MagicAngle,

    #[error("region integral of the angular factor vanishes; uncertainty is unbounded")]
    ZeroSignal,

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature stalled after {panels} panels: estimate {estimate:e}, error {error:e}")]
    QuadratureNoConvergence {
        estimate: f64,
        error: f64,
        panels: usize,
    },

    #[error("no feasible geometry on the search grid")]
    NoFeasiblePoint,
}

impl Error {
    /// True for failures of a numerical method rather than of the physical setup.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNoConvergence { .. } | Error::NoFeasiblePoint
        )
    }

    /// True for configurations that are physically meaningless or singular.
    pub fn is_physical(&self) -> bool {
        matches!(
            self,
            Error::SingularPosition { .. } | Error::MagicAngle | Error::ZeroSignal
        )
    }
}
