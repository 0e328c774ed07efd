use thiserror::Error;

/// Errors produced by the wavepacket library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("state has (numerically) zero norm")]
    ZeroNorm,

    #[error("state is not normalized: |psi|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("axis {axis} out of range for a {dims}-dimensional grid")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("Fourier multiplier symbol is not finite on the momentum lattice")]
    SymbolNotFinite,

    #[error(
        "boundary density {max_density:.3e} exceeds {limit:.3e}; \
         moments are meaningless on a periodic wrap"
    )]
    BoundaryLeak { max_density: f64, limit: f64 },

    #[error("potential does not provide derivatives of order {order}")]
    MissingDerivative { order: usize },

    #[error("saved times are not uniformly spaced")]
    NonUniformStride,

    #[error("operation needs a {required}-dimensional state, got {got}")]
    DimensionMismatch { required: usize, got: usize },

    #[error("operation supports at most {max} dimensions, got {got}")]
    DimensionUnsupported { max: usize, got: usize },

    #[error("{op} failed at t = {time}: {source}")]
    Stage {
        op: String,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("record must contain at least {required} saved times, got {got}")]
    TooFewTimes { required: usize, got: usize },

    #[error("time {time} is outside the recorded range [{t0}, {t1}]")]
    TimeOutOfRange { time: f64, t0: f64, t1: f64 },

    #[error("mixture weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("mixture ensemble is empty")]
    EmptyEnsemble,

    #[error("relative speed {speed} exceeds the kinematic bound {bound}")]
    SuperluminalVelocity { speed: f64, bound: f64 },

    #[error("expansion center sits on the node mask (density too small)")]
    CenterOnNodeMask,

    #[error("two-body dipole {value:.3e} exceeds tolerance {tol:.3e} in the source moments")]
    NonVanishingDipole { value: f64, tol: f64 },

    #[error("variance {value:.3e} is negative beyond tolerance; quadrature failure")]
    NegativeVariance { value: f64 },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the operation name and simulation time where it occurred.
    pub fn at(self, op: &str, time: f64) -> Error {
        Error::Stage {
            op: op.to_string(),
            time,
            source: Box::new(self),
        }
    }
}
