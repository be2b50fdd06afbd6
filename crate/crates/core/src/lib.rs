//! Generalized steered response power (GSRP) source localization.
//!
//! The crate evaluates broadband steered response power maps over candidate
//! grids using pluggable acoustic models (far field, near field, directivity
//! composed, tabulated transfer functions), beamformers (DS, MVDR, MPDR,
//! MVCNR, NMF, MPCNR) and frequency weightings (PHAT, SNR, flat, Frobenius).
//! A free-field scene simulator, a config-driven localization pipeline and a
//! set of golden self-test scenarios are included.
//!
//! Math modules are generic over the scalar type (`f32` or `f64`) through the
//! [`Scalar`] bound; the simulator and pipeline are concrete over [`Real`].

// Parameter checks use `!(x > 0)` on purpose: unlike `x <= 0` it also traps NaN.
// The dense kernels in `numerics` walk several arrays by index; iterator
// rewrites there would obscure the triangular access patterns.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

pub mod beamformer;
pub mod config;
pub mod covariance;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod scenario;
pub mod sim;
pub mod srp;
pub mod stft;
pub mod wav;
pub mod weighting;

/// Scalar type of the concrete pipeline.
pub type Real = f64;
/// Complex sample type of the concrete pipeline.
pub type Cpx = Complex<Real>;

/// Floating point bound for the generic math modules.
///
/// Implemented by `f32` and `f64` via the blanket impl below.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssignOps
        + Send
        + Sync
        + std::fmt::Debug
        + std::fmt::Display
        + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable in scalar type")
}

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signal too short: {len} samples, frame size {frame}")]
    SignalTooShort { len: usize, frame: usize },
    #[error("no channels in input signal")]
    NoChannels,
    #[error("empty frame range")]
    EmptyFrameRange,
    #[error("degenerate steering denominator")]
    DegenerateSteering,
    #[error("SRP map has no finite value")]
    EmptyArgmax,
    #[error("unknown table point index {0}")]
    UnknownTablePoint(usize),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("bin {bin}: {source}")]
    AtBin { bin: usize, source: Box<Error> },
    #[error("bin {bin}, point {point}: {source}")]
    AtPoint {
        bin: usize,
        point: usize,
        source: Box<Error>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// True for failures of numerical origin (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::DegenerateSteering
            | Error::EmptyArgmax => true,
            Error::AtBin { source, .. } | Error::AtPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
