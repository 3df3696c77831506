//! Quantum wave-packet transmission through rectangular wells and barriers.
//!
//! The library decomposes the complex transmission coefficient of a
//! one-dimensional rectangular structure into its multiple-reflection
//! series, synthesizes the transmitted wave packet and its finite
//! constituents by spectral quadrature, and extracts group delays from
//! both the transmission phase and the synthesized packet peaks. For
//! evanescent barriers the delay saturates with thickness, and the sweep
//! runner quantifies that saturation against the analytic limit.
//!
//! Modules follow the pipeline order:
//!
//! - [`dispersion`]: unit system, wavenumbers inside/outside the structure,
//!   derived scales (group velocity, characteristic time).
//! - [`scattering`]: closed-form transmission coefficient, reflection
//!   series terms and partial sums, phase unwrapping, delay extraction.
//! - [`synthesis`]: Gaussian spectra, time-domain packets by composite
//!   Simpson quadrature, peak tracking, envelope fidelity, spectral
//!   centroids, and the first-order analytic prediction.
//! - [`experiments`]: persisted scenario runs with manifests and digests.

pub mod dispersion;
pub mod experiments;
pub mod scattering;
pub mod synthesis;

mod numfmt;

pub use dispersion::{PotentialKind, ScatterRegion};
pub use scattering::{CoefficientTable, DelayReport};
pub use synthesis::{FieldLabel, FieldSamples, PacketSpec};

/// Errors produced by the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("angular frequency must be nonnegative, got {0}")]
    NegativeFrequency(f64),

    #[error("invalid scatter region: {0}")]
    InvalidRegion(String),

    #[error("invalid packet spec: {0}")]
    InvalidPacket(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("series index must be at least 1")]
    SeriesIndex,

    #[error("zero-magnitude coefficient at sample {index}: phase is undefined there")]
    ZeroMagnitude { index: usize },

    #[error("coefficient is undefined (non-finite) at omega = {omega}")]
    CoefficientUndefined { omega: f64 },

    #[error("wavenumbers must be positive, got k = {k}, kappa = {kappa}")]
    NonpositiveWavenumber { k: f64, kappa: f64 },

    #[error("peak sits on the grid boundary at index {index}; widen the time grid")]
    BoundaryPeak { index: usize },

    #[error("field has zero norm")]
    ZeroNorm,

    #[error("spectral weight is zero over the window")]
    ZeroWeight,

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
