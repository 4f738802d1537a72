//! Deterministic numerical primitives shared by the estimation pipeline:
//! dense matrices, least squares with classical and heteroscedasticity-robust
//! covariances, grid-sampled functions with linear interpolation, FFT
//! convolution on uniform grids, and Gaussian density/CDF helpers.
//!
//! Everything here is a pure function over immutable inputs and safe to call
//! from many threads at once.

mod convolve;
mod gauss;
mod grid;
mod matrix;
mod solve;
#[cfg(test)]
pub(crate) mod testquad;

pub use convolve::fft_convolve_grid;
pub use gauss::{gaussian_cdf, gaussian_pdf};
pub use grid::{interp_linear, GridFunction};
pub use matrix::DenseMatrix;
pub use solve::{solve_least_squares, xtx_inverse, LeastSquaresSolution};

use thiserror::Error;

/// Failures surfaced by the numerical primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    /// Column whose post-orthogonalization norm fell below tolerance.
    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("least squares needs rows >= cols, got {rows} rows and {cols} cols")]
    NotEnoughRows { rows: usize, cols: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("query {value} at index {index} lies outside the grid span [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error(
        "convolution grid too coarse: {samples} kernel samples within two standard \
         scales at step {step} (need at least 8)"
    )]
    GridTooCoarse { step: f64, samples: usize },
    #[error("grid of {len} points cannot absorb kernel padding of {pad} points per side")]
    GridTooShort { len: usize, pad: usize },
    #[error("invalid grid: {context}")]
    InvalidGrid { context: String },
    #[error("domain error: {context}")]
    Domain { context: String },
}

/// Mean with compensated summation; keeps the zero-mean normalization
/// invariant tight even for very long inputs.
pub(crate) fn compensated_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}
