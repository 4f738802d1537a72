//! Detect feedback loops in deployed predictors by injecting seeded
//! artificial noise into predictions and regressing later outcomes on a
//! noise-convolved spline basis.
//!
//! The crate is organized bottom-up:
//!
//! * [`numeric`]: least squares, FFT convolution, interpolation,
//!   Gaussian special functions
//! * [`basis`]: natural cubic splines plus jump indicators, and their
//!   noise-convolved counterparts
//! * [`noise`]: seeded noise draws and deployment
//! * [`estimator`]: linear and two-stage spline feedback fits with
//!   parametric variance
//! * [`bootstrap`]: resampling-based uncertainty for the fitted curve
//! * [`simulator`]: synthetic single-period scenarios and multi-period
//!   environments for end-to-end checks
//! * [`config`], [`logfile`], [`report`]: experiment configs,
//!   observation logs, result reports

pub mod basis;
pub mod bootstrap;
pub mod config;
pub mod estimator;
pub mod logfile;
pub mod noise;
pub mod numeric;
pub mod report;
pub mod simulator;
