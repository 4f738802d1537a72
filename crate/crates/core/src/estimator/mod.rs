//! Feedback estimators. The linear estimators treat the injected noise as
//! an instrument and read feedback strength off a single slope; the
//! two-stage fit first absorbs the conditional mean of the next prediction
//! given the prior one, then regresses what remains on the noise contrast
//! of a spline basis to recover the whole feedback curve.

mod linear;
mod two_stage;
mod variance;

pub use linear::{
    fit_linear_conditioned, fit_linear_simple, removal_tradeoff, LinearFeedbackFit, LinearVariant,
    TradeoffLosses,
};
pub use two_stage::{
    check_noise_consistency, fit_feedback, fit_feedback_with, fit_mean_trend, fit_two_stage,
    normalize_intercept, FeedbackFit, FeedbackOptions, SplitMode, TrendFit, TwoStageFit,
};
pub use variance::{variance_full, variance_simple};

use crate::basis::{BasisError, BasisSpec};
use crate::noise::{NoiseError, NoiseSpec};
use crate::numeric::NumericError;
use thiserror::Error;

/// Everything needed to run the two-stage pipeline on an observation
/// set. Bundled so refitting machinery (bootstrap, CLI) can carry one
/// value around.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub mu_basis: BasisSpec,
    pub f_basis: BasisSpec,
    pub noise: NoiseSpec,
    pub mode: SplitMode,
    pub options: FeedbackOptions,
}

impl FitConfig {
    pub fn new(mu_basis: BasisSpec, f_basis: BasisSpec, noise: NoiseSpec) -> FitConfig {
        FitConfig {
            mu_basis,
            f_basis,
            noise,
            mode: SplitMode::Shared,
            options: FeedbackOptions::default(),
        }
    }

    pub fn with_mode(mut self, mode: SplitMode) -> FitConfig {
        self.mode = mode;
        self
    }

    pub fn fit(&self, obs: &ObservationSet) -> Result<TwoStageFit, EstimatorError> {
        fit_two_stage(
            obs,
            &self.mu_basis,
            &self.f_basis,
            &self.noise,
            self.mode,
            &self.options,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("observation vectors disagree in length: prior {prior}, noise {noise}, next {next}")]
    LengthMismatch {
        prior: usize,
        noise: usize,
        next: usize,
    },
    #[error("non-finite {field} value at index {index}")]
    NonFinite { field: &'static str, index: usize },
    #[error("{rows} observations cannot support a fit needing at least {needed}")]
    NotEnoughData { rows: usize, needed: usize },
    #[error("noise variance is zero; the injected noise carries no identification")]
    DegenerateInstrument,
    #[error(
        "noise contrast is rank deficient (column {column}): noise scale {scale} is too \
         small to separate the {basis_dim} basis columns"
    )]
    DegenerateContrast {
        scale: f64,
        basis_dim: usize,
        column: usize,
    },
    #[error("recorded noise does not match the declared distribution: {context}")]
    NoiseMismatch { context: String },
    #[error("trend basis must include an intercept column")]
    TrendNeedsIntercept,
}

/// One period of deployment data: the model's prior predictions, the
/// noise that was added to them, and the next predictions observed after
/// the noised values went out.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    prior: Vec<f64>,
    noise: Vec<f64>,
    next: Vec<f64>,
}

impl ObservationSet {
    pub fn new(prior: Vec<f64>, noise: Vec<f64>, next: Vec<f64>) -> Result<Self, EstimatorError> {
        if prior.len() != noise.len() || prior.len() != next.len() {
            return Err(EstimatorError::LengthMismatch {
                prior: prior.len(),
                noise: noise.len(),
                next: next.len(),
            });
        }
        for (field, values) in [("prior", &prior), ("noise", &noise), ("next", &next)] {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(EstimatorError::NonFinite { field, index });
            }
        }
        Ok(ObservationSet { prior, noise, next })
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn next(&self) -> &[f64] {
        &self.next
    }

    /// prior + noise elementwise: the predictions as deployed.
    pub fn deployed(&self) -> Vec<f64> {
        self.prior
            .iter()
            .zip(&self.noise)
            .map(|(p, v)| p + v)
            .collect()
    }

    /// Contiguous sub-range, used by split-sample fitting.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ObservationSet {
        ObservationSet {
            prior: self.prior[range.clone()].to_vec(),
            noise: self.noise[range.clone()].to_vec(),
            next: self.next[range].to_vec(),
        }
    }

    pub(crate) fn require_rows(&self, needed: usize) -> Result<(), EstimatorError> {
        if self.len() < needed {
            return Err(EstimatorError::NotEnoughData {
                rows: self.len(),
                needed,
            });
        }
        Ok(())
    }
}
