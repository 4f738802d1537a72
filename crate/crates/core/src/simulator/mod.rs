//! Synthetic prediction streams with known ground truth: single-period
//! scenarios over an imbalanced score distribution, a linear feedback
//! environment whose implied slope is known in closed form, and a
//! rule-based multi-period world whose feedback is deliberately not
//! additive in the deployed score.

mod linear_env;
mod rules;
mod scenario;
mod shapes;

pub use linear_env::{
    run_linear_environment, step_linear_environment, LinearEnvironment, LinearRun, XProcess,
};
pub use rules::{
    additive_reference, run_multi_period, FeatureRule, MultiPeriodRun, RuleBasedEnvironment,
};
pub use scenario::{
    generate_scenario, GeneratedScenario, MixtureComponent, PriorMixture, ScenarioSpec,
    ScenarioTruth, TREND_SLOPE,
};
pub use shapes::FeedbackShape;

use crate::basis::BasisError;
use crate::estimator::EstimatorError;
use crate::noise::NoiseError;
use crate::numeric::NumericError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid simulation setup: {context}")]
    InvalidSpec { context: String },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

pub(crate) fn invalid(context: impl Into<String>) -> SimulatorError {
    SimulatorError::InvalidSpec {
        context: context.into(),
    }
}
