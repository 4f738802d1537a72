use super::two_stage::TrendFit;
use super::{EstimatorError, ObservationSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearVariant {
    Simple,
    Conditioned,
}

/// A single-number feedback estimate: the slope of next predictions on
/// the injected noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFeedbackFit {
    pub beta_hat: f64,
    pub standard_error: f64,
    pub variant: LinearVariant,
    /// Mean of next − beta_hat·noise (after trend removal for the
    /// conditioned variant); the constant the slope regression absorbs.
    pub residual_mean: f64,
}

fn linear_core(
    noise: &[f64],
    response: &[f64],
    variant: LinearVariant,
) -> Result<LinearFeedbackFit, EstimatorError> {
    let n = noise.len();
    let nf = n as f64;
    let noise_mean = noise.iter().sum::<f64>() / nf;
    let resp_mean = response.iter().sum::<f64>() / nf;
    let mut s_vv = 0.0;
    let mut s_vy = 0.0;
    for (v, y) in noise.iter().zip(response) {
        s_vv += (v - noise_mean) * (v - noise_mean);
        s_vy += (v - noise_mean) * (y - resp_mean);
    }
    if s_vv == 0.0 {
        return Err(EstimatorError::DegenerateInstrument);
    }
    let beta_hat = s_vy / s_vv;

    let residuals: Vec<f64> = response
        .iter()
        .zip(noise)
        .map(|(y, v)| y - beta_hat * v)
        .collect();
    let residual_mean = residuals.iter().sum::<f64>() / nf;
    let resid_var = residuals
        .iter()
        .map(|u| (u - residual_mean) * (u - residual_mean))
        .sum::<f64>()
        / (nf - 1.0);
    let noise_var = s_vv / (nf - 1.0);
    let standard_error = (resid_var / (nf * noise_var)).sqrt();
    Ok(LinearFeedbackFit {
        beta_hat,
        standard_error,
        variant,
        residual_mean,
    })
}

/// Slope of next on noise: Cov(next, noise) / Var(noise). Valid without
/// any model of the prior predictions because the noise is exogenous by
/// construction.
pub fn fit_linear_simple(obs: &ObservationSet) -> Result<LinearFeedbackFit, EstimatorError> {
    obs.require_rows(3)?;
    linear_core(obs.noise(), obs.next(), LinearVariant::Simple)
}

/// Same slope after removing the fitted trend mu(prior) from next.
/// Conditioning strips the variance the prior predictions explain, which
/// tightens the standard error without moving the estimand.
pub fn fit_linear_conditioned(
    obs: &ObservationSet,
    trend: &TrendFit,
) -> Result<LinearFeedbackFit, EstimatorError> {
    obs.require_rows(3)?;
    let mu = trend.predict(obs.prior())?;
    let response: Vec<f64> = obs.next().iter().zip(&mu).map(|(y, m)| y - m).collect();
    linear_core(obs.noise(), &response, LinearVariant::Conditioned)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffLosses {
    /// Expected squared-error cost of leaving the feedback in place.
    pub ignore_loss: f64,
    /// Expected squared-error cost of correcting it with an estimated
    /// coefficient while continuing to inject noise.
    pub correct_loss: f64,
}

/// Compare leaving a linear feedback term alone against subtracting an
/// estimate of it: ignore_loss = beta^2 E[y_hat^2], correct_loss =
/// Var(beta_hat) E[y_hat^2] + sigma_nu^2.
pub fn removal_tradeoff(
    beta_hat_var: f64,
    mean_sq_prediction: f64,
    sigma_nu: f64,
    beta: f64,
) -> TradeoffLosses {
    TradeoffLosses {
        ignore_loss: beta * beta * mean_sq_prediction,
        correct_loss: beta_hat_var * mean_sq_prediction + sigma_nu * sigma_nu,
    }
}
