use super::{EstimatorError, ObservationSet};
use crate::basis::{convolved_basis_with, eval_basis, BasisSpec, ConvolveOptions};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::numeric::{
    compensated_mean, solve_least_squares, DenseMatrix, GridFunction, NumericError,
};
use serde::{Deserialize, Serialize};

/// Fitted conditional mean of the next prediction given the prior one.
/// This single object absorbs both the system's intrinsic drift and the
/// smoothed feedback, which are not separable without the noise contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    pub coefficient_covariance: DenseMatrix,
}

impl TrendFit {
    /// The zero trend: conditioning on it changes nothing.
    pub fn zero() -> TrendFit {
        let basis = BasisSpec {
            spline_df: 0,
            knot_interval: [0.0, 0.0],
            jump_locations: Vec::new(),
            include_intercept: true,
        };
        TrendFit {
            basis,
            coefficients: vec![0.0],
            coefficient_covariance: DenseMatrix::zeros(1, 1),
        }
    }

    /// A trend with known coefficients and no stated uncertainty.
    pub fn from_parts(
        basis: BasisSpec,
        coefficients: Vec<f64>,
    ) -> Result<TrendFit, EstimatorError> {
        basis.validate()?;
        let p = basis.dimension();
        if coefficients.len() != p {
            return Err(EstimatorError::Numeric(NumericError::DimensionMismatch {
                context: format!("{} coefficients for a {p}-column basis", coefficients.len()),
            }));
        }
        Ok(TrendFit {
            basis,
            coefficients,
            coefficient_covariance: DenseMatrix::zeros(p, p),
        })
    }

    /// mu_hat at each point.
    pub fn predict(&self, points: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let b = eval_basis(&self.basis, points)?;
        Ok(b.matrix().matvec(&self.coefficients)?)
    }

    /// Standard error of mu_hat at each point.
    pub fn pointwise_se(&self, points: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let b = eval_basis(&self.basis, points)?;
        let mut out = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            let row = b.matrix().row(i);
            let v = self.coefficient_covariance.quadratic_form(row, row)?;
            out.push(v.max(0.0).sqrt());
        }
        Ok(out)
    }
}

/// Regress next predictions on a basis in the prior ones. The sandwich
/// covariance is kept because the spread of next given prior is nowhere
/// near constant in deployment data.
pub fn fit_mean_trend(
    obs: &ObservationSet,
    mu_basis: &BasisSpec,
) -> Result<TrendFit, EstimatorError> {
    mu_basis.validate()?;
    if !mu_basis.include_intercept {
        return Err(EstimatorError::TrendNeedsIntercept);
    }
    obs.require_rows(mu_basis.dimension() + 2)?;
    let design = eval_basis(mu_basis, obs.prior())?;
    let solution = solve_least_squares(design.matrix(), obs.next())?;
    Ok(TrendFit {
        basis: mu_basis.clone(),
        coefficients: solution.coefficients,
        coefficient_covariance: solution.coefficient_covariance_sandwich,
    })
}

/// The fitted feedback curve. Coefficients live in the (intercept-free)
/// basis; the additive level is not identified by the data, so
/// `intercept_offset` pins it by making the fitted curve average to zero
/// over the training priors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackFit {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    pub coefficient_covariance: DenseMatrix,
    pub intercept_offset: f64,
    pub evaluation: GridFunction,
    pub pointwise_se: Vec<f64>,
}

impl FeedbackFit {
    /// f_hat at arbitrary points (basis value plus the pinned offset).
    pub fn predict(&self, points: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let b = eval_basis(&self.basis, points)?;
        let raw = b.matrix().matvec(&self.coefficients)?;
        Ok(raw.iter().map(|v| v + self.intercept_offset).collect())
    }

    /// The reporting grid points of `evaluation`.
    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.evaluation.len())
            .map(|k| self.evaluation.point(k))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackOptions {
    /// Number of reporting-grid points for the fitted curve.
    pub grid_points: usize,
    /// Reporting interval; defaults to the trend basis knot interval.
    pub grid_interval: Option<[f64; 2]>,
    pub convolve: ConvolveOptions,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        FeedbackOptions {
            grid_points: 201,
            grid_interval: None,
            convolve: ConvolveOptions::default(),
        }
    }
}

/// Verify that recorded noise is plausible under the declared
/// distribution. The estimator leans on the declared distribution for
/// the smoothed basis, so a mismatch silently corrupts the fit; better
/// to refuse. Rademacher support is checked exactly; a Gaussian scale is
/// only testable statistically, so that check needs at least 500 draws
/// and a wide gate.
pub fn check_noise_consistency(noise: &[f64], spec: &NoiseSpec) -> Result<(), EstimatorError> {
    spec.validate()?;
    match spec.kind {
        NoiseKind::Rademacher { epsilon } => {
            if let Some(i) = noise.iter().position(|v| v.abs() != epsilon) {
                return Err(EstimatorError::NoiseMismatch {
                    context: format!(
                        "draw {} at index {i} is outside the two-point support of size {epsilon}",
                        noise[i]
                    ),
                });
            }
        }
        NoiseKind::Gaussian { sigma_nu } => {
            let n = noise.len();
            if n >= 500 {
                let mean = noise.iter().sum::<f64>() / n as f64;
                let var =
                    noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                let sd = var.sqrt();
                let gate = (6.0 / (2.0 * n as f64).sqrt()).max(0.10);
                let rel = (sd / sigma_nu - 1.0).abs();
                if rel > gate {
                    return Err(EstimatorError::NoiseMismatch {
                        context: format!(
                            "sample noise SD {sd:.6} deviates {:.1}% from the declared {sigma_nu} \
                             (gate {:.1}%)",
                            rel * 100.0,
                            gate * 100.0
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

/// E[b_f(y + noise)] evaluated at the points: the smoothed basis the
/// contrast subtracts. Gaussian noise goes through the grid convolution;
/// two-point noise averages the two shifted evaluations, which computes
/// the same expectation exactly.
fn expected_basis(
    f_basis: &BasisSpec,
    spec: &NoiseSpec,
    points: &[f64],
    convolve: &ConvolveOptions,
) -> Result<DenseMatrix, EstimatorError> {
    match spec.kind {
        NoiseKind::Gaussian { sigma_nu } => {
            Ok(convolved_basis_with(f_basis, sigma_nu, points, convolve)?.into_matrix())
        }
        NoiseKind::Rademacher { epsilon } => {
            let up: Vec<f64> = points.iter().map(|p| p + epsilon).collect();
            let down: Vec<f64> = points.iter().map(|p| p - epsilon).collect();
            let b_up = eval_basis(f_basis, &up)?.into_matrix();
            let b_down = eval_basis(f_basis, &down)?.into_matrix();
            Ok(b_up.add(&b_down)?.scaled(0.5))
        }
    }
}

/// Design rows of the feedback regression:
/// s_i = b_f(prior_i + noise_i) − E[b_f(prior_i + noise)].
pub(crate) fn noise_contrast(
    obs: &ObservationSet,
    f_basis: &BasisSpec,
    spec: &NoiseSpec,
    convolve: &ConvolveOptions,
) -> Result<DenseMatrix, EstimatorError> {
    let deployed = obs.deployed();
    let at_deployed = eval_basis(f_basis, &deployed)?.into_matrix();
    let expected = expected_basis(f_basis, spec, obs.prior(), convolve)?;
    Ok(at_deployed.add(&expected.scaled(-1.0))?)
}

/// Centered curve and standard errors shared by the fitting and
/// normalization paths: values are row·beta + offset with offset chosen
/// so the prior-basis rows average to zero feedback, and each SE is for
/// the centered contrast (row − mean prior row)·beta.
fn centered_curve(
    grid_basis: &DenseMatrix,
    prior_basis: &DenseMatrix,
    coefficients: &[f64],
    covariance: &DenseMatrix,
) -> Result<(Vec<f64>, Vec<f64>, f64), EstimatorError> {
    let p = coefficients.len();
    let n = prior_basis.rows();
    let mut mean_row = vec![0.0; p];
    let mut col = Vec::with_capacity(n);
    for (j, slot) in mean_row.iter_mut().enumerate() {
        col.clear();
        col.extend((0..n).map(|i| prior_basis.get(i, j)));
        *slot = compensated_mean(&col);
    }
    let offset = -mean_row
        .iter()
        .zip(coefficients)
        .map(|(m, c)| m * c)
        .sum::<f64>();

    let mut values = Vec::with_capacity(grid_basis.rows());
    let mut ses = Vec::with_capacity(grid_basis.rows());
    let mut centered = vec![0.0; p];
    for i in 0..grid_basis.rows() {
        let row = grid_basis.row(i);
        let v: f64 = row.iter().zip(coefficients).map(|(b, c)| b * c).sum();
        values.push(v + offset);
        for (k, slot) in centered.iter_mut().enumerate() {
            *slot = row[k] - mean_row[k];
        }
        let var = covariance.quadratic_form(&centered, &centered)?;
        ses.push(var.max(0.0).sqrt());
    }
    Ok((values, ses, offset))
}

fn reporting_interval(
    trend: &TrendFit,
    f_basis: &BasisSpec,
    options: &FeedbackOptions,
) -> [f64; 2] {
    if let Some(interval) = options.grid_interval {
        return interval;
    }
    if trend.basis.spline_df > 0 {
        trend.basis.knot_interval
    } else {
        f_basis.knot_interval
    }
}

/// Fit the feedback curve with default reporting options.
pub fn fit_feedback(
    obs: &ObservationSet,
    trend: &TrendFit,
    f_basis: &BasisSpec,
    noise_spec: &NoiseSpec,
) -> Result<FeedbackFit, EstimatorError> {
    fit_feedback_with(obs, trend, f_basis, noise_spec, &FeedbackOptions::default())
}

/// Fit the feedback curve: regress next − mu_hat(prior) on the noise
/// contrast of the feedback basis, then pin the unidentified level so
/// the fitted curve averages to zero over the training priors.
pub fn fit_feedback_with(
    obs: &ObservationSet,
    trend: &TrendFit,
    f_basis: &BasisSpec,
    noise_spec: &NoiseSpec,
    options: &FeedbackOptions,
) -> Result<FeedbackFit, EstimatorError> {
    Ok(fit_feedback_parts(obs, trend, f_basis, noise_spec, options)?.0)
}

/// Internal variant that also hands back the design matrix, so pipeline
/// callers can reuse it for the trend-aware covariance.
pub(crate) fn fit_feedback_parts(
    obs: &ObservationSet,
    trend: &TrendFit,
    f_basis: &BasisSpec,
    noise_spec: &NoiseSpec,
    options: &FeedbackOptions,
) -> Result<(FeedbackFit, DenseMatrix), EstimatorError> {
    f_basis.validate_feedback_role()?;
    check_noise_consistency(obs.noise(), noise_spec)?;
    obs.require_rows(f_basis.dimension() + 2)?;
    if options.grid_points < 2 {
        return Err(EstimatorError::Numeric(NumericError::InvalidGrid {
            context: format!("{} reporting points (need at least 2)", options.grid_points),
        }));
    }

    let design = noise_contrast(obs, f_basis, noise_spec, &options.convolve)?;
    let mu = trend.predict(obs.prior())?;
    let response: Vec<f64> = obs.next().iter().zip(&mu).map(|(y, m)| y - m).collect();
    let solution = solve_least_squares(&design, &response).map_err(|e| match e {
        NumericError::RankDeficient { column } => EstimatorError::DegenerateContrast {
            scale: noise_spec.kind.scale(),
            basis_dim: f_basis.dimension(),
            column,
        },
        other => EstimatorError::Numeric(other),
    })?;

    let [lo, hi] = reporting_interval(trend, f_basis, options);
    let step = (hi - lo) / (options.grid_points - 1) as f64;
    let grid: Vec<f64> = (0..options.grid_points)
        .map(|k| lo + step * k as f64)
        .collect();
    let grid_basis = eval_basis(f_basis, &grid)?;
    let prior_basis = eval_basis(f_basis, obs.prior())?;
    let (values, ses, offset) = centered_curve(
        grid_basis.matrix(),
        prior_basis.matrix(),
        &solution.coefficients,
        &solution.coefficient_covariance_sandwich,
    )?;
    let fit = FeedbackFit {
        basis: f_basis.clone(),
        coefficients: solution.coefficients,
        coefficient_covariance: solution.coefficient_covariance_sandwich,
        intercept_offset: offset,
        evaluation: GridFunction::new(lo, step, values)?,
        pointwise_se: ses,
    };
    Ok((fit, design))
}

/// Re-pin the additive level of a fitted curve so it averages to zero
/// over the given priors. Rebuilds the reporting curve and its standard
/// errors from the coefficients, so the result is the same whatever
/// level (or manual shift) the input carried.
pub fn normalize_intercept(
    fit: &FeedbackFit,
    prior: &[f64],
) -> Result<FeedbackFit, EstimatorError> {
    let grid = fit.grid_points();
    let grid_basis = eval_basis(&fit.basis, &grid)?;
    let prior_basis = eval_basis(&fit.basis, prior)?;
    let (values, ses, offset) = centered_curve(
        grid_basis.matrix(),
        prior_basis.matrix(),
        &fit.coefficients,
        &fit.coefficient_covariance,
    )?;
    Ok(FeedbackFit {
        basis: fit.basis.clone(),
        coefficients: fit.coefficients.clone(),
        coefficient_covariance: fit.coefficient_covariance.clone(),
        intercept_offset: offset,
        evaluation: GridFunction::new(fit.evaluation.start(), fit.evaluation.step(), values)?,
        pointwise_se: ses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Trend and feedback fitted on the same observations (default).
    Shared,
    /// Trend on the first half, feedback on the second; matches the
    /// independence assumption behind the trend-aware covariance.
    Split,
}

#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub trend: TrendFit,
    pub feedback: FeedbackFit,
    /// Feedback-coefficient covariance with the trend's own sampling
    /// uncertainty propagated through (the full form, not the sandwich).
    pub feedback_covariance_full: DenseMatrix,
}

/// Run the whole pipeline: fit the trend, fit the feedback curve against
/// it, and compute the trend-aware coefficient covariance.
pub fn fit_two_stage(
    obs: &ObservationSet,
    mu_basis: &BasisSpec,
    f_basis: &BasisSpec,
    noise_spec: &NoiseSpec,
    mode: SplitMode,
    options: &FeedbackOptions,
) -> Result<TwoStageFit, EstimatorError> {
    let n = obs.len();
    let (trend_obs, fb_obs) = match mode {
        SplitMode::Shared => (obs.clone(), obs.clone()),
        SplitMode::Split => (obs.slice(0..n / 2), obs.slice(n / 2..n)),
    };
    let trend = fit_mean_trend(&trend_obs, mu_basis)?;
    let (feedback, design) = fit_feedback_parts(&fb_obs, &trend, f_basis, noise_spec, options)?;

    let x_mu = eval_basis(mu_basis, fb_obs.prior())?.into_matrix();
    let mu_hat = x_mu.matvec(&trend.coefficients)?;
    let v_y_diag: Vec<f64> = fb_obs
        .next()
        .iter()
        .zip(&mu_hat)
        .map(|(y, m)| (y - m) * (y - m))
        .collect();
    let feedback_covariance_full =
        super::variance::variance_full(&design, &x_mu, &v_y_diag, &trend.coefficient_covariance)?;
    Ok(TwoStageFit {
        trend,
        feedback,
        feedback_covariance_full,
    })
}
