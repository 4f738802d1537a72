use super::{invalid, SimulatorError};
use crate::basis::{eval_basis, BasisSpec};
use crate::estimator::ObservationSet;
use crate::noise::{child_seed, deploy, NoiseSpec};
use crate::numeric::{compensated_mean, solve_least_squares, DenseMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

/// One reaction rule: when a unit's feature is high and its deployed
/// prediction crosses a threshold, the feature gets bumped next period
/// by an exponentially distributed amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRule {
    pub feature: usize,
    pub feature_threshold: f64,
    pub deployed_threshold: f64,
    pub increment_mean: f64,
}

/// A world that reacts to published predictions through per-feature
/// rules rather than through the prediction itself, so the induced
/// feedback is not any function of the deployed value alone. Estimates
/// against it can only be judged against the best additive stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBasedEnvironment {
    pub classifier_weights: Vec<f64>,
    pub intercept: f64,
    pub rules: Vec<FeatureRule>,
    pub feature_rho: f64,
    pub innovation_sd: f64,
}

impl Default for RuleBasedEnvironment {
    fn default() -> Self {
        let weights = vec![0.9, 0.8, 0.7, 0.7, 0.6, 0.5];
        let rules = (0..weights.len())
            .map(|feature| FeatureRule {
                feature,
                feature_threshold: 0.675,
                deployed_threshold: 0.0,
                increment_mean: 0.4,
            })
            .collect();
        RuleBasedEnvironment {
            classifier_weights: weights,
            intercept: -4.0,
            rules,
            feature_rho: 0.8,
            innovation_sd: 0.6,
        }
    }
}

impl RuleBasedEnvironment {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let d = self.classifier_weights.len();
        if d == 0 {
            return Err(invalid("classifier needs at least one feature weight"));
        }
        if self.classifier_weights.iter().any(|w| !w.is_finite()) || !self.intercept.is_finite() {
            return Err(invalid("classifier weights must be finite"));
        }
        if self.rules.is_empty() {
            return Err(invalid("environment needs at least one reaction rule"));
        }
        for (i, r) in self.rules.iter().enumerate() {
            if r.feature >= d {
                return Err(invalid(format!(
                    "rule {i} targets feature {} of {d}",
                    r.feature
                )));
            }
            if !r.feature_threshold.is_finite() || !r.deployed_threshold.is_finite() {
                return Err(invalid(format!("rule {i} thresholds must be finite")));
            }
            if !(r.increment_mean.is_finite() && r.increment_mean > 0.0) {
                return Err(invalid(format!(
                    "rule {i} increment mean {}",
                    r.increment_mean
                )));
            }
        }
        if !self.feature_rho.is_finite() || self.feature_rho.abs() >= 1.0 {
            return Err(invalid(format!(
                "feature autocorrelation {}",
                self.feature_rho
            )));
        }
        if !(self.innovation_sd.is_finite() && self.innovation_sd > 0.0) {
            return Err(invalid(format!("innovation sd {}", self.innovation_sd)));
        }
        Ok(())
    }

    fn score(&self, features: &DenseMatrix, unit: usize) -> f64 {
        let row = features.row(unit);
        self.intercept
            + row
                .iter()
                .zip(&self.classifier_weights)
                .map(|(a, w)| a * w)
                .sum::<f64>()
    }
}

/// Pooled observations plus the trajectory the world would have
/// followed had nothing been deployed.
#[derive(Debug, Clone)]
pub struct MultiPeriodRun {
    pub observations: ObservationSet,
    /// Per-row period, 1-based.
    pub period: Vec<u32>,
    /// What each row's next prediction would have been with no
    /// deployment anywhere; next minus this is the realized feedback.
    pub counterfactual_next: Vec<f64>,
}

/// Simulate the rule world for `periods` transitions of `n_units`
/// units, deploying noised predictions each period, and pool the rows.
/// The baseline feature stream evolves identically in a counterfactual
/// run where rules never fire, giving the no-deployment trajectory.
pub fn run_multi_period(
    env: &RuleBasedEnvironment,
    n_units: usize,
    periods: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<MultiPeriodRun, SimulatorError> {
    env.validate()?;
    noise.validate()?;
    if periods < 2 {
        return Err(invalid(format!(
            "{periods} periods (multi-period worlds need at least 2)"
        )));
    }
    if n_units == 0 {
        return Err(invalid("need at least one unit"));
    }

    let d = env.classifier_weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0));
    let stationary_sd = env.innovation_sd / (1.0 - env.feature_rho * env.feature_rho).sqrt();
    let start = Normal::new(0.0, stationary_sd).unwrap();
    let innov = Normal::new(0.0, env.innovation_sd).unwrap();

    let mut base = DenseMatrix::zeros(n_units, d);
    for i in 0..n_units {
        for j in 0..d {
            base.set(i, j, start.sample(&mut rng));
        }
    }
    // rule-driven feature bumps live for exactly one period
    let mut bump = DenseMatrix::zeros(n_units, d);

    let total = n_units * periods;
    let mut prior = Vec::with_capacity(total);
    let mut noise_rows = Vec::with_capacity(total);
    let mut next = Vec::with_capacity(total);
    let mut period = Vec::with_capacity(total);
    let mut counterfactual = Vec::with_capacity(total);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    for t in 0..=periods {
        let observed = base.add(&bump)?;
        let y_obs: Vec<f64> = (0..n_units).map(|i| env.score(&observed, i)).collect();
        let y_cf: Vec<f64> = (0..n_units).map(|i| env.score(&base, i)).collect();
        if let Some((p, v)) = prev.take() {
            prior.extend_from_slice(&p);
            noise_rows.extend_from_slice(&v);
            next.extend_from_slice(&y_obs);
            counterfactual.extend_from_slice(&y_cf);
            period.extend(std::iter::repeat_n(t as u32, n_units));
        }
        if t == periods {
            break;
        }
        let dep = deploy(&y_obs, &noise.with_seed(child_seed(seed, 1 + t as u64)))?;
        let mut bump_next = DenseMatrix::zeros(n_units, d);
        for rule in &env.rules {
            let inc = Exp::new(1.0 / rule.increment_mean).unwrap();
            for i in 0..n_units {
                if observed.get(i, rule.feature) > rule.feature_threshold
                    && dep.deployed[i] > rule.deployed_threshold
                {
                    let v = bump_next.get(i, rule.feature) + inc.sample(&mut rng);
                    bump_next.set(i, rule.feature, v);
                }
            }
        }
        for i in 0..n_units {
            for j in 0..d {
                base.set(
                    i,
                    j,
                    env.feature_rho * base.get(i, j) + innov.sample(&mut rng),
                );
            }
        }
        bump = bump_next;
        prev = Some((y_obs, dep.noise));
    }

    Ok(MultiPeriodRun {
        observations: ObservationSet::new(prior, noise_rows, next)?,
        period,
        counterfactual_next: counterfactual,
    })
}

/// The reference curve a misspecified fit should be judged against: the
/// least-squares projection of the realized feedback (next minus its
/// no-deployment counterfactual) onto the basis in the deployed value,
/// centered over the priors like any fitted curve.
pub fn additive_reference(
    run: &MultiPeriodRun,
    f_basis: &BasisSpec,
    grid: &[f64],
) -> Result<Vec<f64>, SimulatorError> {
    f_basis.validate_feedback_role()?;
    let obs = &run.observations;
    if run.counterfactual_next.len() != obs.len() {
        return Err(invalid(format!(
            "{} counterfactual rows for {} observations",
            run.counterfactual_next.len(),
            obs.len()
        )));
    }
    let with_intercept = f_basis.clone().with_intercept();
    let design = eval_basis(&with_intercept, &obs.deployed())?;
    let gap: Vec<f64> = obs
        .next()
        .iter()
        .zip(&run.counterfactual_next)
        .map(|(y, c)| y - c)
        .collect();
    let sol = solve_least_squares(design.matrix(), &gap).map_err(SimulatorError::Numeric)?;

    let at_priors = eval_basis(&with_intercept, obs.prior())?
        .matrix()
        .matvec(&sol.coefficients)
        .map_err(SimulatorError::Numeric)?;
    let level = compensated_mean(&at_priors);
    let on_grid = eval_basis(&with_intercept, grid)?
        .matrix()
        .matvec(&sol.coefficients)
        .map_err(SimulatorError::Numeric)?;
    Ok(on_grid.iter().map(|v| v - level).collect())
}
