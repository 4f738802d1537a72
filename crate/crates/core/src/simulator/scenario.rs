use super::shapes::FeedbackShape;
use super::{invalid, SimulatorError};
use crate::estimator::ObservationSet;
use crate::noise::{child_seed, deploy, NoiseSpec};
use crate::numeric::compensated_mean;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Mean-reversion slope of the true conditional mean: without feedback,
/// E[next | prior] = TREND_SLOPE * prior. Kept below one so simulated
/// streams carry the drift the trend stage exists to absorb.
pub const TREND_SLOPE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Prior log-odds distribution. The default mimics a heavily imbalanced
/// classifier: most scores sit far on the negative side, a thin mode
/// near even odds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMixture {
    pub components: Vec<MixtureComponent>,
}

impl Default for PriorMixture {
    fn default() -> Self {
        PriorMixture {
            components: vec![
                MixtureComponent {
                    weight: 0.9,
                    mean: -4.0,
                    sd: 1.0,
                },
                MixtureComponent {
                    weight: 0.1,
                    mean: 0.0,
                    sd: 1.0,
                },
            ],
        }
    }
}

impl PriorMixture {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.components.is_empty() {
            return Err(invalid("prior mixture needs at least one component"));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(invalid(format!("component {i} weight {}", c.weight)));
            }
            if !c.mean.is_finite() || !(c.sd.is_finite() && c.sd > 0.0) {
                return Err(invalid(format!(
                    "component {i} distribution N({}, {})",
                    c.mean, c.sd
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &self.components[self.components.len() - 1];
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        Normal::new(chosen.mean, chosen.sd).unwrap().sample(rng)
    }
}

fn default_periods() -> usize {
    1
}

/// One synthetic experiment: how many rows per period, how noisy the
/// world is, what noise gets injected, and what the true feedback curve
/// looks like.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Rows per period.
    pub n: usize,
    /// Standard deviation of the natural (unexplained) variation in the
    /// next prediction. Zero is allowed as a degenerate world for exact
    /// bookkeeping checks.
    pub natural_sigma: f64,
    pub noise: NoiseSpec,
    pub true_feedback: FeedbackShape,
    #[serde(default)]
    pub imbalance: PriorMixture,
    /// Periods chain: each period's next predictions become the
    /// following period's priors.
    #[serde(default = "default_periods")]
    pub periods: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(n: usize, shape: FeedbackShape, noise: NoiseSpec, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            n,
            natural_sigma: 0.5,
            noise,
            true_feedback: shape,
            imbalance: PriorMixture::default(),
            periods: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.n < 100 {
            return Err(invalid(format!("n = {} (need at least 100)", self.n)));
        }
        if !self.natural_sigma.is_finite() || self.natural_sigma < 0.0 {
            return Err(invalid(format!("natural_sigma = {}", self.natural_sigma)));
        }
        if self.periods < 1 {
            return Err(invalid("periods must be at least 1"));
        }
        self.noise.validate()?;
        self.imbalance.validate()?;
        Ok(())
    }
}

/// The part of the generating process a fit can be scored against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub shape: FeedbackShape,
    pub trend_slope: f64,
    /// Reporting grid over the shape's interesting range.
    pub grid: Vec<f64>,
    /// True feedback on `grid`, uncentered.
    pub f_true: Vec<f64>,
    /// Mean of the true feedback over all generated priors; subtract it
    /// from `f_true` to compare against a fitted (centered) curve.
    pub mean_f_at_priors: f64,
}

impl ScenarioTruth {
    /// Truth under the same level convention as a fitted curve.
    pub fn centered(&self) -> Vec<f64> {
        self.f_true
            .iter()
            .map(|v| v - self.mean_f_at_priors)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub observations: ObservationSet,
    /// Per-row period, 1-based, aligned with `observations`.
    pub period: Vec<u32>,
    /// The injected-noise record actually used (its seed is derived
    /// from the scenario seed so replicate scenarios differ).
    pub noise: NoiseSpec,
    pub truth: ScenarioTruth,
}

const TRUTH_GRID_POINTS: usize = 201;

/// Simulate the scenario: priors from the imbalance mixture, injected
/// noise added to each deployed prediction, and the next prediction
/// formed as trend plus true feedback at the deployed value plus
/// natural variation. Deterministic given the spec.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GeneratedScenario, SimulatorError> {
    spec.validate()?;
    let mut world_rng = ChaCha8Rng::seed_from_u64(child_seed(spec.seed, 0));
    let natural = if spec.natural_sigma > 0.0 {
        Some(Normal::new(0.0, spec.natural_sigma).unwrap())
    } else {
        None
    };

    let total = spec.n * spec.periods;
    let mut prior = Vec::with_capacity(total);
    let mut noise = Vec::with_capacity(total);
    let mut next = Vec::with_capacity(total);
    let mut period = Vec::with_capacity(total);

    let mut current: Vec<f64> = (0..spec.n)
        .map(|_| spec.imbalance.draw(&mut world_rng))
        .collect();
    for p in 1..=spec.periods {
        let noise_spec = spec.noise.with_seed(child_seed(spec.seed, p as u64));
        let dep = deploy(&current, &noise_spec)?;
        let f_vals = spec.true_feedback.evaluate(&dep.deployed)?;
        let mut step_next = Vec::with_capacity(spec.n);
        for i in 0..spec.n {
            let nat = natural.map_or(0.0, |d| d.sample(&mut world_rng));
            step_next.push(TREND_SLOPE * current[i] + f_vals[i] + nat);
        }
        prior.extend_from_slice(&current);
        noise.extend_from_slice(&dep.noise);
        next.extend_from_slice(&step_next);
        period.extend(std::iter::repeat_n(p as u32, spec.n));
        current = step_next;
    }

    let [lo, hi] = spec.true_feedback.support_hint();
    let grid: Vec<f64> = (0..TRUTH_GRID_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (TRUTH_GRID_POINTS - 1) as f64)
        .collect();
    let f_true = spec.true_feedback.evaluate(&grid)?;
    let f_at_priors = spec.true_feedback.evaluate(&prior)?;
    let truth = ScenarioTruth {
        shape: spec.true_feedback.clone(),
        trend_slope: TREND_SLOPE,
        grid,
        f_true,
        mean_f_at_priors: compensated_mean(&f_at_priors),
    };
    let observations = ObservationSet::new(prior, noise, next)?;
    Ok(GeneratedScenario {
        observations,
        period,
        noise: spec.noise.with_seed(child_seed(spec.seed, 1)),
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_linear_simple;

    fn base_spec(shape: FeedbackShape, seed: u64) -> ScenarioSpec {
        ScenarioSpec::new(50_000, shape, NoiseSpec::gaussian(0.25, 0), seed)
    }

    #[test]
    fn identical_specs_generate_identical_data() {
        let spec = base_spec(FeedbackShape::ContinuousMonotone, 5);
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(a.observations.prior(), b.observations.prior());
        assert_eq!(a.observations.noise(), b.observations.noise());
        assert_eq!(a.observations.next(), b.observations.next());
        assert_eq!(a.truth.mean_f_at_priors, b.truth.mean_f_at_priors);
        let c = generate_scenario(&base_spec(FeedbackShape::ContinuousMonotone, 6)).unwrap();
        assert_ne!(a.observations.prior()[0], c.observations.prior()[0]);
    }

    #[test]
    fn degenerate_world_is_pure_trend() {
        let mut spec = base_spec(FeedbackShape::Null, 7);
        spec.n = 500;
        spec.natural_sigma = 0.0;
        let out = generate_scenario(&spec).unwrap();
        for i in 0..500 {
            let want = TREND_SLOPE * out.observations.prior()[i];
            assert!((out.observations.next()[i] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn null_shape_shows_no_noise_effect() {
        let out = generate_scenario(&base_spec(FeedbackShape::Null, 8)).unwrap();
        let fit = fit_linear_simple(&out.observations).unwrap();
        assert!(
            fit.beta_hat.abs() <= 4.0 * fit.standard_error,
            "beta {} se {}",
            fit.beta_hat,
            fit.standard_error
        );
    }

    #[test]
    fn jump_shape_moves_conditional_means_apart() {
        // near prior = 0, rows whose noise pushed the deployed value
        // positive should sit about one jump height above the others
        let mut spec = base_spec(FeedbackShape::JumpOnly, 9);
        spec.n = 200_000;
        let out = generate_scenario(&spec).unwrap();
        let (mut up, mut down) = (Vec::new(), Vec::new());
        for i in 0..out.observations.len() {
            let p = out.observations.prior()[i];
            if p.abs() < 0.1 {
                let resid = out.observations.next()[i] - TREND_SLOPE * p;
                if p + out.observations.noise()[i] > 0.0 {
                    up.push(resid);
                } else {
                    down.push(resid);
                }
            }
        }
        assert!(up.len() > 200 && down.len() > 200);
        let mu_up = up.iter().sum::<f64>() / up.len() as f64;
        let mu_down = down.iter().sum::<f64>() / down.len() as f64;
        assert!(
            ((mu_up - mu_down) - 0.4).abs() <= 0.1,
            "gap {} from {} / {} rows",
            mu_up - mu_down,
            up.len(),
            down.len()
        );
    }

    #[test]
    fn residual_after_removing_truth_ignores_noise() {
        let out = generate_scenario(&base_spec(FeedbackShape::ContinuousNonmonotone, 10)).unwrap();
        let obs = &out.observations;
        let f = out.truth.shape.evaluate(&obs.deployed()).unwrap();
        let n = obs.len();
        let resid: Vec<f64> = (0..n).map(|i| obs.next()[i] - f[i]).collect();
        let mr = resid.iter().sum::<f64>() / n as f64;
        let mv = obs.noise().iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut dr = 0.0;
        let mut dv = 0.0;
        for i in 0..n {
            num += (resid[i] - mr) * (obs.noise()[i] - mv);
            dr += (resid[i] - mr) * (resid[i] - mr);
            dv += (obs.noise()[i] - mv) * (obs.noise()[i] - mv);
        }
        let corr = num / (dr.sqrt() * dv.sqrt());
        assert!(
            corr.abs() <= 4.0 / (n as f64).sqrt(),
            "correlation {corr} with n {n}"
        );
    }

    #[test]
    fn default_mixture_is_heavily_negative() {
        let out = generate_scenario(&base_spec(FeedbackShape::Null, 11)).unwrap();
        let below = out
            .observations
            .prior()
            .iter()
            .filter(|p| **p < -2.0)
            .count() as f64
            / out.observations.len() as f64;
        assert!((below - 0.88).abs() <= 0.02, "fraction below -2: {below}");
    }

    #[test]
    fn periods_chain_next_into_prior() {
        let mut spec = base_spec(FeedbackShape::ContinuousMonotone, 12);
        spec.n = 300;
        spec.periods = 3;
        let out = generate_scenario(&spec).unwrap();
        assert_eq!(out.observations.len(), 900);
        assert_eq!(out.period[0], 1);
        assert_eq!(out.period[899], 3);
        for i in 0..600 {
            assert_eq!(
                out.observations.next()[i],
                out.observations.prior()[i + 300],
                "row {i} must chain into the next period"
            );
        }
    }

    #[test]
    fn trend_fit_tracks_binned_conditional_mean() {
        // oracle: bin a 2M-row fresh draw of the same world by prior and
        // average the next predictions within each bin
        let spec = base_spec(FeedbackShape::ContinuousMonotone, 15);
        let mut big = base_spec(FeedbackShape::ContinuousMonotone, 16);
        big.n = 2_000_000;

        let fit_data = generate_scenario(&spec).unwrap();
        let mu_basis = crate::basis::BasisSpec::spline(3, -3.0, 3.0)
            .with_jumps(&[0.0])
            .with_intercept();
        let trend = crate::estimator::fit_mean_trend(&fit_data.observations, &mu_basis).unwrap();

        let oracle = generate_scenario(&big).unwrap();
        let lo = -6.45;
        let width = 0.1;
        let bins = 80usize;
        let mut count = vec![0usize; bins];
        let mut sum = vec![0.0; bins];
        let mut sumsq = vec![0.0; bins];
        for i in 0..oracle.observations.len() {
            let p = oracle.observations.prior()[i];
            let k = ((p - (lo - width / 2.0)) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                let k = k as usize;
                let y = oracle.observations.next()[i];
                count[k] += 1;
                sum[k] += y;
                sumsq[k] += y * y;
            }
        }

        let centers: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
        let mu_hat = trend.predict(&centers).unwrap();
        let mu_se = trend.pointwise_se(&centers).unwrap();
        let mut checked = 0;
        let mut covered = 0;
        for k in 0..bins {
            if count[k] < 500 {
                continue;
            }
            let n = count[k] as f64;
            let mean = sum[k] / n;
            let var = (sumsq[k] - n * mean * mean) / (n - 1.0);
            let oracle_se = (var / n).sqrt();
            let band = 3.0 * (mu_se[k] * mu_se[k] + oracle_se * oracle_se).sqrt();
            checked += 1;
            if (mu_hat[k] - mean).abs() <= band {
                covered += 1;
            }
        }
        assert!(checked >= 60, "only {checked} usable bins");
        let rate = covered as f64 / checked as f64;
        assert!(rate >= 0.95, "coverage {rate} over {checked} bins");
    }

    #[test]
    fn invalid_specs_are_named() {
        let mut spec = base_spec(FeedbackShape::Null, 13);
        spec.n = 50;
        assert!(matches!(
            generate_scenario(&spec),
            Err(SimulatorError::InvalidSpec { .. })
        ));
        let mut spec = base_spec(FeedbackShape::Null, 13);
        spec.imbalance.components[0].weight = 0.5;
        assert!(generate_scenario(&spec).is_err());
        let mut spec = base_spec(FeedbackShape::Null, 13);
        spec.natural_sigma = f64::NAN;
        assert!(generate_scenario(&spec).is_err());
    }

    #[test]
    fn spec_serialization_round_trips() {
        let spec = base_spec(FeedbackShape::MonotoneWithJump, 14);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n, spec.n);
        assert_eq!(back.true_feedback, spec.true_feedback);
        assert_eq!(back.periods, 1);
        // defaults fill in when omitted
        let minimal = r#"{
            "n": 1000,
            "natural_sigma": 0.5,
            "noise": {"distribution": "gaussian", "sigma_nu": 0.25, "seed": 3},
            "true_feedback": {"kind": "null"},
            "seed": 4
        }"#;
        let parsed: ScenarioSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.periods, 1);
        assert_eq!(parsed.imbalance, PriorMixture::default());
    }
}
