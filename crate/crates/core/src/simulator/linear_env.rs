use super::{invalid, SimulatorError};
use crate::estimator::ObservationSet;
use crate::noise::{child_seed, deploy, NoiseSpec};
use crate::numeric::DenseMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Baseline evolution of the feature vector absent any deployment:
/// each coordinate follows an independent stationary AR(1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XProcess {
    pub dim: usize,
    pub rho: f64,
    pub innovation_sd: f64,
}

impl XProcess {
    fn validate(&self) -> Result<(), SimulatorError> {
        if self.dim == 0 {
            return Err(invalid("feature process needs at least one dimension"));
        }
        if !self.rho.is_finite() || self.rho.abs() >= 1.0 {
            return Err(invalid(format!("feature autocorrelation {}", self.rho)));
        }
        if !(self.innovation_sd.is_finite() && self.innovation_sd > 0.0) {
            return Err(invalid(format!("innovation sd {}", self.innovation_sd)));
        }
        Ok(())
    }

    fn stationary_sd(&self) -> f64 {
        self.innovation_sd / (1.0 - self.rho * self.rho).sqrt()
    }
}

/// A world where publishing a prediction shifts next period's features
/// by gamma times the deployed value. The induced feedback on the
/// prediction itself is exactly linear with slope weights . gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEnvironment {
    pub weights: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x_process: XProcess,
}

impl LinearEnvironment {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        self.x_process.validate()?;
        if self.weights.len() != self.x_process.dim || self.gamma.len() != self.x_process.dim {
            return Err(invalid(format!(
                "{} weights and {} feedback loadings for {} features",
                self.weights.len(),
                self.gamma.len(),
                self.x_process.dim
            )));
        }
        if self
            .weights
            .iter()
            .chain(&self.gamma)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("weights and loadings must be finite"));
        }
        Ok(())
    }

    /// The feedback slope this world induces on predictions.
    pub fn implied_slope(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.gamma)
            .map(|(w, g)| w * g)
            .sum()
    }
}

/// Advance one period: next features are the fresh baseline plus gamma
/// times each unit's deployed prediction; next predictions read those
/// features through the fixed weights.
pub fn step_linear_environment(
    env: &LinearEnvironment,
    baseline_next: &DenseMatrix,
    deployed: &[f64],
) -> Result<Vec<f64>, SimulatorError> {
    env.validate()?;
    let d = env.x_process.dim;
    if baseline_next.cols() != d || baseline_next.rows() != deployed.len() {
        return Err(invalid(format!(
            "{}x{} baseline for {} deployed values and {d} features",
            baseline_next.rows(),
            baseline_next.cols(),
            deployed.len()
        )));
    }
    let mut out = Vec::with_capacity(deployed.len());
    for (i, y) in deployed.iter().enumerate() {
        let row = baseline_next.row(i);
        let mut v = 0.0;
        for j in 0..d {
            v += env.weights[j] * (row[j] + env.gamma[j] * y);
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearRun {
    pub observations: ObservationSet,
    /// Per-row period, 1-based.
    pub period: Vec<u32>,
    pub implied_slope: f64,
}

/// Simulate `periods` transitions for `n_units` independent units and
/// pool the (prior, noise, next) rows. Deterministic given the seed.
pub fn run_linear_environment(
    env: &LinearEnvironment,
    n_units: usize,
    periods: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<LinearRun, SimulatorError> {
    env.validate()?;
    noise.validate()?;
    if n_units == 0 || periods == 0 {
        return Err(invalid(format!("{n_units} units x {periods} periods")));
    }
    let d = env.x_process.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0));
    let start = Normal::new(0.0, env.x_process.stationary_sd()).unwrap();
    let innov = Normal::new(0.0, env.x_process.innovation_sd).unwrap();

    let mut baseline = DenseMatrix::zeros(n_units, d);
    for i in 0..n_units {
        for j in 0..d {
            baseline.set(i, j, start.sample(&mut rng));
        }
    }
    let mut y: Vec<f64> = (0..n_units)
        .map(|i| {
            (0..d)
                .map(|j| env.weights[j] * baseline.get(i, j))
                .sum::<f64>()
        })
        .collect();

    let total = n_units * periods;
    let mut prior = Vec::with_capacity(total);
    let mut noise_rows = Vec::with_capacity(total);
    let mut next = Vec::with_capacity(total);
    let mut period = Vec::with_capacity(total);
    for t in 1..=periods {
        let dep = deploy(&y, &noise.with_seed(child_seed(seed, t as u64)))?;
        let mut baseline_next = DenseMatrix::zeros(n_units, d);
        for i in 0..n_units {
            for j in 0..d {
                baseline_next.set(
                    i,
                    j,
                    env.x_process.rho * baseline.get(i, j) + innov.sample(&mut rng),
                );
            }
        }
        let y_next = step_linear_environment(env, &baseline_next, &dep.deployed)?;
        prior.extend_from_slice(&y);
        noise_rows.extend_from_slice(&dep.noise);
        next.extend_from_slice(&y_next);
        period.extend(std::iter::repeat_n(t as u32, n_units));
        baseline = baseline_next;
        y = y_next;
    }
    Ok(LinearRun {
        observations: ObservationSet::new(prior, noise_rows, next)?,
        period,
        implied_slope: env.implied_slope(),
    })
}
