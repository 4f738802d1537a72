//! Seeded artificial noise: the perturbation added to predictions before
//! deployment so that later outcomes carry an exogenous handle on feedback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("noise scale {value} must be strictly positive")]
    NonPositiveScale { value: f64 },
    #[error("non-finite prediction {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

/// Noise distribution, always centered at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian {
        sigma_nu: f64,
    },
    /// Equal-probability draws from {-epsilon, +epsilon}.
    Rademacher {
        epsilon: f64,
    },
}

impl NoiseKind {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma_nu } => sigma_nu,
            NoiseKind::Rademacher { epsilon } => epsilon,
        }
    }

    /// Var of a single draw: sigma_nu^2 or epsilon^2.
    pub fn variance(&self) -> f64 {
        let s = self.scale();
        s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma_nu: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian { sigma_nu },
            seed,
        }
    }

    pub fn rademacher(epsilon: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Rademacher { epsilon },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let s = self.kind.scale();
        if !s.is_finite() || s <= 0.0 {
            return Err(NoiseError::NonPositiveScale { value: s });
        }
        Ok(())
    }

    /// Same distribution, different stream.
    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            kind: self.kind,
            seed,
        }
    }
}

/// Derive a child seed for stream `index` from a root seed. Fixed mixing
/// rule (splitmix64 finalizer) so multi-period runs and bootstrap
/// replicates get decorrelated streams while staying reproducible from
/// one root seed.
pub fn child_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Draw `n` independent noise values. The same (spec, n) always produces
/// the same vector; the generator is constructed locally, so concurrent
/// calls never share state.
pub fn draw_noise(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>, NoiseError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let out = match spec.kind {
        NoiseKind::Gaussian { sigma_nu } => {
            let normal = Normal::new(0.0, sigma_nu).expect("scale validated above");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        NoiseKind::Rademacher { epsilon } => (0..n)
            .map(|_| {
                if rng.random::<bool>() {
                    epsilon
                } else {
                    -epsilon
                }
            })
            .collect(),
    };
    Ok(out)
}

/// Predictions as actually deployed: the raw model output, the noise
/// added to it, and their sum. `deployed = raw + noise` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedPredictions {
    pub raw: Vec<f64>,
    pub noise: Vec<f64>,
    pub deployed: Vec<f64>,
}

/// Attach a fresh noise draw to raw predictions.
pub fn deploy(raw: &[f64], spec: &NoiseSpec) -> Result<DeployedPredictions, NoiseError> {
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(NoiseError::NonFinite { index, value });
    }
    let noise = draw_noise(spec, raw.len())?;
    let deployed = raw.iter().zip(&noise).map(|(r, v)| r + v).collect();
    Ok(DeployedPredictions {
        raw: raw.to_vec(),
        noise,
        deployed,
    })
}
