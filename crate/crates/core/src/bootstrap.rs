//! Resampling-based uncertainty for the fitted feedback curve. The
//! parametric standard errors lean on the model being right; when the
//! feedback mechanism is misspecified they go anti-conservative, and
//! resampling whole observation triples is the honest fallback.

use crate::estimator::{EstimatorError, FitConfig, ObservationSet};
use crate::noise::child_seed;
use crate::numeric::{DenseMatrix, NumericError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("need at least 2 bootstrap replicates, got {0}")]
    TooFewReplicates(usize),
    #[error(
        "{failures} resample fits failed rank checks, over the budget of {budget} \
         for {replicates} replicates; last failure: {last}"
    )]
    TooManyFailures {
        failures: usize,
        budget: usize,
        replicates: usize,
        last: String,
    },
}

/// Pointwise bootstrap bands for the feedback curve.
#[derive(Debug, Clone)]
pub struct BootstrapBands {
    pub replicates: usize,
    pub grid: Vec<f64>,
    /// Per-gridpoint standard deviation across replicate curves.
    pub pointwise_se: Vec<f64>,
    /// One fitted curve per row, aligned with `grid`.
    pub replicate_curves: DenseMatrix,
}

fn resample(obs: &ObservationSet, rng: &mut ChaCha8Rng) -> ObservationSet {
    let n = obs.len();
    let mut prior = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        prior.push(obs.prior()[i]);
        noise.push(obs.noise()[i]);
        next.push(obs.next()[i]);
    }
    ObservationSet::new(prior, noise, next).expect("resampled rows of a valid set stay valid")
}

#[cfg(test)]
pub(crate) fn resample_for_tests(obs: &ObservationSet, seed: u64) -> ObservationSet {
    resample(obs, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn is_rank_failure(err: &EstimatorError) -> bool {
    matches!(
        err,
        EstimatorError::DegenerateContrast { .. }
            | EstimatorError::DegenerateInstrument
            | EstimatorError::Numeric(NumericError::RankDeficient { .. })
    )
}

/// Bootstrap the two-stage fit: resample observation triples with
/// replacement, refit, and summarize the replicate curves by their
/// per-gridpoint standard deviation.
///
/// Replicates run in parallel, each seeded by a child of `seed`, so the
/// result is deterministic for a given seed whatever the thread count.
/// A resample that fails a rank check is redrawn and the failure
/// counted; once failures exceed a fifth of the requested replicates
/// the data are considered unfit for resampling and the run aborts.
/// Small B (the figure-style B = 10) gives only order-of-magnitude
/// bands; prefer B of a few hundred for reporting.
pub fn bootstrap_feedback(
    obs: &ObservationSet,
    config: &FitConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapBands, BootstrapError> {
    if b < 2 {
        return Err(BootstrapError::TooFewReplicates(b));
    }
    let budget = b / 5;
    let failures = AtomicUsize::new(0);

    let curves: Vec<Result<Vec<f64>, BootstrapError>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = child_seed(seed, rep);
            let mut attempt = 0u64;
            loop {
                let mut rng = ChaCha8Rng::seed_from_u64(child_seed(rep_seed, attempt));
                let sample = resample(obs, &mut rng);
                match config.fit(&sample) {
                    Ok(fit) => return Ok(fit.feedback.evaluation.into_values()),
                    Err(err) if is_rank_failure(&err) => {
                        let seen = failures.fetch_add(1, Ordering::SeqCst) + 1;
                        if seen > budget {
                            return Err(BootstrapError::TooManyFailures {
                                failures: seen,
                                budget,
                                replicates: b,
                                last: err.to_string(),
                            });
                        }
                        attempt += 1;
                    }
                    Err(err) => return Err(err.into()),
                }
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(b);
    for curve in curves {
        rows.push(curve?);
    }

    // all replicates share the reporting grid fixed by the config
    let probe = config.fit(obs)?;
    let grid = probe.feedback.grid_points();
    let g = grid.len();
    let replicate_curves = DenseMatrix::from_rows(&rows).map_err(EstimatorError::from)?;

    let mut pointwise_se = Vec::with_capacity(g);
    for k in 0..g {
        let mean: f64 = (0..b).map(|r| replicate_curves.get(r, k)).sum::<f64>() / b as f64;
        let var: f64 = (0..b)
            .map(|r| {
                let d = replicate_curves.get(r, k) - mean;
                d * d
            })
            .sum::<f64>()
            / (b - 1) as f64;
        pointwise_se.push(var.sqrt());
    }

    Ok(BootstrapBands {
        replicates: b,
        grid,
        pointwise_se,
        replicate_curves,
    })
}
