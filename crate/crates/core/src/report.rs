//! Fit reports and plot files. A report is a JSON document that names
//! its inputs (seed, config hash, format version) so the same command
//! on the same machine produces byte-identical output.

use crate::basis::BasisSpec;
use crate::bootstrap::BootstrapBands;
use crate::config::EstimatorVariant;
use crate::estimator::{LinearFeedbackFit, LinearVariant, TrendFit, TwoStageFit};
use crate::noise::NoiseSpec;
use crate::numeric::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const REPORT_FORMAT_VERSION: &str = "feedback-probe report v1";

/// Feedback curves live on the log-odds scale; plots map them to
/// probabilities and show only this window by default.
pub const PLOT_LOG_ODDS_RANGE: [f64; 2] = [-3.0, 3.0];

pub const INTERCEPT_NOTE: &str = "feedback estimates are centered so the \
curve averages to zero over the sample's prior predictions; only \
differences along the curve are identified";

pub fn logistic(log_odds: f64) -> f64 {
    1.0 / (1.0 + (-log_odds).exp())
}

fn matrix_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendSection {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackSection {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    /// Heteroscedasticity-robust covariance, trend treated as fixed.
    pub covariance: Vec<Vec<f64>>,
    /// Covariance with the trend's sampling noise propagated through.
    pub covariance_full: Vec<Vec<f64>>,
    pub intercept_offset: f64,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub pointwise_se: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_se: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSection {
    pub variant: String,
    pub slope: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub format_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub estimator: EstimatorVariant,
    pub n_observations: usize,
    pub periods: u32,
    pub noise: NoiseSpec,
    pub intercept_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<TrendSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSection>,
}

/// Everything about a fit that is not the fit itself.
#[derive(Debug, Clone, Copy)]
pub struct ReportMeta<'a> {
    pub seed: u64,
    pub config_sha256: &'a str,
    pub estimator: EstimatorVariant,
    pub n_observations: usize,
    pub periods: u32,
    pub noise: &'a NoiseSpec,
}

fn report_shell(meta: ReportMeta) -> FitReport {
    FitReport {
        format_version: REPORT_FORMAT_VERSION.to_string(),
        seed: meta.seed,
        config_sha256: meta.config_sha256.to_string(),
        estimator: meta.estimator,
        n_observations: meta.n_observations,
        periods: meta.periods,
        noise: *meta.noise,
        intercept_note: INTERCEPT_NOTE.to_string(),
        trend: None,
        feedback: None,
        linear: None,
    }
}

pub fn two_stage_report(
    meta: ReportMeta,
    fit: &TwoStageFit,
    bands: Option<&BootstrapBands>,
) -> FitReport {
    let mut report = report_shell(meta);
    report.trend = Some(trend_section(&fit.trend));
    report.feedback = Some(FeedbackSection {
        basis: fit.feedback.basis.clone(),
        coefficients: fit.feedback.coefficients.clone(),
        covariance: matrix_rows(&fit.feedback.coefficient_covariance),
        covariance_full: matrix_rows(&fit.feedback_covariance_full),
        intercept_offset: fit.feedback.intercept_offset,
        grid: fit.feedback.grid_points(),
        estimate: fit.feedback.evaluation.values().to_vec(),
        pointwise_se: fit.feedback.pointwise_se.clone(),
        bootstrap_se: bands.map(|b| b.pointwise_se.clone()),
        bootstrap_replicates: bands.map(|b| b.replicates),
    });
    report
}

pub fn linear_report(
    meta: ReportMeta,
    fit: &LinearFeedbackFit,
    trend: Option<&TrendFit>,
) -> FitReport {
    let mut report = report_shell(meta);
    report.trend = trend.map(trend_section);
    report.linear = Some(LinearSection {
        variant: match fit.variant {
            LinearVariant::Simple => "simple".to_string(),
            LinearVariant::Conditioned => "conditioned".to_string(),
        },
        slope: fit.beta_hat,
        standard_error: fit.standard_error,
    });
    report
}

fn trend_section(trend: &TrendFit) -> TrendSection {
    TrendSection {
        basis: trend.basis.clone(),
        coefficients: trend.coefficients.clone(),
        covariance: matrix_rows(&trend.coefficient_covariance),
    }
}

pub fn render_report(report: &FitReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn write_report(path: &Path, report: &FitReport) -> std::io::Result<()> {
    std::fs::write(path, render_report(report))
}

/// Plot-ready CSV: first column is the probability the log-odds grid
/// point maps to, remaining columns come from the caller. Grid points
/// outside the reporting window are dropped.
pub fn write_plot_csv(
    path: &Path,
    grid: &[f64],
    columns: &[(&str, &[f64])],
) -> std::io::Result<()> {
    for (name, values) in columns {
        assert_eq!(
            values.len(),
            grid.len(),
            "column {name} does not match the grid"
        );
    }
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write!(out, "x_prob")?;
    for (name, _) in columns {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    let [lo, hi] = PLOT_LOG_ODDS_RANGE;
    for (i, &y) in grid.iter().enumerate() {
        if y < lo || y > hi {
            continue;
        }
        write!(out, "{}", logistic(y))?;
        for (_, values) in columns {
            write!(out, ",{}", values[i])?;
        }
        writeln!(out)?;
    }
    out.flush()
}
