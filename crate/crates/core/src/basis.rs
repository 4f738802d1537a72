//! Basis expansions for the trend and feedback regressions: natural cubic
//! splines (linear beyond the boundary knots) plus step indicators, and
//! their counterparts smoothed by a Gaussian noise density.
//!
//! The spline block uses the truncated-power parameterization. Coefficient
//! values therefore depend on this choice, but the spanned function space
//! does not, and all tests downstream compare fitted curves rather than
//! coefficients.

use crate::numeric::{
    fft_convolve_grid, gaussian_cdf, gaussian_pdf, interp_linear, DenseMatrix, GridFunction,
    NumericError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("invalid basis spec: {context}")]
    InvalidSpec { context: String },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Declarative description of a basis: an optional intercept, a natural
/// cubic spline block, and step indicators at fixed locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    /// Number of spline columns. Zero means no spline block.
    pub spline_df: usize,
    /// Boundary knots; interior knots are spread evenly between them.
    pub knot_interval: [f64; 2],
    #[serde(default)]
    pub jump_locations: Vec<f64>,
    #[serde(default)]
    pub include_intercept: bool,
}

impl BasisSpec {
    pub fn spline(spline_df: usize, low: f64, high: f64) -> Self {
        BasisSpec {
            spline_df,
            knot_interval: [low, high],
            jump_locations: Vec::new(),
            include_intercept: false,
        }
    }

    pub fn with_jumps(mut self, locations: &[f64]) -> Self {
        self.jump_locations = locations.to_vec();
        self
    }

    pub fn with_intercept(mut self) -> Self {
        self.include_intercept = true;
        self
    }

    /// Total number of columns the spec produces.
    pub fn dimension(&self) -> usize {
        usize::from(self.include_intercept) + self.spline_df + self.jump_locations.len()
    }

    pub fn validate(&self) -> Result<(), BasisError> {
        let [low, high] = self.knot_interval;
        if self.spline_df > 0 && !(low.is_finite() && high.is_finite() && low < high) {
            return Err(BasisError::InvalidSpec {
                context: format!("knot interval [{low}, {high}] must satisfy low < high"),
            });
        }
        if let Some(c) = self.jump_locations.iter().find(|c| !c.is_finite()) {
            return Err(BasisError::InvalidSpec {
                context: format!("non-finite jump location {c}"),
            });
        }
        if self.dimension() == 0 {
            return Err(BasisError::InvalidSpec {
                context: "spec produces no columns".to_string(),
            });
        }
        Ok(())
    }

    /// Extra constraint for the feedback basis: its design is a difference
    /// of two evaluations, so an intercept column would be identically zero
    /// there and must be excluded up front.
    pub fn validate_feedback_role(&self) -> Result<(), BasisError> {
        self.validate()?;
        if self.include_intercept {
            return Err(BasisError::InvalidSpec {
                context: "feedback basis must not contain an intercept column".to_string(),
            });
        }
        Ok(())
    }

    /// Knot sequence: boundary knots at the interval ends, interior knots
    /// evenly spaced, spline_df + 1 knots in total. Empty when the spec
    /// has no spline block.
    pub fn knots(&self) -> Vec<f64> {
        let [low, high] = self.knot_interval;
        let df = self.spline_df;
        if df == 0 {
            return Vec::new();
        }
        (0..=df)
            .map(|k| low + (high - low) * k as f64 / df as f64)
            .collect()
    }

    fn spline_only(&self) -> BasisSpec {
        BasisSpec::spline(self.spline_df, self.knot_interval[0], self.knot_interval[1])
    }
}

/// A basis evaluated (or smoothed) at a set of points.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    spec: BasisSpec,
    matrix: DenseMatrix,
    evaluation_points: Vec<f64>,
    rank_warning: bool,
}

impl BasisMatrix {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn evaluation_points(&self) -> &[f64] {
        &self.evaluation_points
    }

    /// Set when the points carry fewer distinct values than the basis has
    /// columns, which forces a rank-deficient design downstream.
    pub fn rank_warning(&self) -> bool {
        self.rank_warning
    }

    fn assemble(spec: BasisSpec, points: &[f64], rows: Vec<Vec<f64>>) -> Result<Self, BasisError> {
        let matrix = if rows.is_empty() {
            DenseMatrix::zeros(0, spec.dimension())
        } else {
            DenseMatrix::from_rows(&rows)?
        };
        let rank_warning = distinct_count(points) < spec.dimension();
        Ok(BasisMatrix {
            spec,
            matrix,
            evaluation_points: points.to_vec(),
            rank_warning,
        })
    }
}

fn distinct_count(points: &[f64]) -> usize {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

fn check_points(points: &[f64]) -> Result<(), BasisError> {
    if let Some((index, &value)) = points.iter().enumerate().find(|(_, p)| !p.is_finite()) {
        return Err(BasisError::Numeric(NumericError::NonFinite {
            index,
            value,
        }));
    }
    Ok(())
}

/// Evaluate the spline columns at a single point.
///
/// Columns: the identity, then for each interior knot the difference of
/// scaled truncated cubes that keeps the function linear beyond both
/// boundary knots.
fn spline_row(knots: &[f64], y: f64, out: &mut Vec<f64>) {
    let df = knots.len() - 1;
    out.push(y);
    if df < 2 {
        return;
    }
    let last = knots[df];
    let cube = |t: f64| {
        let u = y - t;
        if u > 0.0 {
            u * u * u
        } else {
            0.0
        }
    };
    let d = |i: usize| (cube(knots[i]) - cube(last)) / (last - knots[i]);
    let d_pen = d(df - 1);
    for i in 0..df - 1 {
        out.push(d(i) - d_pen);
    }
}

/// Natural cubic spline block of the spec, evaluated at the points.
pub fn natural_spline_basis(spec: &BasisSpec, points: &[f64]) -> Result<BasisMatrix, BasisError> {
    spec.validate()?;
    if spec.spline_df == 0 {
        return Err(BasisError::InvalidSpec {
            context: "spline block requested from a spec with spline_df = 0".to_string(),
        });
    }
    check_points(points)?;
    let only = spec.spline_only();
    let knots = only.knots();
    let rows = points
        .iter()
        .map(|&y| {
            let mut row = Vec::with_capacity(only.spline_df);
            spline_row(&knots, y, &mut row);
            row
        })
        .collect();
    BasisMatrix::assemble(only, points, rows)
}

/// Step-indicator columns 1{point > location}, one per location.
pub fn jump_basis(locations: &[f64], points: &[f64]) -> Result<BasisMatrix, BasisError> {
    let spec = BasisSpec {
        spline_df: 0,
        knot_interval: [0.0, 0.0],
        jump_locations: locations.to_vec(),
        include_intercept: false,
    };
    spec.validate()?;
    check_points(points)?;
    let rows = points
        .iter()
        .map(|&y| locations.iter().map(|&c| f64::from(y > c)).collect())
        .collect();
    BasisMatrix::assemble(spec, points, rows)
}

/// Full basis: [intercept | spline block | jump block] at the points.
pub fn eval_basis(spec: &BasisSpec, points: &[f64]) -> Result<BasisMatrix, BasisError> {
    spec.validate()?;
    check_points(points)?;
    let knots = spec.knots();
    let rows = points
        .iter()
        .map(|&y| {
            let mut row = Vec::with_capacity(spec.dimension());
            if spec.include_intercept {
                row.push(1.0);
            }
            if spec.spline_df > 0 {
                spline_row(&knots, y, &mut row);
            }
            for &c in &spec.jump_locations {
                row.push(f64::from(y > c));
            }
            row
        })
        .collect();
    BasisMatrix::assemble(spec.clone(), points, rows)
}

/// Grid resolution and padding for the smoothing convolution. The
/// defaults keep the convolution error well under 1e-6 for the basis
/// functions used here; both knobs stay configurable because the right
/// resolution is an engineering choice, not something the method fixes.
#[derive(Debug, Clone)]
pub struct ConvolveOptions {
    /// Grid step; default min(sigma_nu / 16, 2^-11).
    pub grid_step: Option<f64>,
    /// Kernel halfwidth and grid padding, in units of sigma_nu.
    pub pad_sigmas: f64,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        ConvolveOptions {
            grid_step: None,
            pad_sigmas: 6.0,
        }
    }
}

impl ConvolveOptions {
    fn step(&self, sigma_nu: f64) -> f64 {
        self.grid_step.unwrap_or_else(|| {
            let cap = 2.0f64.powi(-11);
            (sigma_nu / 16.0).min(cap)
        })
    }
}

/// Basis columns smoothed by a centered Gaussian of scale `sigma_nu`:
/// column j becomes E[b_j(y + noise)].
///
/// Spline columns go through the grid convolution and are interpolated
/// back onto the points. The intercept passes through unchanged and jump
/// columns use the closed form: a step smoothed by a Gaussian is the
/// Gaussian CDF.
pub fn convolved_basis(
    spec: &BasisSpec,
    sigma_nu: f64,
    points: &[f64],
) -> Result<BasisMatrix, BasisError> {
    convolved_basis_with(spec, sigma_nu, points, &ConvolveOptions::default())
}

pub fn convolved_basis_with(
    spec: &BasisSpec,
    sigma_nu: f64,
    points: &[f64],
    options: &ConvolveOptions,
) -> Result<BasisMatrix, BasisError> {
    spec.validate()?;
    if !sigma_nu.is_finite() || sigma_nu <= 0.0 {
        return Err(BasisError::InvalidSpec {
            context: format!("sigma_nu {sigma_nu} must be positive"),
        });
    }
    check_points(points)?;

    let spline_cols = if spec.spline_df > 0 && !points.is_empty() {
        convolved_spline_columns(spec, sigma_nu, points, options)?
    } else {
        Vec::new()
    };

    let rows = points
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut row = Vec::with_capacity(spec.dimension());
            if spec.include_intercept {
                row.push(1.0);
            }
            for col in &spline_cols {
                row.push(col[i]);
            }
            for &c in &spec.jump_locations {
                row.push(gaussian_cdf(y - c, sigma_nu).expect("sigma_nu checked above"));
            }
            row
        })
        .collect();
    BasisMatrix::assemble(spec.clone(), points, rows)
}

fn convolved_spline_columns(
    spec: &BasisSpec,
    sigma_nu: f64,
    points: &[f64],
    options: &ConvolveOptions,
) -> Result<Vec<Vec<f64>>, BasisError> {
    let halfwidth = options.pad_sigmas * sigma_nu;
    let step = options.step(sigma_nu);
    let grid = convolution_grid(points, halfwidth, step)?;
    let knots = spec.knots();
    let df = spec.spline_df;

    let mut scratch = Vec::with_capacity(df);
    let samples: Vec<Vec<f64>> = {
        let mut cols = vec![Vec::with_capacity(grid.len()); df];
        for k in 0..grid.len() {
            scratch.clear();
            spline_row(&knots, grid.point(k), &mut scratch);
            for (col, &v) in cols.iter_mut().zip(&scratch) {
                col.push(v);
            }
        }
        cols
    };

    let kernel = |t: f64| gaussian_pdf(t, sigma_nu).expect("sigma_nu checked above");
    samples
        .into_iter()
        .map(|values| {
            let sampled = GridFunction::new(grid.start(), grid.step(), values)?;
            let smoothed = fft_convolve_grid(&sampled, kernel, halfwidth)?;
            Ok(interp_linear(&smoothed, points)?)
        })
        .collect()
}

/// Uniform grid covering the query points plus kernel padding on both
/// sides, with a spare step so trimming never clips a query.
fn convolution_grid(
    points: &[f64],
    halfwidth: f64,
    step: f64,
) -> Result<GridFunction, NumericError> {
    let lo_q = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_q = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = lo_q - halfwidth - 2.0 * step;
    let hi = hi_q + halfwidth + 2.0 * step;
    GridFunction::sample(lo, hi.max(lo + 4.0 * step), step, |_| 0.0)
}
