use super::two_stage::TrendFit;
use super::{EstimatorError, ObservationSet};
use crate::basis::{BasisSpec, ConvolveOptions};
use crate::noise::NoiseSpec;
use crate::numeric::{xtx_inverse, DenseMatrix, NumericError};

fn dim_err(context: String) -> EstimatorError {
    EstimatorError::Numeric(NumericError::DimensionMismatch { context })
}

/// Covariance of the feedback coefficients that also carries the
/// trend's sampling uncertainty:
///
///   (XfᵀXf)⁻¹ (Xfᵀ diag(v_y) Xf + A V_mu Aᵀ) (XfᵀXf)⁻¹,  A = XfᵀXmu
///
/// `v_y_diag` holds per-row estimates of Var(next | prior); `v_mu` is
/// the covariance of the trend coefficients. With `v_mu = 0` this is
/// the plain sandwich with those row variances.
pub fn variance_full(
    x_f: &DenseMatrix,
    x_mu: &DenseMatrix,
    v_y_diag: &[f64],
    v_mu: &DenseMatrix,
) -> Result<DenseMatrix, EstimatorError> {
    let n = x_f.rows();
    let p = x_f.cols();
    let q = x_mu.cols();
    if x_mu.rows() != n || v_y_diag.len() != n {
        return Err(dim_err(format!(
            "{n} contrast rows vs {} trend rows vs {} row variances",
            x_mu.rows(),
            v_y_diag.len()
        )));
    }
    if v_mu.rows() != q || v_mu.cols() != q {
        return Err(dim_err(format!(
            "{}x{} trend covariance for a {q}-column trend design",
            v_mu.rows(),
            v_mu.cols()
        )));
    }
    for (i, v) in v_y_diag.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(EstimatorError::NonFinite {
                field: "row variance",
                index: i,
            });
        }
    }

    let bread = xtx_inverse(x_f)?;

    // Xfᵀ diag(v_y) Xf
    let mut meat = DenseMatrix::zeros(p, p);
    for i in 0..n {
        let row = x_f.row(i);
        let w = v_y_diag[i];
        for j in 0..p {
            let wj = w * row[j];
            for k in j..p {
                let v = meat.get(j, k) + wj * row[k];
                meat.set(j, k, v);
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            meat.set(j, k, meat.get(k, j));
        }
    }

    let a = x_f.transpose().matmul(x_mu)?;
    let trend_term = a.matmul(v_mu)?.matmul(&a.transpose())?;
    let mid = meat.add(&trend_term)?;
    let cov = bread.matmul(&mid)?.matmul(&bread)?;

    // symmetrize away the last bits of rounding
    let mut out = DenseMatrix::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            out.set(j, k, 0.5 * (cov.get(j, k) + cov.get(k, j)));
        }
    }
    Ok(out)
}

/// Quick per-coefficient variance read: treating the contrast columns
/// as independent instruments, each coefficient's variance is roughly
/// mean squared trend residual over n times the column variance. Useful
/// as a sanity scale, not a substitute for the full covariance.
pub fn variance_simple(
    obs: &ObservationSet,
    trend: &TrendFit,
    f_basis: &BasisSpec,
    noise_spec: &NoiseSpec,
) -> Result<Vec<f64>, EstimatorError> {
    f_basis.validate_feedback_role()?;
    super::two_stage::check_noise_consistency(obs.noise(), noise_spec)?;
    obs.require_rows(f_basis.dimension() + 2)?;

    let n = obs.len() as f64;
    let mu = trend.predict(obs.prior())?;
    let mean_sq = obs
        .next()
        .iter()
        .zip(&mu)
        .map(|(y, m)| (y - m) * (y - m))
        .sum::<f64>()
        / n;

    let design =
        super::two_stage::noise_contrast(obs, f_basis, noise_spec, &ConvolveOptions::default())?;
    let p = design.cols();
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = (0..obs.len()).map(|i| design.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            return Err(EstimatorError::DegenerateContrast {
                scale: noise_spec.kind.scale(),
                basis_dim: p,
                column: j,
            });
        }
        out.push(mean_sq / (n * var));
    }
    Ok(out)
}
