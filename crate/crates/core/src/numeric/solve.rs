use super::{DenseMatrix, NumericError};

/// Tolerance for declaring a design column linearly dependent: a column is
/// rejected when its norm after orthogonalization against the previous
/// columns drops below this fraction of its original norm.
const RANK_TOL: f64 = 1e-10;

/// Output of [`solve_least_squares`].
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// sigma_hat^2 (X'X)^-1 with sigma_hat^2 = RSS / (n - p).
    pub coefficient_covariance_classical: DenseMatrix,
    /// Heteroscedasticity-robust (X'X)^-1 X' diag(r_i^2) X (X'X)^-1, scaled
    /// by n/(n-p) so it coincides with the classical estimate when all
    /// residual magnitudes are equal.
    pub coefficient_covariance_sandwich: DenseMatrix,
}

/// Linear least squares by Householder QR.
///
/// QR rather than normal equations: the spline design columns can be nearly
/// collinear and the factorization keeps the rank check meaningful.
pub fn solve_least_squares(
    design: &DenseMatrix,
    response: &[f64],
) -> Result<LeastSquaresSolution, NumericError> {
    let n = design.rows();
    let p = design.cols();
    if response.len() != n {
        return Err(NumericError::DimensionMismatch {
            context: format!("response length {} vs {} design rows", response.len(), n),
        });
    }
    if let Some((index, &value)) = response.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(NumericError::NonFinite { index, value });
    }
    if n < p || p == 0 {
        return Err(NumericError::NotEnoughRows { rows: n, cols: p });
    }

    let mut a = design.clone();
    let mut qty = response.to_vec();
    let original_norms: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| design.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();

    // Householder triangularization; R accumulates in the upper triangle.
    for k in 0..p {
        let mut norm2 = 0.0;
        for i in k..n {
            norm2 += a.get(i, k) * a.get(i, k);
        }
        let norm = norm2.sqrt();
        if norm < RANK_TOL * original_norms[k] || norm == 0.0 {
            return Err(NumericError::RankDeficient { column: k });
        }
        let alpha = if a.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - k];
        v[0] = a.get(k, k) - alpha;
        for i in (k + 1)..n {
            v[i - k] = a.get(i, k);
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        a.set(k, k, alpha);
        for i in (k + 1)..n {
            a.set(i, k, 0.0);
        }
        if vtv == 0.0 {
            continue;
        }
        for j in (k + 1)..p {
            let dot: f64 = (k..n).map(|i| v[i - k] * a.get(i, j)).sum();
            let f = 2.0 * dot / vtv;
            for i in k..n {
                let val = a.get(i, j) - f * v[i - k];
                a.set(i, j, val);
            }
        }
        let dot: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum();
        let f = 2.0 * dot / vtv;
        for i in k..n {
            qty[i] -= f * v[i - k];
        }
    }

    // Back substitution: R beta = (Q'y)[..p].
    let mut coefficients = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in (k + 1)..p {
            s -= a.get(k, j) * coefficients[j];
        }
        coefficients[k] = s / a.get(k, k);
    }

    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            response[i]
                - design
                    .row(i)
                    .iter()
                    .zip(&coefficients)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
        })
        .collect();

    let xtx_inv = invert_from_r(&a, p);
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = n.saturating_sub(p);
    let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let coefficient_covariance_classical = xtx_inv.scaled(sigma2);

    // meat = X' diag(r_i^2) X
    let mut meat = DenseMatrix::zeros(p, p);
    for i in 0..n {
        let w = residuals[i] * residuals[i];
        if w == 0.0 {
            continue;
        }
        let row = design.row(i);
        for j in 0..p {
            let xj = row[j] * w;
            for l in j..p {
                let v = meat.get(j, l) + xj * row[l];
                meat.set(j, l, v);
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            meat.set(j, l, meat.get(l, j));
        }
    }
    let correction = if dof > 0 { n as f64 / dof as f64 } else { 0.0 };
    let coefficient_covariance_sandwich = xtx_inv
        .matmul(&meat)
        .and_then(|m| m.matmul(&xtx_inv))
        .expect("square factors")
        .scaled(correction);

    Ok(LeastSquaresSolution {
        coefficients,
        residuals,
        coefficient_covariance_classical,
        coefficient_covariance_sandwich,
    })
}

/// (X'X)^-1 via the QR factorization of X; used by the variance formulas
/// that need the inverse without a response vector.
pub fn xtx_inverse(design: &DenseMatrix) -> Result<DenseMatrix, NumericError> {
    let n = design.rows();
    let p = design.cols();
    if n < p || p == 0 {
        return Err(NumericError::NotEnoughRows { rows: n, cols: p });
    }
    let mut a = design.clone();
    let original_norms: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| design.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    for k in 0..p {
        let mut norm2 = 0.0;
        for i in k..n {
            norm2 += a.get(i, k) * a.get(i, k);
        }
        let norm = norm2.sqrt();
        if norm < RANK_TOL * original_norms[k] || norm == 0.0 {
            return Err(NumericError::RankDeficient { column: k });
        }
        let alpha = if a.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - k];
        v[0] = a.get(k, k) - alpha;
        for i in (k + 1)..n {
            v[i - k] = a.get(i, k);
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        a.set(k, k, alpha);
        if vtv == 0.0 {
            continue;
        }
        for j in (k + 1)..p {
            let dot: f64 = (k..n).map(|i| v[i - k] * a.get(i, j)).sum();
            let f = 2.0 * dot / vtv;
            for i in k..n {
                let val = a.get(i, j) - f * v[i - k];
                a.set(i, j, val);
            }
        }
    }
    Ok(invert_from_r(&a, p))
}

/// (X'X)^-1 = R^-1 R^-T from the triangular factor stored in `a`.
fn invert_from_r(a: &DenseMatrix, p: usize) -> DenseMatrix {
    let mut rinv = DenseMatrix::zeros(p, p);
    for col in 0..p {
        // solve R x = e_col
        let mut x = vec![0.0; p];
        for k in (0..=col).rev() {
            let mut s = if k == col { 1.0 } else { 0.0 };
            for j in (k + 1)..=col {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        for k in 0..p {
            rinv.set(k, col, x[k]);
        }
    }
    let mut out = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += rinv.get(i, k) * rinv.get(j, k);
            }
            out.set(i, j, s);
        }
    }
    out
}
