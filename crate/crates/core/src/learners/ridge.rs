//! Ridge regression with internal feature standardization.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

use super::FeatureMatrix;

/// Raw-scale coefficients: `prediction = intercept + x . coefficients`.
/// Zero-variance features carry a zero coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Fits `y ~ x` with an L2 penalty of `lambda` on the standardized
/// coefficients. Features are centred and scaled internally so the penalty
/// is comparable across units; the returned coefficients are mapped back to
/// the raw scale.
pub fn fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = x.n_rows();
    let d = x.n_features();
    let y_mean = crate::stats::mean(y);

    // Standardization statistics; constant columns are excluded from the
    // solve and contribute only through the intercept.
    let mut means = vec![0.0; d];
    let mut sds = vec![0.0; d];
    let mut active = Vec::new();
    for j in 0..d {
        let col = x.column(j);
        let m = crate::stats::mean(col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        means[j] = m;
        sds[j] = var.sqrt();
        if sds[j] > 0.0 {
            active.push(j);
        }
    }

    if active.is_empty() {
        if lambda == 0.0 {
            return Err(Error::LearnerRank {
                message: "no varying features and zero penalty".to_string(),
            });
        }
        return Ok(RidgeModel {
            intercept: y_mean,
            coefficients: vec![0.0; d],
        });
    }

    let k = active.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    // standardized column j: (x_j - mean_j) / sd_j
    for (a, &ja) in active.iter().enumerate() {
        let ca = x.column(ja);
        for (b, &jb) in active.iter().enumerate().skip(a) {
            let cb = x.column(jb);
            let mut s = 0.0;
            for i in 0..n {
                s += (ca[i] - means[ja]) * (cb[i] - means[jb]);
            }
            let g = s / (sds[ja] * sds[jb]);
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += (ca[i] - means[ja]) * (y[i] - y_mean);
        }
        rhs[a] = s / sds[ja];
    }
    for a in 0..k {
        gram[(a, a)] += lambda;
    }

    let beta_std = solve_spd(gram, rhs)?;

    let mut coefficients = vec![0.0; d];
    let mut intercept = y_mean;
    for (a, &j) in active.iter().enumerate() {
        let raw = beta_std[a] / sds[j];
        coefficients[j] = raw;
        intercept -= raw * means[j];
    }
    Ok(RidgeModel {
        intercept,
        coefficients,
    })
}

fn solve_spd(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    match gram.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => {
            // Cholesky fails only for singular (lambda = 0) systems; fall
            // back to QR and reject genuinely rank-deficient designs.
            let qr = gram.qr();
            let r = qr.r();
            let diag_max = (0..r.nrows()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
            for i in 0..r.nrows() {
                if r[(i, i)].abs() < 1e-12 * diag_max.max(1e-300) {
                    return Err(Error::LearnerRank {
                        message: "collinear features with zero penalty".to_string(),
                    });
                }
            }
            qr.solve(&rhs).ok_or_else(|| Error::LearnerRank {
                message: "singular normal equations".to_string(),
            })
        }
    }
}

impl RidgeModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|i| {
                let mut p = self.intercept;
                for (j, c) in self.coefficients.iter().enumerate() {
                    p += c * x.value(i, j);
                }
                p
            })
            .collect()
    }
}
