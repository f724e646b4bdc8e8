//! Linear runtime models fitted by least squares on the normal equations.
//!
//! Designs here are tiny (a handful of features, at most a few thousand rows),
//! so the solver builds an m x m Gram system and eliminates it directly. The
//! ridge penalty applies to the feature weights only, never to the bias.
//! Because the bias is unpenalized, the fit is computed on mean-centered data
//! with the bias recovered afterwards as mean(y) - weights . mean(x); the two
//! formulations share the same minimizer, but centering avoids the cancellation
//! that makes the bias-augmented Gram system nearly singular whenever feature
//! values repeat. A lone observation is reproduced exactly: the penalty zeroes
//! the slopes and the bias absorbs the value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("no observations to fit or evaluate")]
    EmptyData,
    #[error("inconsistent feature arity: expected {expected}, got {actual}")]
    InconsistentFeatures { expected: usize, actual: usize },
    #[error("actual values have zero variance; r-squared is undefined")]
    ZeroVariance,
    #[error("design matrix is singular; add a ridge penalty or more data")]
    SingularDesign,
}

/// Runtime model: predicted seconds = weights . x + bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// The cold-start model: predicts 0 for every input.
    pub fn zero(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, RegressionError> {
        if x.len() != self.weights.len() {
            return Err(RegressionError::InconsistentFeatures {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        let dot: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        Ok(dot + self.bias)
    }
}

/// Fits `y ~ w.x + b` by least squares over `(features, runtime)` pairs.
///
/// `ridge_lambda` is added to the diagonal of the weight block of the normal
/// equations. With a positive lambda the system is always solvable; with
/// lambda = 0 a rank-deficient design returns [`RegressionError::SingularDesign`].
pub fn fit_least_squares(
    data: &[(Vec<f64>, f64)],
    ridge_lambda: f64,
) -> Result<LinearModel, RegressionError> {
    if data.is_empty() {
        return Err(RegressionError::EmptyData);
    }
    let m = data[0].0.len();
    for (x, _) in data {
        if x.len() != m {
            return Err(RegressionError::InconsistentFeatures {
                expected: m,
                actual: x.len(),
            });
        }
    }

    let n = data.len() as f64;
    let mut x_mean = vec![0.0f64; m];
    let mut y_mean = 0.0f64;
    for (x, y) in data {
        for (mean, value) in x_mean.iter_mut().zip(x) {
            *mean += value;
        }
        y_mean += y;
    }
    for mean in &mut x_mean {
        *mean /= n;
    }
    y_mean /= n;

    // Centered Gram system: (Xc' Xc + lambda I) w = Xc' yc.
    let mut a = vec![vec![0.0f64; m]; m];
    let mut b = vec![0.0f64; m];
    for (x, y) in data {
        let yc = y - y_mean;
        for i in 0..m {
            let xi = x[i] - x_mean[i];
            for j in i..m {
                a[i][j] += xi * (x[j] - x_mean[j]);
            }
            b[i] += xi * yc;
        }
    }
    for i in 0..m {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
        a[i][i] += ridge_lambda;
    }

    let weights = solve(a, b, ridge_lambda).ok_or(RegressionError::SingularDesign)?;
    let bias = y_mean
        - weights
            .iter()
            .zip(&x_mean)
            .map(|(w, mean)| w * mean)
            .sum::<f64>();
    Ok(LinearModel { weights, bias })
}

/// Gaussian elimination with partial pivoting on a small dense system.
///
/// With a positive ridge the matrix is positive definite and every pivot
/// should stay near or above the ridge; a pivot far below it means
/// cancellation has eaten the regularization, so the solve is refused rather
/// than returning noise. Without a ridge, a pivot tiny relative to the matrix
/// scale marks a genuinely singular design.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, ridge_lambda: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let min_pivot = if ridge_lambda > 0.0 {
        ridge_lambda * 1e-3
    } else {
        scale * 1e-13
    };
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= min_pivot {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Root mean squared error of predictions against actuals.
pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64, RegressionError> {
    if predictions.len() != actuals.len() {
        return Err(RegressionError::InconsistentFeatures {
            expected: actuals.len(),
            actual: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(RegressionError::EmptyData);
    }
    let mse: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Coefficient of determination. Can be arbitrarily negative for models worse
/// than predicting the mean; errors when the actuals carry no variance at all.
pub fn r_squared(predictions: &[f64], actuals: &[f64]) -> Result<f64, RegressionError> {
    if predictions.len() != actuals.len() {
        return Err(RegressionError::InconsistentFeatures {
            expected: actuals.len(),
            actual: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(RegressionError::EmptyData);
    }
    let mean: f64 = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let ss_tot: f64 = actuals.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(RegressionError::ZeroVariance);
    }
    let ss_res: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
