//! Closed-form ridge regression.
//!
//! Minimizes `sum_m (y_m - beta.x_m - b)^2 + lambda * |beta|^2`. The bias `b`
//! is optional and never penalized. The `(D+1) x (D+1)` normal equations are
//! positive definite for any `lambda > 0`, including `k < D`, and are solved
//! with a Cholesky factorization.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot fit on an empty training set")]
    EmptyTrainingSet,
    #[error("lambda must be a positive finite number, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations are not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: f64,
    /// Fit an unregularized intercept.
    pub bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Array1<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn zeros(dim: usize, lambda: f64) -> Self {
        Self {
            coefficients: Array1::zeros(dim),
            bias: 0.0,
            lambda,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> f64 {
        self.coefficients.dot(&x) + self.bias
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
        if x.ncols() != self.dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "model has {} coefficients, input has {} columns",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.coefficients) + self.bias)
    }
}

pub fn ridge_fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    config: &ModelConfig,
) -> Result<RidgeModel, ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} rows in X but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    ridge_fit_rows(x, y, &rows, config)
}

/// Fits on the listed rows of `x`/`y`. Rows may repeat (bootstrap resamples).
pub fn ridge_fit_rows(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    rows: &[usize],
    config: &ModelConfig,
) -> Result<RidgeModel, ModelError> {
    let lambda = config.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ModelError::InvalidLambda(lambda));
    }
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} rows in X but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let d = x.ncols();
    let p = if config.bias { d + 1 } else { d };

    // Augmented normal equations; the last row/column is the intercept.
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for &r in rows {
        let xr = x.row(r);
        let yr = y[r];
        for i in 0..d {
            let xi = xr[i];
            rhs[i] += xi * yr;
            for j in 0..=i {
                gram[(i, j)] += xi * xr[j];
            }
            if config.bias {
                gram[(d, i)] += xi;
            }
        }
        if config.bias {
            gram[(d, d)] += 1.0;
            rhs[d] += yr;
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    for i in 0..d {
        gram[(i, i)] += lambda;
    }

    let chol = gram.cholesky().ok_or(ModelError::NotPositiveDefinite)?;
    let sol = chol.solve(&rhs);
    Ok(RidgeModel {
        coefficients: Array1::from_iter(sol.iter().take(d).copied()),
        bias: if config.bias { sol[d] } else { 0.0 },
        lambda,
    })
}
