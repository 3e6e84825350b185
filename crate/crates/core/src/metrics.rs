//! Estimation-error metrics for fitted decompositions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sin_theta;
use crate::tensor::{DenseMatrix, DenseTensor};

fn same_dims(a: &DenseTensor, b: &DenseTensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Squared Frobenius distance `||b_hat - b_true||_F^2`.
pub fn mse(b_hat: &DenseTensor, b_true: &DenseTensor) -> Result<f64> {
    same_dims(b_hat, b_true)?;
    Ok(b_hat.values().iter().zip(b_true.values()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Per-mode sin-theta distance between estimated and true factor spans.
pub fn angle_errors(factors_hat: &[DenseMatrix], factors_true: &[DenseMatrix]) -> Result<Vec<f64>> {
    if factors_hat.len() != factors_true.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimated factors vs {} true factors",
            factors_hat.len(),
            factors_true.len()
        )));
    }
    factors_hat.iter().zip(factors_true).map(|(a, b)| sin_theta(a, b)).collect()
}

/// Pearson correlation of the vectorized tensors.
pub fn pearson(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.len() as f64;
    let mean_a = a.values().iter().sum::<f64>() / n;
    let mean_b = b.values().iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // spread at rounding level of the largest entry counts as constant
    let flat = |ss: f64, t: &DenseTensor| (ss / n).sqrt() <= 16.0 * f64::EPSILON * t.max_norm();
    if flat(saa, a) || flat(sbb, b) {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - Cor(y_hat_mean, mean_true)`, in `[0, 2]`.
pub fn response_error(y_hat_mean: &DenseTensor, mean_true: &DenseTensor) -> Result<f64> {
    Ok(1.0 - pearson(y_hat_mean, mean_true)?)
}

/// Summary of one fit against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_coefficient: f64,
    pub per_mode_sin_theta: Vec<f64>,
    pub max_sin_theta: f64,
    /// `None` when either mean tensor is constant.
    pub response_error: Option<f64>,
    pub final_objective: f64,
}

impl EvalReport {
    pub fn from_parts(
        b_hat: &DenseTensor,
        b_true: &DenseTensor,
        factors_hat: &[DenseMatrix],
        factors_true: &[DenseMatrix],
        mean_hat: &DenseTensor,
        mean_true: &DenseTensor,
        final_objective: f64,
    ) -> Result<Self> {
        let mse_coefficient = mse(b_hat, b_true)?;
        let per_mode_sin_theta = angle_errors(factors_hat, factors_true)?;
        let max_sin_theta = per_mode_sin_theta.iter().copied().fold(0.0, f64::max);
        let response_error = match response_error(mean_hat, mean_true) {
            Ok(v) => Some(v),
            Err(Error::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { mse_coefficient, per_mode_sin_theta, max_sin_theta, response_error, final_objective })
    }
}
