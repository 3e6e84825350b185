//! Exponential families with canonical links and a damped Newton (IRLS)
//! solver for the GLM sub-problems of the alternating fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentialFamily {
    Gaussian,
    Bernoulli,
    Poisson,
}

impl fmt::Display for ExponentialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Bernoulli => "bernoulli",
            Self::Poisson => "poisson",
        })
    }
}

impl FromStr for ExponentialFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "bernoulli" | "binary" | "logistic" => Ok(Self::Bernoulli),
            "poisson" | "count" => Ok(Self::Poisson),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

impl ExponentialFamily {
    pub const ALL: [ExponentialFamily; 3] = [Self::Gaussian, Self::Bernoulli, Self::Poisson];

    /// Cumulant function.
    pub fn b(self, theta: f64) -> f64 {
        match self {
            Self::Gaussian => 0.5 * theta * theta,
            Self::Poisson => theta.exp(),
            Self::Bernoulli => {
                if theta > 0.0 {
                    theta + (-theta).exp().ln_1p()
                } else {
                    theta.exp().ln_1p()
                }
            }
        }
    }

    /// Canonical link (mean as a function of the natural parameter).
    pub fn b_prime(self, theta: f64) -> f64 {
        match self {
            Self::Gaussian => theta,
            Self::Poisson => theta.exp(),
            Self::Bernoulli => sigmoid(theta),
        }
    }

    pub fn b_double_prime(self, theta: f64) -> f64 {
        match self {
            Self::Gaussian => 1.0,
            Self::Poisson => theta.exp(),
            Self::Bernoulli => {
                let s = sigmoid(theta);
                s * (1.0 - s)
            }
        }
    }

    /// Mean of the response for natural parameter `theta`.
    pub fn mean(self, theta: f64) -> f64 {
        self.b_prime(theta)
    }

    /// Checks that every response value lies in the family's domain.
    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        for (index, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(index));
            }
            match self {
                Self::Gaussian => {}
                Self::Bernoulli if v != 0.0 && v != 1.0 => {
                    return Err(Error::Domain {
                        index,
                        message: format!("bernoulli response must be 0 or 1, got {v}"),
                    })
                }
                Self::Poisson if v < 0.0 || v.fract() != 0.0 => {
                    return Err(Error::Domain {
                        index,
                        message: format!("poisson response must be a nonnegative integer, got {v}"),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `sum_i y_i theta_i - b(theta_i)` over paired slices.
    pub fn loglik_sum(self, y: &[f64], theta: &[f64]) -> f64 {
        y.iter()
            .zip(theta)
            .map(|(&yi, &t)| yi * t - self.b(t))
            .sum()
    }
}

/// Quasi log-likelihood `<Y, Theta> - sum b(theta)` with unit dispersion.
pub fn quasi_loglik(fam: ExponentialFamily, y: &DenseTensor, theta: &DenseTensor) -> Result<f64> {
    if y.dims() != theta.dims() {
        return Err(Error::ShapeMismatch(format!(
            "response dims {:?} vs predictor dims {:?}",
            y.dims(),
            theta.dims()
        )));
    }
    fam.validate_response(y.values())?;
    Ok(fam.loglik_sum(y.values(), theta.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    pub max_newton_iters: usize,
    /// Relative objective-change tolerance.
    pub tol: f64,
    /// Bound on `max |eta|`; `None` means unbounded.
    pub predictor_bound: Option<f64>,
    /// Relative ridge: `ridge * trace(H) / cols` is added to the Newton system.
    pub ridge: f64,
    pub max_halvings: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            max_newton_iters: 25,
            tol: 1e-8,
            predictor_bound: Some(1e4),
            ridge: 1e-8,
            max_halvings: 20,
        }
    }
}

impl GlmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_newton_iters == 0 {
            return Err(Error::InvalidConfig("max_newton_iters must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("GLM tolerance must be positive".into()));
        }
        if let Some(a) = self.predictor_bound {
            if !(a > 0.0) {
                return Err(Error::InvalidConfig("predictor bound must be positive".into()));
            }
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be nonnegative".into()));
        }
        Ok(())
    }

    fn bound(&self) -> f64 {
        self.predictor_bound.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmResult {
    pub coefficients: Vec<f64>,
    pub final_objective: f64,
    pub converged: bool,
    pub n_iters: usize,
    /// Some trial step was rejected for leaving the predictor bound.
    pub hit_bound: bool,
    /// No ascent step was found and the last rejection was a non-finite
    /// objective (separation or divergence).
    pub failed: bool,
    /// Objective at the start point and after every accepted step.
    pub objective_path: Vec<f64>,
}

/// A linear map from coefficients to the linear predictor, together with
/// the adjoint and weighted Gram products Newton's method needs. Row order
/// is the order in which the response vector is supplied.
pub trait LinearDesign {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `D beta`
    fn mul_vec(&self, beta: &[f64]) -> Vec<f64>;
    /// `D^T r`
    fn tr_mul_vec(&self, resid: &[f64]) -> Vec<f64>;
    /// `D^T diag(w) D`
    fn weighted_gram(&self, w: &[f64]) -> DenseMatrix;
}

impl LinearDesign for DenseMatrix {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (self * DVector::from_column_slice(beta)).as_slice().to_vec()
    }

    fn tr_mul_vec(&self, resid: &[f64]) -> Vec<f64> {
        self.tr_mul(&DVector::from_column_slice(resid))
            .as_slice()
            .to_vec()
    }

    fn weighted_gram(&self, w: &[f64]) -> DenseMatrix {
        let mut scaled = self.clone();
        for (mut row, &wi) in scaled.row_iter_mut().zip(w) {
            row *= wi;
        }
        self.tr_mul(&scaled)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_newton_system(mut h: DenseMatrix, grad: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let n = h.nrows();
    let trace: f64 = (0..n).map(|i| h[(i, i)]).sum();
    let scale = if trace > 0.0 && trace.is_finite() { trace / n as f64 } else { 1.0 };
    let mut lambda = ridge * scale;
    let g = DVector::from_column_slice(grad);
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += lambda;
        }
        if let Some(ch) = Cholesky::new(hr) {
            let step = ch.solve(&g);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step.as_slice().to_vec());
            }
        }
        lambda = if lambda > 0.0 { lambda * 100.0 } else { 1e-10 * scale };
    }
    // last resort: symmetrize and use a pseudo-inverse
    h = (&h + h.transpose()) * 0.5;
    let pinv = h.pseudo_inverse(1e-12).ok()?;
    Some((pinv * g).as_slice().to_vec())
}

/// Maximizes `sum_i y_i eta_i - b(eta_i)` with `eta = design * beta`.
pub fn solve_glm(
    fam: ExponentialFamily,
    y: &[f64],
    design: &DenseMatrix,
    warm_start: Option<&[f64]>,
    opts: &GlmOptions,
) -> Result<GlmResult> {
    solve_glm_with(fam, y, design, warm_start, opts)
}

/// [`solve_glm`] over any [`LinearDesign`].
pub fn solve_glm_with<D: LinearDesign + ?Sized>(
    fam: ExponentialFamily,
    y: &[f64],
    design: &D,
    warm_start: Option<&[f64]>,
    opts: &GlmOptions,
) -> Result<GlmResult> {
    opts.validate()?;
    let rows = design.nrows();
    let cols = design.ncols();
    if y.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "response has {} entries, design has {rows} rows",
            y.len()
        )));
    }
    let bound = opts.bound();

    let zero = vec![0.0; cols];
    let mut beta = match warm_start {
        Some(w) if w.len() != cols => {
            return Err(Error::ShapeMismatch(format!(
                "warm start has {} coefficients, design has {cols} columns",
                w.len()
            )))
        }
        Some(w) => w.to_vec(),
        None => zero.clone(),
    };
    let mut eta = design.mul_vec(&beta);
    // the predictor is linear in beta, so shrinking restores feasibility
    let peak = max_abs(&eta);
    if peak > bound && peak.is_finite() {
        let shrink = bound / peak * (1.0 - 1e-12);
        beta.iter_mut().for_each(|b| *b *= shrink);
        eta = design.mul_vec(&beta);
    }
    let mut obj = fam.loglik_sum(y, &eta);
    if !obj.is_finite() || max_abs(&eta) > bound {
        beta = zero;
        eta = vec![0.0; rows];
        obj = fam.loglik_sum(y, &eta);
    }

    let mut path = vec![obj];
    let mut converged = false;
    let mut hit_bound = false;
    let mut failed = false;
    let mut n_iters = 0;
    while n_iters < opts.max_newton_iters {
        n_iters += 1;
        let resid: Vec<f64> = y.iter().zip(&eta).map(|(&yi, &e)| yi - fam.b_prime(e)).collect();
        let weights: Vec<f64> = eta.iter().map(|&e| fam.b_double_prime(e)).collect();
        let grad = design.tr_mul_vec(&resid);
        let h = design.weighted_gram(&weights);
        let Some(step) = solve_newton_system(h, &grad, opts.ridge) else {
            failed = true;
            break;
        };
        let predicted: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();

        let mut t = 1.0;
        let mut accepted = None;
        let mut last_nonfinite = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_eta = design.mul_vec(&cand);
            if max_abs(&cand_eta) > bound {
                hit_bound = true;
                last_nonfinite = false;
            } else {
                let cand_obj = fam.loglik_sum(y, &cand_eta);
                if !cand_obj.is_finite() {
                    last_nonfinite = true;
                } else if cand_obj >= obj {
                    accepted = Some((cand, cand_eta, cand_obj));
                    break;
                } else {
                    last_nonfinite = false;
                }
            }
            t *= 0.5;
        }

        match accepted {
            Some((cand, cand_eta, cand_obj)) => {
                let change = (cand_obj - obj).abs() / obj.abs().max(1.0);
                beta = cand;
                eta = cand_eta;
                obj = cand_obj;
                path.push(obj);
                // the ridge biases each step slightly, so even the quadratic
                // Gaussian case takes a second, refining step
                if change < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // no ascent within rounding: stationary if the Newton
                // decrement is already negligible
                if predicted.abs() <= opts.tol * obj.abs().max(1.0) {
                    converged = true;
                } else if last_nonfinite {
                    failed = true;
                }
                break;
            }
        }
    }

    Ok(GlmResult {
        coefficients: beta,
        final_objective: obj,
        converged,
        n_iters,
        hit_bound,
        failed,
        objective_path: path,
    })
}
