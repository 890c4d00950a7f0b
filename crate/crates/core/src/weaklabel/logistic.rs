//! L2-regularized logistic regression fitted by damped Newton iterations.
//!
//! Features are z-scored with training statistics before fitting; the
//! fitted weights are mapped back to raw feature space so that prediction
//! is `sigmoid(weights . x + bias)` on unstandardized inputs. The
//! statistics are kept with the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            feature_mean: vec![0.0; dim],
            feature_std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        if self.feature_mean.len() != d || self.feature_std.len() != d {
            return Err(Error::Shape("standardization statistics do not match weights".into()));
        }
        let finite = self.weights.iter().chain(&self.feature_mean).chain(&self.feature_std).all(|v| v.is_finite());
        if !finite || !self.bias.is_finite() {
            return Err(Error::Validation("non-finite model parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Objective value before the first and after every accepted Newton step.
    pub losses: Vec<f64>,
    pub converged: bool,
}

pub const FIT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200;

struct Standardized {
    rows: Vec<Vec<f64>>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn standardize(x: &[Vec<f64>]) -> Standardized {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for row in x {
        for j in 0..d {
            std[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let rows = x
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]).collect())
        .collect();
    Standardized { rows, mean, std }
}

/// Mean negative log-likelihood plus `reg/2 * |w|^2` in standardized space.
fn objective(z: &[Vec<f64>], y: &[f64], theta: &[f64], reg: f64) -> f64 {
    let d = theta.len() - 1;
    let n = z.len() as f64;
    let nll: f64 = z
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let s = row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
            softplus(s) - t * s
        })
        .sum::<f64>()
        / n;
    nll + 0.5 * reg * theta[..d].iter().map(|w| w * w).sum::<f64>()
}

/// Solves `a x = b` for symmetric positive-definite `a` (row-major, n x n).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Fits a logistic model to targets in [0,1] (hard or soft).
pub fn fit(x: &[Vec<f64>], y: &[f64], reg: f64) -> Result<(LogisticModel, FitReport)> {
    let d = x.first().map_or(0, Vec::len);
    fit_from(x, y, reg, &vec![0.0; d + 1])
}

/// Like [`fit`], starting from `init` = standardized weights followed by bias.
pub fn fit_from(x: &[Vec<f64>], y: &[f64], reg: f64, init: &[f64]) -> Result<(LogisticModel, FitReport)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Validation(format!("{} feature rows for {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || init.len() != d + 1 {
        return Err(Error::Shape("ragged feature rows or init".into()));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::Validation(format!("reg_strength {reg} must be finite and non-negative")));
    }
    if y.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Validation("targets must lie in [0,1]".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite feature value".into()));
    }

    let st = standardize(x);
    let z = &st.rows;
    let n = z.len() as f64;
    let p = d + 1;
    let mut theta = init.to_vec();
    let mut loss = objective(z, y, &theta, reg);
    let mut losses = vec![loss];
    let mut converged = false;

    for _ in 0..MAX_ITERATIONS {
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for (row, &t) in z.iter().zip(y) {
            let s = row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
            let prob = sigmoid(s);
            let r = (prob - t) / n;
            let w = prob * (1.0 - prob) / n;
            for i in 0..p {
                let zi = if i < d { row[i] } else { 1.0 };
                grad[i] += r * zi;
                for j in 0..=i {
                    let zj = if j < d { row[j] } else { 1.0 };
                    hess[i * p + j] += w * zi * zj;
                }
            }
        }
        for i in 0..d {
            grad[i] += reg * theta[i];
            hess[i * p + i] += reg;
        }
        for i in 0..p {
            hess[i * p + i] += 1e-12;
            for j in 0..i {
                hess[j * p + i] = hess[i * p + j];
            }
        }
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < FIT_TOLERANCE {
            converged = true;
            break;
        }
        let step = match cholesky_solve(&hess, &grad, p) {
            Some(s) => s,
            None => grad.clone(),
        };
        let mut scale = 1.0;
        let mut accepted = false;
        while scale > 1e-12 {
            let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - scale * s).collect();
            let c_loss = objective(z, y, &candidate, reg);
            if c_loss <= loss {
                let improvement = loss - c_loss;
                theta = candidate;
                loss = c_loss;
                losses.push(loss);
                accepted = true;
                if improvement < 1e-15 {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }

    let mut weights = vec![0.0; d];
    let mut bias = theta[d];
    for j in 0..d {
        weights[j] = theta[j] / st.std[j];
        bias -= theta[j] * st.mean[j] / st.std[j];
    }
    let model = LogisticModel {
        weights,
        bias,
        feature_mean: st.mean,
        feature_std: st.std,
    };
    Ok((model, FitReport { losses, converged }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raw_space_prediction_matches_standardized_fit() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 3.0 + 100.0, ((i * 7) % 11) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if (i * 13) % 5 < 2 { 1.0 } else { 0.0 }).collect();
        let (model, report) = fit(&x, &y, 0.1).unwrap();
        assert!(report.converged);
        // Recompute the prediction through standardized space.
        let st = standardize(&x);
        let w_z: Vec<f64> = model.weights.iter().zip(&st.std).map(|(w, s)| w * s).collect();
        let b_z = model.bias + w_z.iter().zip(&st.mean).zip(&st.std).map(|((w, m), s)| w * m / s).sum::<f64>();
        for (row, zrow) in x.iter().zip(&st.rows) {
            let s_z = zrow.iter().zip(&w_z).map(|(a, b)| a * b).sum::<f64>() + b_z;
            assert!((model.logit(row) - s_z).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_targets_are_accepted() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let (model, _) = fit(&x, &y, 0.0).unwrap();
        assert!(model.weights[0] > 0.0);
    }
}
