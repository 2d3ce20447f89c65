//! L2-regularised logistic regression.
//!
//! Minimises `C · Σ logloss(yᵢ, w·xᵢ + b) + ½‖w‖²` (intercept unpenalised)
//! with damped Newton steps and a backtracking line search. Iteration stops
//! once the largest parameter update drops below the tolerance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tabular::Dataset;

use super::preprocess::Preprocessor;
use super::Config;

pub const TOLERANCE: f64 = 1e-6;
/// Used when a config does not set `max_iter`.
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegParams {
    pub c: f64,
    pub max_iter: usize,
}

impl LogRegParams {
    pub fn from_config(config: &Config) -> Result<Self> {
        let c = config.get("C").copied().unwrap_or(1.0);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("logistic regression C = {c}")));
        }
        let max_iter = config
            .get("max_iter")
            .map(|m| m.max(1.0) as usize)
            .unwrap_or(DEFAULT_MAX_ITER);
        Ok(LogRegParams { c, max_iter })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pre: Preprocessor,
    weights: Vec<f64>,
    intercept: f64,
    positive: String,
    negative: String,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    c: f64,
    d: usize,
}

impl Problem<'_> {
    /// Parameter layout: `[w₀ … w_{d-1}, b]`.
    fn margin(&self, theta: &[f64], row: &[f64]) -> f64 {
        row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[self.d]
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let loss: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(row, &y)| {
                let z = self.margin(theta, row);
                // -[y log σ(z) + (1-y) log(1-σ(z))]
                log1p_exp(z) - y * z
            })
            .sum();
        self.c * loss + 0.5 * theta[..self.d].iter().map(|w| w * w).sum::<f64>()
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.d + 1;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        let mut ext = vec![1.0; p];
        for (row, &y) in self.x.iter().zip(self.y) {
            ext[..self.d].copy_from_slice(row);
            let s = sigmoid(self.margin(theta, row));
            let r = self.c * (s - y);
            let wgt = self.c * s * (1.0 - s);
            for i in 0..p {
                g[i] += r * ext[i];
                let wi = wgt * ext[i];
                for j in 0..=i {
                    h[(i, j)] += wi * ext[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        for i in 0..self.d {
            g[i] += theta[i];
            h[(i, i)] += 1.0;
        }
        // keeps the intercept block invertible when every point is separated
        h[(self.d, self.d)] += 1e-10;
        (g, h)
    }
}

/// Fits the built-in logistic regression. `positive` is the label coded 1;
/// the training data must contain exactly one other label.
pub fn train_builtin_logreg(train: &Dataset, params: LogRegParams, positive: &str) -> Result<LogRegModel> {
    let labels = train.labels();
    let negative = train
        .label_set()
        .into_iter()
        .find(|l| l != positive)
        .ok_or_else(|| Error::Training("training rows contain a single class".into()))?;
    if !labels.iter().any(|l| l == positive) {
        return Err(Error::Training(format!("no `{positive}` rows in training data")));
    }
    let pre = Preprocessor::fit(train);
    let x = pre.transform(train);
    let y: Vec<f64> = labels.iter().map(|l| (l == positive) as u8 as f64).collect();
    let d = pre.n_features();
    let prob = Problem { x: &x, y: &y, c: params.c, d };

    let mut theta = vec![0.0; d + 1];
    let mut f = prob.objective(&theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let (g, h) = prob.gradient_hessian(&theta);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        // backtracking on the Armijo condition
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fc = prob.objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        let change = theta
            .iter()
            .zip(&cand)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = cand;
        f = fc;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "logistic regression did not converge in {} iterations (C = {})",
            params.max_iter,
            params.c
        );
    }
    let intercept = theta[d];
    theta.truncate(d);
    Ok(LogRegModel {
        pre,
        weights: theta,
        intercept,
        positive: positive.to_string(),
        negative,
        iterations,
        converged,
    })
}

impl LogRegModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn decision_function(&self, ds: &Dataset) -> Vec<f64> {
        self.pre
            .transform(ds)
            .iter()
            .map(|row| row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect()
    }

    pub fn predict(&self, ds: &Dataset) -> Vec<String> {
        self.decision_function(ds)
            .into_iter()
            .map(|z| if z > 0.0 { self.positive.clone() } else { self.negative.clone() })
            .collect()
    }
}
