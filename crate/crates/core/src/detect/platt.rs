use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-parameter logistic map `P(cloud | Q) = 1 / (1 + exp(beta0 * Q + beta1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub beta0: f64,
    pub beta1: f64,
}

impl CalibrationParams {
    pub fn probability(&self, q: f64) -> f64 {
        crate::tensor::sigmoid(-(self.beta0 * q + self.beta1))
    }

    pub fn is_finite(&self) -> bool {
        self.beta0.is_finite() && self.beta1.is_finite()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if !p.is_finite() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: "calibration parameters must be finite".into(),
            });
        }
        Ok(p)
    }
}

#[derive(Clone, Debug)]
pub struct PlattFit {
    pub params: CalibrationParams,
    /// Mean log-likelihood before the first step and after each accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

/// `ln P` and `ln(1 - P)` for `P = sigmoid(-z)`, computed without overflow.
fn log_probs(z: f64) -> (f64, f64) {
    // ln(1 + e^z)
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    (-softplus, z - softplus)
}

fn mean_ll(beta: [f64; 2], q: &[f64], y: &[u8]) -> f64 {
    let total: f64 = q
        .iter()
        .zip(y)
        .map(|(&qi, &yi)| {
            let (lp, lq) = log_probs(beta[0] * qi + beta[1]);
            if yi == 1 {
                lp
            } else {
                lq
            }
        })
        .sum();
    total / q.len() as f64
}

/// Maximum-likelihood Platt fit by damped Newton iterations.
///
/// `labels` are 1 for cloud. Both classes must be present.
pub fn fit_platt(qualities: &[f64], labels: &[u8]) -> Result<PlattFit> {
    if qualities.len() != labels.len() {
        return Err(Error::invalid(
            "fit_platt",
            format!("{} scores vs {} labels", qualities.len(), labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid("fit_platt", format!("label {bad} is not 0 or 1")));
    }
    if qualities.iter().any(|q| !q.is_finite()) {
        return Err(Error::invalid("fit_platt", "non-finite score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let n = labels.len() as f64;
    // Start at the prior: P = pos / n everywhere.
    let mut beta = [0.0, (neg as f64 / pos as f64).ln()];
    let mut ll = mean_ll(beta, qualities, labels);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&q, &y) in qualities.iter().zip(labels) {
            let p = crate::tensor::sigmoid(-(beta[0] * q + beta[1]));
            let r = p - f64::from(y);
            g0 += r * q;
            g1 += r;
            let w = p * (1.0 - p);
            h00 += w * q * q;
            h01 += w * q;
            h11 += w;
        }
        let (g0, g1) = (g0 / n, g1 / n);
        if g0.hypot(g1) < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        // Newton direction on the negated Hessian, which is positive semidefinite.
        let (h00, h01, h11) = (h00 / n, h01 / n, h11 / n);
        let det = h00 * h11 - h01 * h01;
        let (d0, d1) = if det > 1e-300 {
            ((h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det)
        } else {
            (g0, g1)
        };
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            let cand = [beta[0] + step * d0, beta[1] + step * d1];
            let cand_ll = mean_ll(cand, qualities, labels);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent possible at machine precision.
            converged = true;
            break;
        }
        history.push(ll);
    }
    let params = CalibrationParams {
        beta0: beta[0],
        beta1: beta[1],
    };
    if !params.is_finite() {
        return Err(Error::invalid("fit_platt", "fit diverged"));
    }
    Ok(PlattFit {
        params,
        history,
        iterations,
        converged,
    })
}
