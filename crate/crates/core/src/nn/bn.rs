//! Batch normalization with running statistics.
//!
//! Train mode normalizes with the statistics of the current batch (biased
//! variance) and folds them into the running estimates; eval mode normalizes
//! with the running estimates and leaves them untouched.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Running statistics of one batch-normalized layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnLayerStats {
    /// Index of the hidden layer this entry belongs to.
    pub layer: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BnLayerStats {
    pub fn new(layer: usize, width: usize) -> Self {
        Self {
            layer,
            mean: vec![0.0; width],
            var: vec![1.0; width],
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.var.len() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "bn layer {}: mean/var lengths differ",
                self.layer
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "bn layer {}: epsilon must be positive",
                self.layer
            )));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "bn layer {}: momentum must lie in (0,1)",
                self.layer
            )));
        }
        if self.var.iter().any(|v| !v.is_finite() || *v < 0.0) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("bn layer {} statistics", self.layer)));
        }
        Ok(())
    }

    fn bitwise_eq(&self, other: &Self) -> bool {
        let eq = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.layer == other.layer
            && eq(&self.mean, &other.mean)
            && eq(&self.var, &other.var)
            && self.epsilon.to_bits() == other.epsilon.to_bits()
            && self.momentum.to_bits() == other.momentum.to_bits()
    }
}

/// Running statistics for every batch-normalized layer of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BnStats {
    pub layers: Vec<BnLayerStats>,
}

impl BnStats {
    pub fn layer(&self, layer: usize) -> Option<&BnLayerStats> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len() && self.layers.iter().zip(&other.layers).all(|(a, b)| a.bitwise_eq(b))
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub(crate) normalized: Matrix,
    pub(crate) inv_std: Vec<f64>,
    pub(crate) mode: Mode,
}

/// Applies batch normalization to `x` (rows are samples, columns are features).
///
/// Returns the output, the (possibly updated) statistics and a cache for
/// [`bn_backward`].
pub fn bn_forward(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    stats: &BnLayerStats,
    mode: Mode,
) -> Result<(Matrix, BnLayerStats, BnCache)> {
    let d = x.cols();
    if gamma.len() != d || beta.len() != d || stats.width() != d {
        return Err(Error::Dimension(format!(
            "bn layer {} has width {} but input has {d} features",
            stats.layer,
            stats.width()
        )));
    }
    let n = x.rows();
    let mut updated = stats.clone();
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::DegenerateBatch { rows: n });
            }
            let mut mean = x.col_sums();
            for m in &mut mean {
                *m /= n as f64;
            }
            let mut var = vec![0.0; d];
            for r in 0..n {
                for ((v, xi), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    let c = xi - m;
                    *v += c * c;
                }
            }
            for v in &mut var {
                *v /= n as f64;
            }
            let mom = stats.momentum;
            for j in 0..d {
                updated.mean[j] = (1.0 - mom) * stats.mean[j] + mom * mean[j];
                updated.var[j] = (1.0 - mom) * stats.var[j] + mom * var[j];
            }
            (mean, var)
        }
        Mode::Eval => (stats.mean.clone(), stats.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.epsilon).sqrt()).collect();
    let mut normalized = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    for r in 0..n {
        let xr = x.row(r);
        for j in 0..d {
            let h = (xr[j] - mean[j]) * inv_std[j];
            normalized.set(r, j, h);
            y.set(r, j, gamma[j] * h + beta[j]);
        }
    }
    Ok((
        y,
        updated,
        BnCache {
            normalized,
            inv_std,
            mode,
        },
    ))
}

/// Backward pass: returns `(dx, dgamma, dbeta)` given `dy`.
pub fn bn_backward(cache: &BnCache, gamma: &[f64], dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let n = dy.rows();
    let d = dy.cols();
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    for r in 0..n {
        let g = dy.row(r);
        let h = cache.normalized.row(r);
        for j in 0..d {
            dgamma[j] += g[j] * h[j];
            dbeta[j] += g[j];
        }
    }
    let mut dx = Matrix::zeros(n, d);
    match cache.mode {
        Mode::Eval => {
            for r in 0..n {
                let g = dy.row(r);
                for j in 0..d {
                    dx.set(r, j, g[j] * gamma[j] * cache.inv_std[j]);
                }
            }
        }
        Mode::Train => {
            // dh = dy·γ; dx = inv_std/N · (N·dh − Σdh − h·Σ(dh·h))
            let nf = n as f64;
            let sum_dh: Vec<f64> = (0..d).map(|j| dbeta[j] * gamma[j]).collect();
            let sum_dh_h: Vec<f64> = (0..d).map(|j| dgamma[j] * gamma[j]).collect();
            for r in 0..n {
                let g = dy.row(r);
                let h = cache.normalized.row(r);
                for j in 0..d {
                    let dh = g[j] * gamma[j];
                    dx.set(r, j, cache.inv_std[j] / nf * (nf * dh - sum_dh[j] - h[j] * sum_dh_h[j]));
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
