use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
///
/// All reductions run left to right over the natural index order so results
/// are reproducible bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors, which must all have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack<'a>(parts: impl IntoIterator<Item = &'a Matrix>, cols: usize) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::Dimension(format!("expected {cols} columns, got {}", m.cols)));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Self { rows, cols, data })
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// `self · wᵀ + bias` where `w` is stored `out × in` (row-major).
    pub(crate) fn affine(&self, w: &[f64], bias: &[f64], out: usize) -> Self {
        let inp = self.cols;
        let mut res = Matrix::zeros(self.rows, out);
        for r in 0..self.rows {
            let x = self.row(r);
            let y = res.row_mut(r);
            for (o, yo) in y.iter_mut().enumerate() {
                let wr = &w[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for (xi, wi) in x.iter().zip(wr) {
                    acc += xi * wi;
                }
                *yo = acc + bias[o];
            }
        }
        res
    }

    /// `self · w` with `w` stored `self.cols × out`, i.e. backprop through [`Matrix::affine`].
    pub(crate) fn matmul_weights(&self, w: &[f64], out: usize) -> Self {
        let k = self.cols;
        let mut res = Matrix::zeros(self.rows, out);
        for r in 0..self.rows {
            let g = self.row(r);
            let y = res.row_mut(r);
            for (o, gi) in g.iter().enumerate().take(k) {
                let wr = &w[o * out..(o + 1) * out];
                for (yj, wj) in y.iter_mut().zip(wr) {
                    *yj += gi * wj;
                }
            }
        }
        res
    }

    /// Accumulates `selfᵀ · x` into `out` (shape `self.cols × x.cols`, row-major).
    pub(crate) fn add_outer_into(&self, x: &Matrix, out: &mut [f64]) {
        let inp = x.cols;
        for r in 0..self.rows {
            let g = self.row(r);
            let xr = x.row(r);
            for (o, go) in g.iter().enumerate() {
                let dst = &mut out[o * inp..(o + 1) * inp];
                for (d, xi) in dst.iter_mut().zip(xr) {
                    *d += go * xi;
                }
            }
        }
    }

    /// Column sums, accumulated top to bottom.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        s
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Numerically stable `log Σ exp(xs)`; returns `-inf` for an empty or all `-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut s = 0.0;
    for &x in xs {
        s += (x - m).exp();
    }
    m + s.ln()
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = logsumexp(row);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Backprop through row-wise log-softmax: `g − softmax · Σ_k g_k`.
pub fn log_softmax_backward(logprobs: &Matrix, grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for r in 0..out.rows() {
        let total: f64 = grad.row(r).iter().sum();
        let lp = logprobs.row(r);
        for (o, l) in out.row_mut(r).iter_mut().zip(lp) {
            *o -= l.exp() * total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_handles_neg_infinity() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn affine_and_transpose_products() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // w is 3x2
        let w = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let y = x.affine(&w, &[0.5, 0.0, -1.0], 3);
        assert_eq!(y.to_rows(), vec![vec![1.5, 2.0, 2.0], vec![3.5, 4.0, 6.0]]);
        let back = y.matmul_weights(&w, 2);
        assert_eq!(back.row(0), &[1.5 + 2.0, 2.0 + 2.0]);
        let mut gw = vec![0.0; 6];
        y.add_outer_into(&x, &mut gw);
        assert_eq!(gw[0], 1.5 * 1.0 + 3.5 * 3.0);
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
