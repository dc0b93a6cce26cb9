//! CTC loss, brute-force alignment oracle, greedy decoding and token error rate.
//!
//! Class 0 is the blank symbol throughout.

mod bruteforce;
mod scoring;

pub use bruteforce::{ctc_bruteforce, ENUMERATION_BOUND};
pub use scoring::{edit_distance, ter, EditCounts};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const BLANK: u32 = 0;

/// Minimum frame count able to emit `labels`: one per token plus a
/// separating blank between each pair of equal neighbours.
pub fn min_frames(labels: &[u32]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Blank-interleaved label sequence `b, y1, b, y2, …, b` of length `2L + 1`.
pub fn extend_with_blanks(labels: &[u32]) -> Vec<u32> {
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(BLANK);
    for &y in labels {
        ext.push(y);
        ext.push(BLANK);
    }
    ext
}

/// Merges consecutive duplicates, then drops blanks.
pub fn collapse(path: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Per-frame argmax (ties go to the smaller class index).
pub fn argmax_path(logprobs: &Matrix) -> Vec<u32> {
    (0..logprobs.rows())
        .map(|r| {
            let row = logprobs.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect()
}

pub fn greedy_decode(logprobs: &Matrix) -> Vec<u32> {
    collapse(&argmax_path(logprobs))
}

pub(crate) fn check_labels(labels: &[u32], vocab: usize) -> Result<()> {
    match labels.iter().find(|&&y| y == BLANK || y as usize >= vocab) {
        Some(&token) => Err(Error::UnknownToken { token, vocab }),
        None => Ok(()),
    }
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn lse3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// CTC negative log-likelihood of `labels` under per-frame log-probabilities,
/// with its gradient with respect to `logprobs`.
///
/// Both recursions run in log space. The backward variable excludes the
/// emission at its own frame, so the occupancy of state `s` at frame `t` is
/// `exp(α_t(s) + β_t(s) − log P)`.
pub fn ctc_nll(logprobs: &Matrix, labels: &[u32]) -> Result<(f64, Matrix)> {
    let t_len = logprobs.rows();
    let vocab = logprobs.cols();
    check_labels(labels, vocab)?;
    let need = min_frames(labels);
    if need > t_len || t_len == 0 {
        return Err(Error::InfeasibleLabels {
            min_frames: need.max(1),
            frames: t_len,
        });
    }
    let ext = extend_with_blanks(labels);
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    // skip transition s-2 -> s allowed only onto a non-blank differing from ext[s-2]
    let can_skip: Vec<bool> = (0..s_len)
        .map(|s| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2])
        .collect();
    let emit = |t: usize, s: usize| logprobs.get(t, ext[s] as usize);

    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = emit(0, 0);
    if s_len > 1 {
        alpha[1] = emit(0, 1);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let a = prev[s];
            let b = if s >= 1 { prev[s - 1] } else { ninf };
            let c = if can_skip[s] { prev[s - 2] } else { ninf };
            let acc = lse3(a, b, c);
            cur[s] = if acc == ninf { ninf } else { acc + emit(t, s) };
        }
    }

    let mut beta = vec![ninf; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let a = next[s] + emit(t + 1, s);
            let b = if s + 1 < s_len {
                next[s + 1] + emit(t + 1, s + 1)
            } else {
                ninf
            };
            let c = if s + 2 < s_len && can_skip[s + 2] {
                next[s + 2] + emit(t + 1, s + 2)
            } else {
                ninf
            };
            cur[s] = lse3(a, b, c);
        }
    }

    let end = &alpha[last..];
    let log_p = if s_len > 1 {
        lse2(end[s_len - 1], end[s_len - 2])
    } else {
        end[0]
    };
    if !log_p.is_finite() {
        return Err(Error::InfeasibleLabels {
            min_frames: need,
            frames: t_len,
        });
    }

    let mut grad = Matrix::zeros(t_len, vocab);
    for t in 0..t_len {
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_p;
            if occ > ninf {
                let k = ext[s] as usize;
                grad.set(t, k, grad.get(t, k) - occ.exp());
            }
        }
    }
    Ok((-log_p, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{log_softmax_backward, log_softmax_rows};

    fn uniform(t: usize, v: usize) -> Matrix {
        Matrix::from_vec(t, v, vec![-(v as f64).ln(); t * v]).unwrap()
    }

    #[test]
    fn single_frame_single_label() {
        let (nll, _) = ctc_nll(&uniform(1, 2), &[1]).unwrap();
        assert!((nll - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_frames_three_of_four_paths() {
        let (nll, _) = ctc_nll(&uniform(2, 2), &[1]).unwrap();
        assert!((nll - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((nll - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn repeat_needs_separating_blank() {
        assert_eq!(min_frames(&[1, 1]), 3);
        assert!(matches!(
            ctc_nll(&uniform(2, 2), &[1, 1]),
            Err(Error::InfeasibleLabels {
                min_frames: 3,
                frames: 2
            })
        ));
        assert!(ctc_nll(&uniform(3, 2), &[1, 1]).is_ok());
    }

    #[test]
    fn rejects_blank_or_unknown_labels() {
        assert!(matches!(
            ctc_nll(&uniform(3, 3), &[0]),
            Err(Error::UnknownToken { token: 0, .. })
        ));
        assert!(matches!(
            ctc_nll(&uniform(3, 3), &[3]),
            Err(Error::UnknownToken { token: 3, .. })
        ));
    }

    #[test]
    fn empty_labels_is_all_blank_path() {
        let lp = log_softmax_rows(&Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.3, 0.9]]).unwrap());
        let (nll, _) = ctc_nll(&lp, &[]).unwrap();
        assert!((nll + lp.get(0, 0) + lp.get(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_rows_sum_to_minus_one() {
        // occupancies at each frame form a distribution over states
        let lp = log_softmax_rows(
            &Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.0], vec![0.3, 0.3, -0.2]]).unwrap(),
        );
        let (_, g) = ctc_nll(&lp, &[1, 2]).unwrap();
        for r in 0..3 {
            let s: f64 = g.row(r).iter().sum();
            assert!((s + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences_on_logits() {
        let logits = Matrix::from_rows(&[
            vec![0.2, -0.5, 1.0, 0.1],
            vec![0.7, 0.3, -0.2, 0.0],
            vec![-1.0, 0.4, 0.6, 0.9],
            vec![0.0, 0.8, -0.3, 0.2],
            vec![0.5, -0.1, 0.2, -0.6],
        ])
        .unwrap();
        let labels = [2, 2, 3];
        let f = |m: &Matrix| ctc_nll(&log_softmax_rows(m), &labels).unwrap().0;
        let lp = log_softmax_rows(&logits);
        let (_, g) = ctc_nll(&lp, &labels).unwrap();
        let analytic = log_softmax_backward(&lp, &g);
        let h = 1e-5;
        for i in 0..logits.as_slice().len() {
            let mut p = logits.clone();
            p.as_mut_slice()[i] += h;
            let mut m = logits.clone();
            m.as_mut_slice()[i] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let rel = (analytic.as_slice()[i] - num).abs() / num.abs().max(1.0);
            assert!(rel <= 1e-5, "coordinate {i}: rel {rel}");
        }
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[1, 1, 0, 2]), vec![1, 2]);
        assert_eq!(collapse(&[0, 0]), Vec::<u32>::new());
        assert_eq!(collapse(&[1, 0, 1]), vec![1, 1]);
    }

    #[test]
    fn greedy_decoding() {
        let one_hot = |path: &[usize], v: usize| {
            let mut m = Matrix::from_vec(path.len(), v, vec![-5.0; path.len() * v]).unwrap();
            for (t, &k) in path.iter().enumerate() {
                m.set(t, k, -0.01);
            }
            m
        };
        assert_eq!(greedy_decode(&one_hot(&[1, 1, 0, 2], 3)), vec![1, 2]);
        assert_eq!(greedy_decode(&one_hot(&[0, 0, 0], 3)), Vec::<u32>::new());
        assert_eq!(greedy_decode(&one_hot(&[2, 2, 3], 4)), vec![2, 3]);
        // ties resolve toward the smaller index
        assert_eq!(argmax_path(&uniform(2, 4)), vec![0, 0]);
    }
}
