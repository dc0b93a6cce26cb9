use super::{check_labels, collapse};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Largest number of paths [`ctc_bruteforce`] will enumerate.
pub const ENUMERATION_BOUND: u128 = 1_000_000;

/// CTC negative log-likelihood by enumerating every length-`T` path.
///
/// Sums the probability of each path whose collapse equals `labels`. A zero
/// total is reported as [`Error::InfeasibleLabels`].
pub fn ctc_bruteforce(logprobs: &Matrix, labels: &[u32]) -> Result<f64> {
    let t_len = logprobs.rows();
    let vocab = logprobs.cols();
    check_labels(labels, vocab)?;
    let paths = (vocab as u128).checked_pow(t_len as u32).unwrap_or(u128::MAX);
    if paths > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            paths,
            bound: ENUMERATION_BOUND,
        });
    }
    let mut path = vec![0u32; t_len];
    let mut total = 0.0;
    for _ in 0..paths {
        if collapse(&path) == labels {
            let mut lp = 0.0;
            for (t, &k) in path.iter().enumerate() {
                lp += logprobs.get(t, k as usize);
            }
            total += lp.exp();
        }
        // odometer increment, last frame fastest
        for slot in path.iter_mut().rev() {
            *slot += 1;
            if (*slot as usize) < vocab {
                break;
            }
            *slot = 0;
        }
    }
    if total == 0.0 {
        return Err(Error::InfeasibleLabels {
            min_frames: super::min_frames(labels),
            frames: t_len,
        });
    }
    Ok(-total.ln())
}
