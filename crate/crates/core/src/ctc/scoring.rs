use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levenshtein distance with unit insertion, deletion and substitution costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Accumulated edit counts; `errors / ref_len` is the token error rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub errors: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn add(&mut self, other: EditCounts) {
        self.errors += other.errors;
        self.ref_len += other.ref_len;
    }

    pub fn rate(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(self.errors as f64 / self.ref_len as f64)
    }
}

/// Token error rate `Σ edit_distance / Σ |ref|`.
pub fn ter<R: AsRef<[u32]>, H: AsRef<[u32]>>(refs: &[R], hyps: &[H]) -> Result<f64> {
    if refs.len() != hyps.len() {
        return Err(Error::Dimension(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut counts = EditCounts::default();
    for (r, h) in refs.iter().zip(hyps) {
        counts.add(EditCounts {
            errors: edit_distance(r.as_ref(), h.as_ref()),
            ref_len: r.as_ref().len(),
        });
    }
    counts.rate()
}
