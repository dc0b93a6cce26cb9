#![allow(dead_code)]

use meta_reinit::nn::{loss_only, BnStats, LossKind, Matrix, Mode, NetworkSpec, ParamVector, Sample};
use meta_reinit::speakers::{make_dataset, make_speaker, SeverityBand, TaskData, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Row-wise log-softmax computed directly from the definition.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let z: f64 = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = v - z;
        }
    }
    out
}

pub struct Instance {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    pub bn: BnStats,
    pub batch: Vec<Sample>,
}

impl Instance {
    pub fn refs(&self) -> Vec<&Sample> {
        self.batch.iter().collect()
    }
}

/// A random small network with perturbed BN affine/running stats and a
/// random batch whose labels suit `kind`.
pub fn random_instance(seed: u64, kind: LossKind) -> Instance {
    let mut r = rng(seed);
    let input = r.random_range(2..=4);
    let depth = r.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| r.random_range(2..=5)).collect();
    let vocab = r.random_range(3..=5);
    let bn_after: Vec<bool> = (0..depth).map(|_| r.random_bool(0.7)).collect();
    let spec = NetworkSpec {
        input_dim: input,
        hidden_dims: hidden,
        vocab_size: vocab,
        bn_after,
    };
    let mut params = spec.init_params(seed).unwrap();
    for v in params.values_mut() {
        *v += r.random_range(-0.3..0.3);
    }
    let mut bn = spec.init_bn_stats();
    for layer in &mut bn.layers {
        for m in &mut layer.mean {
            *m = r.random_range(-0.5..0.5);
        }
        for v in &mut layer.var {
            *v = r.random_range(0.5..2.0);
        }
    }
    let n = r.random_range(1..=3);
    let batch = (0..n)
        .map(|_| {
            let (labels, t) = match kind {
                LossKind::Ctc => {
                    let len = r.random_range(1..=2);
                    let labels: Vec<u32> = (0..len).map(|_| r.random_range(1..vocab as u32)).collect();
                    let min = labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count();
                    (labels, r.random_range(min.max(2)..=6))
                }
                LossKind::Ce => {
                    let t = r.random_range(2..=5);
                    ((0..t).map(|_| r.random_range(0..vocab as u32)).collect(), t)
                }
            };
            Sample {
                frames: random_matrix(&mut r, t, input, 1.5),
                labels,
            }
        })
        .collect();
    Instance {
        spec,
        params,
        bn,
        batch,
    }
}

/// Central-difference gradient of the batch loss.
pub fn fd_gradient(
    spec: &NetworkSpec,
    params: &ParamVector,
    bn: &BnStats,
    batch: &[&Sample],
    mode: Mode,
    kind: LossKind,
    h: f64,
) -> Vec<f64> {
    let mut probe = params.clone();
    (0..params.len())
        .map(|i| {
            let orig = params.values()[i];
            probe.values_mut()[i] = orig + h;
            let plus = loss_only(spec, &probe, bn, batch, mode, kind).unwrap();
            probe.values_mut()[i] = orig - h;
            let minus = loss_only(spec, &probe, bn, batch, mode, kind).unwrap();
            probe.values_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn collapse_path(path: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != 0 {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// `−ln Σ_paths Π_t p(path_t)` over every path that collapses to `labels`,
/// accumulated in log space. `None` if no path does.
pub fn enumerate_ctc(logprobs: &Matrix, labels: &[u32]) -> Option<f64> {
    let (t, v) = (logprobs.rows(), logprobs.cols());
    let mut terms = Vec::new();
    let mut path = vec![0u32; t];
    loop {
        if collapse_path(&path) == labels {
            terms.push((0..t).map(|i| logprobs.get(i, path[i] as usize)).sum::<f64>());
        }
        let mut k = 0;
        loop {
            if k == t {
                if terms.is_empty() {
                    return None;
                }
                let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                return Some(-(m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()));
            }
            path[k] += 1;
            if (path[k] as usize) < v {
                break;
            }
            path[k] = 0;
            k += 1;
        }
    }
}

/// Small dysarthric-style tasks with ids `0..n_tasks`.
pub fn tiny_tasks(n_tasks: u32, utts: usize, feature_dim: usize, vocab: usize, seed: u64) -> Vec<TaskData> {
    let voc = Vocabulary::new(vocab, feature_dim, 2, seed);
    (0..n_tasks)
        .map(|id| {
            let band = SeverityBand::DYSARTHRIC[id as usize % 4];
            let spk = make_speaker(id, band, seed, feature_dim);
            make_dataset(&spk, &voc, utts, 3, seed).unwrap()
        })
        .collect()
}
