use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bn::{bn_backward, bn_forward, BnCache, BnLayerStats, BnStats, Mode};
use super::loss::{batch_loss, LossKind};
use super::matrix::{log_softmax_backward, log_softmax_rows, Matrix};
use super::params::ParamVector;
use crate::error::{Error, Result};

/// One utterance: a `T × F` frame matrix and its token labels.
///
/// For CTC the labels are the target token sequence (no blanks); for
/// cross-entropy they are one class index per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub frames: Matrix,
    pub labels: Vec<u32>,
}

/// Architecture of the per-frame MLP: `[linear → (BN) → ReLU]* → linear → log-softmax`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Class count; index 0 is the CTC blank.
    pub vocab_size: usize,
    pub bn_after: Vec<bool>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, vocab_size: usize) -> Self {
        let bn_after = vec![true; hidden_dims.len()];
        Self {
            input_dim,
            hidden_dims,
            vocab_size,
            bn_after,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidSpec("vocab_size must be at least 2".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidSpec(
                "hidden_dims must be non-empty with positive widths".into(),
            ));
        }
        if self.bn_after.len() != self.hidden_dims.len() {
            return Err(Error::InvalidSpec("bn_after needs one flag per hidden layer".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        let mut fan_in = self.input_dim;
        for (l, &w) in self.hidden_dims.iter().enumerate() {
            layout.push((format!("hidden{l}.weight"), vec![w, fan_in]));
            layout.push((format!("hidden{l}.bias"), vec![w]));
            if self.bn_after[l] {
                layout.push((format!("hidden{l}.bn.gamma"), vec![w]));
                layout.push((format!("hidden{l}.bn.beta"), vec![w]));
            }
            fan_in = w;
        }
        layout.push(("output.weight".into(), vec![self.vocab_size, fan_in]));
        layout.push(("output.bias".into(), vec![self.vocab_size]));
        layout
    }

    /// He-initialized weights, zero biases, `γ = 1`, `β = 0`.
    pub fn init_params(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamVector::zeros_with_layout(&self.layout());
        let mut fan_in = self.input_dim;
        let widths: Vec<usize> = self.hidden_dims.iter().copied().chain([self.vocab_size]).collect();
        for (l, _) in widths.iter().enumerate() {
            let name = if l < self.hidden_dims.len() {
                format!("hidden{l}")
            } else {
                "output".to_string()
            };
            let gain = (2.0 / fan_in as f64).sqrt();
            for w in params.seg_mut(&format!("{name}.weight"))? {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = gain * z;
            }
            if l < self.hidden_dims.len() {
                if self.bn_after[l] {
                    params.seg_mut(&format!("{name}.bn.gamma"))?.fill(1.0);
                }
                fan_in = self.hidden_dims[l];
            }
        }
        Ok(params)
    }

    /// Fresh running statistics (mean 0, variance 1) for each BN layer.
    pub fn init_bn_stats(&self) -> BnStats {
        let layers = self
            .hidden_dims
            .iter()
            .enumerate()
            .filter(|(l, _)| self.bn_after[*l])
            .map(|(l, &w)| BnLayerStats::new(l, w))
            .collect();
        BnStats { layers }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        let expected = ParamVector::zeros_with_layout(&self.layout());
        if !expected.same_registry(params) {
            return Err(Error::RegistryMismatch(
                "parameters do not match the network spec".into(),
            ));
        }
        Ok(())
    }

    fn check_stats(&self, stats: &BnStats) -> Result<()> {
        let expected: Vec<(usize, usize)> = self
            .hidden_dims
            .iter()
            .enumerate()
            .filter(|(l, _)| self.bn_after[*l])
            .map(|(l, &w)| (l, w))
            .collect();
        let got: Vec<(usize, usize)> = stats.layers.iter().map(|s| (s.layer, s.width())).collect();
        if expected != got {
            return Err(Error::Dimension(format!(
                "bn stats layout {got:?} does not match network {expected:?}"
            )));
        }
        Ok(())
    }
}

struct LayerCache {
    input: Matrix,
    bn: Option<BnCache>,
    activation: Matrix,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    spec: NetworkSpec,
    params: ParamVector,
    fingerprint: u64,
    mode: Mode,
    row_counts: Vec<usize>,
    layers: Vec<LayerCache>,
    logprobs: Matrix,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// True when the cache was produced from exactly these parameter values.
    pub fn matches(&self, params: &ParamVector) -> bool {
        self.params.same_registry(params) && self.fingerprint == params.fingerprint()
    }
}

pub struct ForwardOutput {
    /// One `T × V` log-softmax matrix per utterance.
    pub logprobs: Vec<Matrix>,
    pub cache: ForwardCache,
    pub stats: BnStats,
}

/// Runs the network over a batch.
///
/// In train mode the BN statistics are pooled over every frame of every
/// utterance in the batch. Eval mode returns `stats` unchanged.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamVector,
    stats: &BnStats,
    batch: &[&Sample],
    mode: Mode,
) -> Result<ForwardOutput> {
    spec.validate()?;
    spec.check_params(params)?;
    spec.check_stats(stats)?;
    if batch.is_empty() {
        return Err(Error::EmptyData("forward on an empty batch".into()));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.frames.cols() != spec.input_dim {
            return Err(Error::Dimension(format!(
                "utterance {i} has {} features, network expects {}",
                s.frames.cols(),
                spec.input_dim
            )));
        }
        if s.frames.rows() == 0 {
            return Err(Error::Dimension(format!("utterance {i} has no frames")));
        }
    }
    let row_counts: Vec<usize> = batch.iter().map(|s| s.frames.rows()).collect();
    let mut x = Matrix::vstack(batch.iter().map(|s| &s.frames), spec.input_dim)?;
    let mut new_stats = stats.clone();
    let mut layers = Vec::with_capacity(spec.hidden_dims.len());
    for (l, &width) in spec.hidden_dims.iter().enumerate() {
        let w = params.seg(&format!("hidden{l}.weight"))?;
        let b = params.seg(&format!("hidden{l}.bias"))?;
        let z = x.affine(w, b, width);
        let (mut y, bn) = if spec.bn_after[l] {
            let gamma = params.seg(&format!("hidden{l}.bn.gamma"))?;
            let beta = params.seg(&format!("hidden{l}.bn.beta"))?;
            let slot = new_stats
                .layers
                .iter_mut()
                .find(|s| s.layer == l)
                .expect("checked layout");
            let (y, updated, cache) = bn_forward(&z, gamma, beta, slot, mode)?;
            *slot = updated;
            (y, Some(cache))
        } else {
            (z, None)
        };
        for v in y.as_mut_slice() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let input = std::mem::replace(&mut x, y.clone());
        layers.push(LayerCache {
            input,
            bn,
            activation: y,
        });
    }
    let logits = x.affine(
        params.seg("output.weight")?,
        params.seg("output.bias")?,
        spec.vocab_size,
    );
    let logprobs = log_softmax_rows(&logits);
    let mut per_utt = Vec::with_capacity(batch.len());
    let mut start = 0;
    for &t in &row_counts {
        per_utt.push(logprobs.slice_rows(start, start + t));
        start += t;
    }
    if mode == Mode::Eval {
        new_stats = stats.clone();
    }
    let cache = ForwardCache {
        spec: spec.clone(),
        params: params.clone(),
        fingerprint: params.fingerprint(),
        mode,
        row_counts,
        layers,
        logprobs,
    };
    Ok(ForwardOutput {
        logprobs: per_utt,
        cache,
        stats: new_stats,
    })
}

/// Gradient of the loss with respect to every parameter, given the gradient
/// with respect to each utterance's log-probabilities.
pub fn backward(cache: &ForwardCache, loss_grad: &[Matrix]) -> Result<ParamVector> {
    if loss_grad.len() != cache.row_counts.len() {
        return Err(Error::Dimension(format!(
            "{} upstream gradients for a batch of {}",
            loss_grad.len(),
            cache.row_counts.len()
        )));
    }
    let v = cache.spec.vocab_size;
    for (g, &t) in loss_grad.iter().zip(&cache.row_counts) {
        if g.rows() != t || g.cols() != v {
            return Err(Error::Dimension(format!(
                "upstream gradient is {}x{}, cache expects {t}x{v}",
                g.rows(),
                g.cols()
            )));
        }
    }
    let spec = &cache.spec;
    let params = &cache.params;
    let mut grad = params.zeros_like();
    let upstream = Matrix::vstack(loss_grad.iter(), v)?;
    let d_logits = log_softmax_backward(&cache.logprobs, &upstream);

    let last = cache.layers.last().expect("validated spec has hidden layers");
    let w_out = params.seg("output.weight")?;
    d_logits.add_outer_into(&last.activation, grad.seg_mut("output.weight")?);
    grad.seg_mut("output.bias")?.copy_from_slice(&d_logits.col_sums());
    let mut d_act = d_logits.matmul_weights(w_out, last.activation.cols());

    for l in (0..spec.hidden_dims.len()).rev() {
        let lc = &cache.layers[l];
        for (g, a) in d_act.as_mut_slice().iter_mut().zip(lc.activation.as_slice()) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let dz = match &lc.bn {
            Some(bn) => {
                let gamma = params.seg(&format!("hidden{l}.bn.gamma"))?;
                let (dz, dgamma, dbeta) = bn_backward(bn, gamma, &d_act);
                grad.seg_mut(&format!("hidden{l}.bn.gamma"))?.copy_from_slice(&dgamma);
                grad.seg_mut(&format!("hidden{l}.bn.beta"))?.copy_from_slice(&dbeta);
                dz
            }
            None => d_act,
        };
        dz.add_outer_into(&lc.input, grad.seg_mut(&format!("hidden{l}.weight"))?);
        grad.seg_mut(&format!("hidden{l}.bias"))?
            .copy_from_slice(&dz.col_sums());
        if l > 0 {
            d_act = dz.matmul_weights(params.seg(&format!("hidden{l}.weight"))?, lc.input.cols());
        } else {
            d_act = Matrix::zeros(0, 0);
        }
    }
    if !grad.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(grad)
}

/// Like [`backward`], but first verifies the cache was built from `params`.
pub fn backward_checked(params: &ParamVector, cache: &ForwardCache, loss_grad: &[Matrix]) -> Result<ParamVector> {
    if !cache.matches(params) {
        return Err(Error::StaleCache);
    }
    backward(cache, loss_grad)
}

/// Result of a forward + loss + backward pass.
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: ParamVector,
    pub stats: BnStats,
}

/// Mean batch loss and its parameter gradient.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    params: &ParamVector,
    stats: &BnStats,
    batch: &[&Sample],
    mode: Mode,
    kind: LossKind,
) -> Result<LossAndGrad> {
    let out = forward(spec, params, stats, batch, mode)?;
    let (loss, upstream) = batch_loss(&out.logprobs, batch, kind)?;
    let grad = backward(&out.cache, &upstream)?;
    Ok(LossAndGrad {
        loss,
        grad,
        stats: out.stats,
    })
}

/// Mean batch loss without gradients.
pub fn loss_only(
    spec: &NetworkSpec,
    params: &ParamVector,
    stats: &BnStats,
    batch: &[&Sample],
    mode: Mode,
    kind: LossKind,
) -> Result<f64> {
    let out = forward(spec, params, stats, batch, mode)?;
    Ok(batch_loss(&out.logprobs, batch, kind)?.0)
}
