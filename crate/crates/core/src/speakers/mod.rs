//! Synthetic speaker-task generator.
//!
//! Each speaker distorts a shared set of clean token prototypes with an
//! affine transform, additive noise and temporal stretching whose magnitudes
//! grow with a severity scalar. Part of every distortion is common to the
//! whole dysarthric population and part is speaker specific.

mod dataset;
mod jsonl;

pub use dataset::{
    generate_corpus, loso_split, make_dataset, synth_utterance, Corpus, DataConfig, TaskData, Utterance, NORMAL_ID_BASE,
};
pub use jsonl::{export_jsonl, import_jsonl, UtteranceRecord};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::seed::derive;

/// Weight of the population-wide component in each speaker's perturbation.
const COMMON_WEIGHT: f64 = 0.6;

const STREAM_COMMON: u64 = 0x636f_6d6d;
const STREAM_SPEAKER: u64 = 0x7370_6b72;
const STREAM_VOCAB: u64 = 0x766f_6361;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityBand {
    Severe,
    ModSevere,
    Moderate,
    Mild,
    Normal,
}

impl SeverityBand {
    pub const DYSARTHRIC: [SeverityBand; 4] = [
        SeverityBand::Severe,
        SeverityBand::ModSevere,
        SeverityBand::Moderate,
        SeverityBand::Mild,
    ];

    pub fn severity(self) -> f64 {
        match self {
            SeverityBand::Severe => 0.9,
            SeverityBand::ModSevere => 0.65,
            SeverityBand::Moderate => 0.4,
            SeverityBand::Mild => 0.15,
            SeverityBand::Normal => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityBand::Severe => "severe",
            SeverityBand::ModSevere => "mod_severe",
            SeverityBand::Moderate => "moderate",
            SeverityBand::Mild => "mild",
            SeverityBand::Normal => "normal",
        }
    }
}

impl std::str::FromStr for SeverityBand {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "severe" => Ok(SeverityBand::Severe),
            "mod_severe" => Ok(SeverityBand::ModSevere),
            "moderate" => Ok(SeverityBand::Moderate),
            "mild" => Ok(SeverityBand::Mild),
            "normal" => Ok(SeverityBand::Normal),
            other => Err(crate::error::Error::Config(format!("unknown severity band {other}"))),
        }
    }
}

/// Seeded generative recipe for one speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSpec {
    pub id: u32,
    pub band: SeverityBand,
    pub severity: f64,
    pub seed: u64,
    /// `F × F` feature transform `A = I + severity · P`.
    pub affine: Matrix,
    pub bias: Vec<f64>,
    pub noise_sigma: f64,
    /// Temporal duplication factor, in `[1, 1 + 2·severity]`.
    pub stretch: f64,
}

/// Builds a speaker. `seed` fixes the population; `id` selects the speaker
/// within it.
///
/// `P = w·C + (1−w)·D` mixes a population matrix `C` with a per-speaker
/// matrix `D`, both uniform on `[−0.5, 0.5]`, so `P` stays in that range.
pub fn make_speaker(id: u32, band: SeverityBand, seed: u64, feature_dim: usize) -> SpeakerSpec {
    let severity = band.severity();
    let f = feature_dim;
    let mut common = ChaCha8Rng::seed_from_u64(derive(seed, STREAM_COMMON));
    let mut own = ChaCha8Rng::seed_from_u64(derive(derive(seed, STREAM_SPEAKER), u64::from(id)));

    let mut affine = Matrix::zeros(f, f);
    for i in 0..f {
        for j in 0..f {
            let c: f64 = common.random_range(-0.5..=0.5);
            let d: f64 = own.random_range(-0.5..=0.5);
            let p = COMMON_WEIGHT * c + (1.0 - COMMON_WEIGHT) * d;
            let eye = if i == j { 1.0 } else { 0.0 };
            affine.set(i, j, eye + severity * p);
        }
    }
    let bias = (0..f)
        .map(|_| {
            let c: f64 = common.random_range(-1.0..=1.0);
            let d: f64 = own.random_range(-1.0..=1.0);
            severity * (COMMON_WEIGHT * c + (1.0 - COMMON_WEIGHT) * d)
        })
        .collect();
    let u: f64 = own.random_range(0.0..=1.0);
    SpeakerSpec {
        id,
        band,
        severity,
        seed,
        affine,
        bias,
        noise_sigma: 0.3 * severity,
        stretch: 1.0 + 2.0 * severity * u,
    }
}

/// Clean token prototypes: each non-blank token owns a short run of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// `prototypes[token − 1]` is a `proto_len × F` matrix.
    pub prototypes: Vec<Matrix>,
}

impl Vocabulary {
    pub fn new(vocab_size: usize, feature_dim: usize, proto_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, STREAM_VOCAB));
        let prototypes = (1..vocab_size)
            .map(|_| {
                let data = (0..proto_len * feature_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                Matrix::from_vec(proto_len, feature_dim, data).expect("sized")
            })
            .collect();
        Self {
            vocab_size,
            feature_dim,
            seed,
            prototypes,
        }
    }

    pub fn proto_len(&self) -> usize {
        self.prototypes.first().map_or(0, Matrix::rows)
    }
}
