use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{make_speaker, SeverityBand, SpeakerSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{Matrix, Sample};
use crate::seed::derive;

const STREAM_DATA: u64 = 0x6461_7461;

/// First id used for normal (severity 0) speakers; dysarthric speakers count from 0.
pub const NORMAL_ID_BASE: u32 = 1000;

/// One utterance with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_id: u32,
    /// Position within the speaker's utterance list.
    pub index: u32,
    /// Block number 1..=3.
    pub block: u8,
    pub sample: Sample,
}

/// One speaker's data: blocks 1 and 3 for adaptation, block 2 for test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskData {
    pub id: u32,
    /// Generator recipe; absent for imported data.
    pub speaker: Option<SpeakerSpec>,
    pub adaptation: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl TaskData {
    pub fn band(&self) -> Option<SeverityBand> {
        self.speaker.as_ref().map(|s| s.band)
    }

    pub fn adaptation_samples(&self) -> Vec<&Sample> {
        self.adaptation.iter().map(|u| &u.sample).collect()
    }

    pub fn test_samples(&self) -> Vec<&Sample> {
        self.test.iter().map(|u| &u.sample).collect()
    }
}

/// Renders `labels` for a speaker: prototype runs, stretched per token, then
/// `x' = A·x + b + N(0, σ²)` per frame.
pub fn synth_utterance(spec: &SpeakerSpec, vocab: &Vocabulary, labels: &[u32], rng: &mut impl Rng) -> Result<Matrix> {
    if labels.is_empty() {
        return Err(Error::EmptyData("cannot render an empty label sequence".into()));
    }
    let f = vocab.feature_dim;
    if spec.affine.rows() != f || spec.affine.cols() != f || spec.bias.len() != f {
        return Err(Error::Dimension(format!(
            "speaker {} transform does not match {f} features",
            spec.id
        )));
    }
    let proto_len = vocab.proto_len();
    let dur = ((proto_len as f64 * spec.stretch).round() as usize).max(1);
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(labels.len() * dur);
    for &token in labels {
        if token == 0 || token as usize >= vocab.vocab_size {
            return Err(Error::UnknownToken {
                token,
                vocab: vocab.vocab_size,
            });
        }
        let proto = &vocab.prototypes[token as usize - 1];
        for j in 0..dur {
            let x = proto.row(j * proto_len / dur);
            let mut y = vec![0.0; f];
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (a, xk) in spec.affine.row(i).iter().zip(x) {
                    acc += a * xk;
                }
                *yi = acc + spec.bias[i];
                if let Some(n) = &noise {
                    *yi += n.sample(rng);
                }
            }
            rows.push(y);
        }
    }
    Matrix::from_rows(&rows)
}

/// Generates `n_utts` utterances and assigns them round-robin to blocks 1, 2, 3.
pub fn make_dataset(
    spec: &SpeakerSpec,
    vocab: &Vocabulary,
    n_utts: usize,
    max_label_len: usize,
    seed: u64,
) -> Result<TaskData> {
    if n_utts < 3 {
        return Err(Error::Config(format!(
            "need at least 3 utterances for 3 blocks, got {n_utts}"
        )));
    }
    if max_label_len == 0 || vocab.vocab_size < 2 {
        return Err(Error::Config("max_label_len and vocabulary must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(derive(seed, STREAM_DATA), u64::from(spec.id)));
    let tokens = vocab.vocab_size as u32 - 1;
    let mut adaptation = Vec::new();
    let mut test = Vec::new();
    for i in 0..n_utts {
        let len = rng.random_range(1..=max_label_len);
        let mut labels: Vec<u32> = Vec::with_capacity(len);
        while labels.len() < len {
            let t = rng.random_range(1..=tokens);
            // adjacent repeats would be indistinguishable without a silence frame
            if tokens > 1 && labels.last() == Some(&t) {
                continue;
            }
            labels.push(t);
        }
        let frames = synth_utterance(spec, vocab, &labels, &mut rng)?;
        let block = (i % 3) as u8 + 1;
        let utt = Utterance {
            speaker_id: spec.id,
            index: i as u32,
            block,
            sample: Sample { frames, labels },
        };
        if block == 2 {
            test.push(utt);
        } else {
            adaptation.push(utt);
        }
    }
    Ok(TaskData {
        id: spec.id,
        speaker: Some(spec.clone()),
        adaptation,
        test,
    })
}

/// Holds out `target_id`; returns the remaining tasks and the held-out one.
pub fn loso_split(all_tasks: &[TaskData], target_id: u32) -> Result<(Vec<&TaskData>, &TaskData)> {
    let target = all_tasks
        .iter()
        .find(|t| t.id == target_id)
        .ok_or(Error::UnknownSpeaker(target_id))?;
    let meta = all_tasks.iter().filter(|t| t.id != target_id).collect();
    Ok((meta, target))
}

/// Sizes of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub feature_dim: usize,
    pub vocab_size: usize,
    /// Frames per token prototype before stretching.
    pub proto_len: usize,
    pub max_label_len: usize,
    pub utts_per_speaker: usize,
    pub normal_speakers: usize,
    pub dysarthric_per_band: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            feature_dim: 8,
            vocab_size: 10,
            proto_len: 3,
            max_label_len: 5,
            utts_per_speaker: 30,
            normal_speakers: 6,
            dysarthric_per_band: 2,
        }
    }
}

/// Normal-speaker pool plus dysarthric speakers, all from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub normal: Vec<TaskData>,
    pub dysarthric: Vec<TaskData>,
}

impl Corpus {
    pub fn dysarthric_task(&self, id: u32) -> Result<&TaskData> {
        self.dysarthric
            .iter()
            .find(|t| t.id == id)
            .ok_or(Error::UnknownSpeaker(id))
    }
}

/// Dysarthric speakers get ids `0..4·per_band` ordered severe → mild;
/// normal speakers get ids from [`NORMAL_ID_BASE`].
pub fn generate_corpus(cfg: &DataConfig, seed: u64) -> Result<Corpus> {
    let vocab = Vocabulary::new(cfg.vocab_size, cfg.feature_dim, cfg.proto_len, seed);
    let mut dysarthric = Vec::new();
    let mut id = 0u32;
    for band in SeverityBand::DYSARTHRIC {
        for _ in 0..cfg.dysarthric_per_band {
            let spec = make_speaker(id, band, seed, cfg.feature_dim);
            dysarthric.push(make_dataset(
                &spec,
                &vocab,
                cfg.utts_per_speaker,
                cfg.max_label_len,
                seed,
            )?);
            id += 1;
        }
    }
    let normal = (0..cfg.normal_speakers as u32)
        .map(|k| {
            let spec = make_speaker(NORMAL_ID_BASE + k, SeverityBand::Normal, seed, cfg.feature_dim);
            make_dataset(&spec, &vocab, cfg.utts_per_speaker, cfg.max_label_len, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        vocab,
        normal,
        dysarthric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(6, 4, 3, 17)
    }

    #[test]
    fn clean_speaker_renders_prototypes_exactly() {
        let v = vocab();
        let s = make_speaker(0, SeverityBand::Normal, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = synth_utterance(&s, &v, &[2, 5], &mut rng).unwrap();
        assert_eq!(m.rows(), 6);
        for j in 0..3 {
            assert_eq!(m.row(j), v.prototypes[1].row(j));
            assert_eq!(m.row(3 + j), v.prototypes[4].row(j));
        }
    }

    #[test]
    fn stretch_two_duplicates_frames() {
        let v = vocab();
        let mut s = make_speaker(0, SeverityBand::Normal, 1, 4);
        s.stretch = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = synth_utterance(&s, &v, &[3], &mut rng).unwrap();
        assert_eq!(m.rows(), 6);
        for j in 0..3 {
            assert_eq!(m.row(2 * j), v.prototypes[2].row(j));
            assert_eq!(m.row(2 * j + 1), v.prototypes[2].row(j));
        }
    }

    #[test]
    fn synth_is_deterministic_and_validates() {
        let v = vocab();
        let s = make_speaker(4, SeverityBand::Severe, 1, 4);
        let a = synth_utterance(&s, &v, &[1, 2, 3], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = synth_utterance(&s, &v, &[1, 2, 3], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            synth_utterance(&s, &v, &[6], &mut rng),
            Err(Error::UnknownToken { token: 6, .. })
        ));
        assert!(synth_utterance(&s, &v, &[], &mut rng).is_err());
    }

    #[test]
    fn round_robin_blocks() {
        let v = vocab();
        let s = make_speaker(1, SeverityBand::Mild, 2, 4);
        let t = make_dataset(&s, &v, 3, 3, 9).unwrap();
        assert_eq!(t.adaptation.len(), 2);
        assert_eq!(t.test.len(), 1);
        assert_eq!(t.test[0].block, 2);
        assert!(make_dataset(&s, &v, 2, 3, 9).is_err());
        let big = make_dataset(&s, &v, 30, 4, 9).unwrap();
        let ids: std::collections::BTreeSet<u32> = big.adaptation.iter().map(|u| u.index).collect();
        assert!(big.test.iter().all(|u| !ids.contains(&u.index)));
        assert_eq!(big, make_dataset(&s, &v, 30, 4, 9).unwrap());
    }

    #[test]
    fn loso_holds_out_target() {
        let cfg = DataConfig {
            dysarthric_per_band: 4,
            utts_per_speaker: 3,
            normal_speakers: 1,
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg, 3).unwrap();
        assert_eq!(corpus.dysarthric.len(), 16);
        let (meta, target) = loso_split(&corpus.dysarthric, 5).unwrap();
        assert_eq!(meta.len(), 15);
        assert_eq!(target.id, 5);
        assert!(meta
            .iter()
            .all(|t| t.id != 5 && t.adaptation.iter().all(|u| u.speaker_id != 5)));
        assert!(matches!(
            loso_split(&corpus.dysarthric, 99),
            Err(Error::UnknownSpeaker(99))
        ));
        let (two, _) = loso_split(&corpus.dysarthric[..2], 0).unwrap();
        assert_eq!(two.len(), 1);
    }
}
