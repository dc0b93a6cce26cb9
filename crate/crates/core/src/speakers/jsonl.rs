use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::dataset::{TaskData, Utterance};
use crate::error::{Error, Result};
use crate::nn::{Matrix, Sample};

/// One line of a dataset export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub speaker_id: u32,
    pub block: u8,
    pub labels: Vec<u32>,
    pub frames: Vec<Vec<f64>>,
}

/// Writes every utterance of every task, in utterance-index order per speaker.
pub fn export_jsonl(tasks: &[TaskData], mut out: impl Write) -> Result<()> {
    for task in tasks {
        let mut utts: Vec<&Utterance> = task.adaptation.iter().chain(&task.test).collect();
        utts.sort_by_key(|u| u.index);
        for u in utts {
            let rec = UtteranceRecord {
                speaker_id: u.speaker_id,
                block: u.block,
                labels: u.sample.labels.clone(),
                frames: u.sample.frames.to_rows(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads a dataset export back into tasks, one per speaker in order of first
/// appearance. Block 2 becomes the test set.
pub fn import_jsonl(input: impl BufRead) -> Result<Vec<TaskData>> {
    let mut tasks: Vec<TaskData> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord = serde_json::from_str(&line)?;
        if !(1..=3).contains(&rec.block) {
            return Err(Error::Config(format!("line {}: block must be 1, 2 or 3", lineno + 1)));
        }
        let frames = Matrix::from_rows(&rec.frames)?;
        if frames.rows() == 0 {
            return Err(Error::EmptyData(format!(
                "line {}: utterance has no frames",
                lineno + 1
            )));
        }
        let pos = match tasks.iter().position(|t| t.id == rec.speaker_id) {
            Some(p) => p,
            None => {
                tasks.push(TaskData {
                    id: rec.speaker_id,
                    speaker: None,
                    adaptation: Vec::new(),
                    test: Vec::new(),
                });
                tasks.len() - 1
            }
        };
        let task = &mut tasks[pos];
        let index = (task.adaptation.len() + task.test.len()) as u32;
        let utt = Utterance {
            speaker_id: rec.speaker_id,
            index,
            block: rec.block,
            sample: Sample {
                frames,
                labels: rec.labels,
            },
        };
        if rec.block == 2 {
            task.test.push(utt);
        } else {
            task.adaptation.push(utt);
        }
    }
    Ok(tasks)
}
