//! Meta-learning re-initialization of a pre-trained CTC model for fast
//! per-speaker adaptation.
//!
//! * [`nn`]: per-frame MLP with batch normalization, backprop, SGD and a
//!   finite-difference gradient checker.
//! * [`ctc`]: CTC loss (forward-backward), brute-force oracle, greedy decoding
//!   and token error rate.
//! * [`meta`]: first-order MAML, Reptile and joint-training re-initialization
//!   with per-task BN statistics.
//! * [`speakers`]: synthetic severity-parameterized speaker tasks and LOSO splits.
//! * [`harness`]: pretraining, adaptation, evaluation and report generation.

pub mod ctc;
pub mod error;
pub mod harness;
pub mod meta;
pub mod nn;
pub mod seed;
pub mod speakers;

pub use error::{Error, Result};
