//! Run configuration, manifests, training-data preparation, BLEU and the
//! cipher-language end-to-end check.

pub mod bleu;
pub mod cipher;
mod config;
pub mod manifest;
pub mod prepare;
pub mod shuffle;

pub use bleu::{bleu, Bleu};
pub use cipher::{end_to_end_cipher_test, CipherConfig, CipherReport};
pub use config::PipelineConfig;
pub use manifest::Manifest;
pub use prepare::{prepare_training_data, ParallelCorpus, PrepareConfig, PreparedData};
