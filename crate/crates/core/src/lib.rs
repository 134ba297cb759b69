//! Unsupervised source-to-Translationese toolkit.
//!
//! The pipeline aligns two monolingual embedding spaces with an orthogonal
//! map ([`crosslingual`]), reads a bilingual lexicon off the aligned space
//! ([`lexicon`]), and glosses source text word by word with a beam search
//! that trades lexicon similarity against an n-gram target language model
//! ([`lm`], [`gloss`]). [`pipeline`] turns glossed parallel corpora into
//! training files for an external sequence-to-sequence trainer.

pub mod crosslingual;
pub mod embedding;
mod error;
pub mod gloss;
pub mod lexicon;
pub mod lm;
pub mod pipeline;
pub mod text;

pub use crosslingual::{LinearMap, RefineConfig, SeedLexicon};
pub use embedding::{EmbeddingMatrix, Metric};
pub use error::{Error, Result};
pub use gloss::{GlossConfig, GlossedSentence};
pub use lexicon::{BilingualLexicon, TranslationOption};
pub use lm::NGramModel;
