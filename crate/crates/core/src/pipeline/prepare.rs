//! Builds Translationese/target training data: per-language length
//! filtering and glossing, then a seeded shuffle of the combined pairs and
//! a dev split.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gloss::{gloss_sentences, GlossConfig};
use crate::lexicon::BilingualLexicon;
use crate::lm::NGramModel;
use crate::pipeline::shuffle::shuffle;
use crate::text::{read_lines, tokenize};

/// Line-aligned source/target sentences for one source language.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelCorpus {
    pub language: String,
    pub pairs: Vec<(String, String)>,
}

impl ParallelCorpus {
    pub fn new(language: impl Into<String>, source: Vec<String>, target: Vec<String>) -> Result<Self> {
        let language = language.into();
        if source.len() != target.len() {
            return Err(Error::Data(format!(
                "corpus {language}: {} source lines but {} target lines",
                source.len(),
                target.len()
            )));
        }
        Ok(ParallelCorpus {
            language,
            pairs: source.into_iter().zip(target).collect(),
        })
    }

    pub fn load(language: impl Into<String>, source: &Path, target: &Path) -> Result<Self> {
        ParallelCorpus::new(language, read_lines(source)?, read_lines(target)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepareConfig {
    pub max_len: usize,
    pub dev_size: usize,
    pub shuffle_seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            max_len: 100,
            dev_size: 3000,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreparedData {
    pub train_src: Vec<String>,
    pub train_tgt: Vec<String>,
    pub dev_src: Vec<String>,
    pub dev_tgt: Vec<String>,
    /// Pairs dropped by the length filter, per language.
    pub dropped: BTreeMap<String, usize>,
}

pub const OUTPUT_FILES: [&str; 4] = ["train.src", "train.tgt", "dev.src", "dev.tgt"];

impl PreparedData {
    /// Writes `train.src`, `train.tgt`, `dev.src`, `dev.tgt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let parts = [&self.train_src, &self.train_tgt, &self.dev_src, &self.dev_tgt];
        let mut written = Vec::with_capacity(4);
        for (name, lines) in OUTPUT_FILES.iter().zip(parts) {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            for line in lines {
                writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Glosses every corpus with its language's lexicon and splits the
/// shuffled union into train and dev.
pub fn prepare_training_data(
    corpora: &[ParallelCorpus],
    lexicons: &BTreeMap<String, BilingualLexicon>,
    lm: &NGramModel,
    gloss: &GlossConfig,
    cfg: &PrepareConfig,
    workers: usize,
) -> Result<PreparedData> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut dropped = BTreeMap::new();
    for corpus in corpora {
        let lexicon = lexicons
            .get(&corpus.language)
            .ok_or_else(|| Error::Config(format!("no lexicon for language {}", corpus.language)))?;
        let kept: Vec<&(String, String)> = corpus
            .pairs
            .iter()
            .filter(|(s, t)| tokenize(s).len() <= cfg.max_len && tokenize(t).len() <= cfg.max_len)
            .collect();
        dropped.insert(corpus.language.clone(), corpus.pairs.len() - kept.len());
        let sources: Vec<Vec<&str>> = kept.iter().map(|(s, _)| tokenize(s)).collect();
        let glossed = gloss_sentences(&sources, lexicon, lm, gloss, workers)?;
        log::info!(
            "{}: kept {} of {} pairs",
            corpus.language,
            kept.len(),
            corpus.pairs.len()
        );
        pairs.extend(
            glossed
                .into_iter()
                .zip(kept)
                .map(|(g, (_, t))| (g.tokens.join(" "), tokenize(t).join(" "))),
        );
    }
    if cfg.dev_size >= pairs.len() {
        return Err(Error::Data(format!(
            "dev size {} leaves no training data out of {} pairs",
            cfg.dev_size,
            pairs.len()
        )));
    }
    shuffle(&mut pairs, cfg.shuffle_seed);
    let train = pairs.split_off(cfg.dev_size);
    let (dev_src, dev_tgt) = pairs.into_iter().unzip();
    let (train_src, train_tgt) = train.into_iter().unzip();
    Ok(PreparedData {
        train_src,
        train_tgt,
        dev_src,
        dev_tgt,
        dropped,
    })
}
