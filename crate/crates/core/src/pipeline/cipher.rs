//! End-to-end check on a synthetic "cipher" source language.
//!
//! Every alphabetic target token gets a fresh made-up spelling; numbers and
//! punctuation are kept verbatim and become the identical-string seed. The
//! cipher's embeddings are (optionally noisy) copies of the target rows, so
//! a correct pipeline must recover the relabeling and gloss ciphered text
//! back into the original.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;
use rustc_hash::FxHashMap;

use crate::crosslingual::{procrustes, refine, seed_identical_strings, RefineConfig};
use crate::embedding::{EmbeddingMatrix, Metric};
use crate::error::{Error, Result};
use crate::gloss::{gloss_sentences, GlossConfig};
use crate::lexicon::{build_lexicon, evaluate_precision, GoldLexicon};
use crate::lm::{train, Smoothing};
use crate::pipeline::bleu::bleu;
use crate::pipeline::shuffle::shuffle;

#[derive(Clone, Debug, PartialEq)]
pub struct CipherConfig {
    /// Standard deviation of per-component Gaussian noise added to the
    /// cipher embeddings before renormalization.
    pub noise: f64,
    pub heldout_fraction: f64,
    pub k: usize,
    pub refine: RefineConfig,
    pub order: usize,
    pub gloss: GlossConfig,
    /// Size of the most-frequent-word slice reported separately.
    pub top_words: usize,
    pub workers: usize,
}

impl Default for CipherConfig {
    fn default() -> Self {
        CipherConfig {
            noise: 0.0,
            heldout_fraction: 0.1,
            k: 20,
            refine: RefineConfig::default(),
            order: 5,
            gloss: GlossConfig::default(),
            top_words: 1000,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CipherReport {
    pub vocabulary: usize,
    pub ciphered_words: usize,
    pub seed_pairs: usize,
    pub refine_pairs: Vec<usize>,
    /// P@1 over every ciphered word.
    pub p_at_1: f64,
    /// P@1 over the `top_words` most frequent ciphered words.
    pub p_at_1_top: f64,
    pub top_evaluated: usize,
    pub heldout_sentences: usize,
    pub bleu: f64,
    pub elapsed: Duration,
}

fn is_alphabetic_token(token: &str) -> bool {
    token.chars().any(char::is_alphabetic)
}

fn spell(mut n: usize) -> String {
    // Bijective base-26 with a 'q' prefix, e.g. 0 -> "qa", 26 -> "qaa".
    let mut letters = Vec::new();
    loop {
        letters.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    letters.push(b'q');
    letters.reverse();
    String::from_utf8(letters).expect("ascii")
}

/// Bijective relabeling of the alphabetic tokens of `vocab`. Cipher
/// spellings never collide with any token of `vocab`.
pub fn cipher_vocabulary(vocab: &[String], seed: u64) -> FxHashMap<String, String> {
    let taken: HashSet<&str> = vocab.iter().map(String::as_str).collect();
    let mut words: Vec<&String> = vocab.iter().filter(|t| is_alphabetic_token(t)).collect();
    shuffle(&mut words, seed);
    let mut next = 0usize;
    let mut mapping = FxHashMap::default();
    for w in words {
        let code = loop {
            let c = spell(next);
            next += 1;
            if !taken.contains(c.as_str()) {
                break c;
            }
        };
        mapping.insert(w.clone(), code);
    }
    mapping
}

/// Source-side embeddings: relabeled copies of the target rows, with
/// optional Gaussian noise.
pub fn cipher_embeddings(
    tgt: &EmbeddingMatrix,
    mapping: &FxHashMap<String, String>,
    noise: f64,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let mut rng = SplitMix64::seed_from_u64(seed ^ 0x5EED_0FC1_F3E5);
    let normal = if noise > 0.0 {
        Some(Normal::new(0.0, noise).map_err(|e| Error::Config(format!("bad noise level: {e}")))?)
    } else {
        None
    };
    let mut tokens = Vec::with_capacity(tgt.len());
    let mut rows = Vec::with_capacity(tgt.len());
    for (i, token) in tgt.tokens().iter().enumerate() {
        tokens.push(mapping.get(token).cloned().unwrap_or_else(|| token.clone()));
        let mut row = tgt.row(i).to_vec();
        if let Some(normal) = &normal {
            row.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
        }
        rows.push(row);
    }
    EmbeddingMatrix::from_rows(tokens, rows)
}

/// Runs map → refine → lexicon → gloss on a ciphered copy of `corpus`.
pub fn end_to_end_cipher_test(
    corpus: &[Vec<String>],
    tgt: &EmbeddingMatrix,
    cfg: &CipherConfig,
    seed: u64,
) -> Result<CipherReport> {
    let started = Instant::now();
    if corpus.is_empty() {
        return Err(Error::Data("cipher test needs a non-empty corpus".into()));
    }
    let mapping = cipher_vocabulary(tgt.tokens(), seed);
    let src = cipher_embeddings(tgt, &mapping, cfg.noise, seed)?;

    let seed_lexicon = seed_identical_strings(&src, tgt)?;
    let initial = procrustes(&src, tgt, &seed_lexicon)?;
    let refined = refine(&initial.map, &src, tgt, &cfg.refine)?;
    let lexicon = build_lexicon(&refined.map, &src, tgt, cfg.k.min(tgt.len()), Metric::Cosine)?;

    let ciphered: Vec<(&str, &str)> = tgt
        .tokens()
        .iter()
        .filter_map(|t| mapping.get(t).map(|c| (c.as_str(), t.as_str())))
        .collect();
    if ciphered.is_empty() {
        return Err(Error::Data("corpus vocabulary has no alphabetic tokens".into()));
    }
    let all = evaluate_precision(&lexicon, &GoldLexicon::from_pairs(ciphered.iter().copied()))?;
    let top = evaluate_precision(
        &lexicon,
        &GoldLexicon::from_pairs(ciphered.iter().take(cfg.top_words).copied()),
    )?;

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    shuffle(&mut order, seed);
    let heldout_count = ((corpus.len() as f64 * cfg.heldout_fraction).ceil() as usize).clamp(1, corpus.len());
    let (heldout_idx, train_idx) = order.split_at(heldout_count);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let training: Vec<&Vec<String>> = train_idx.iter().map(|&i| &corpus[i]).collect();
    let lm = train(
        if training.is_empty() { vec![&corpus[0]] } else { training },
        cfg.order,
        Smoothing::KneserNey,
    )?;

    let heldout: Vec<&Vec<String>> = heldout_idx
        .iter()
        .map(|&i| &corpus[i])
        .filter(|s| !s.is_empty() && s.iter().all(|t| tgt.contains(t)))
        .collect();
    let ciphered_text: Vec<Vec<&str>> = heldout
        .iter()
        .map(|s| s.iter().map(|t| mapping.get(t).map_or(t.as_str(), String::as_str)).collect())
        .collect();
    let glossed = gloss_sentences(&ciphered_text, &lexicon, &lm, &cfg.gloss, cfg.workers)?;
    let hypotheses: Vec<String> = glossed.iter().map(|g| g.tokens.join(" ")).collect();
    let references: Vec<String> = heldout.iter().map(|s| s.join(" ")).collect();
    let score = if hypotheses.is_empty() {
        0.0
    } else {
        bleu(&hypotheses, &references)?.score
    };

    Ok(CipherReport {
        vocabulary: tgt.len(),
        ciphered_words: ciphered.len(),
        seed_pairs: seed_lexicon.pairs.len(),
        refine_pairs: refined.iterations.iter().map(|r| r.pairs).collect(),
        p_at_1: all.p_at_1,
        p_at_1_top: top.p_at_1,
        top_evaluated: top.evaluated,
        heldout_sentences: hypotheses.len(),
        bleu: score,
        elapsed: started.elapsed(),
    })
}
