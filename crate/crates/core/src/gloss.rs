//! Context-aware word-by-word glossing.
//!
//! Each source token is replaced by one of its lexicon options. A
//! monotone beam search picks the sequence maximizing
//! `Σ α·log10 P_LM(t_i | history) + β·sim(s_i, t_i)`, with an optional final
//! `α·log10 P_LM(</s> | history)` term.

use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::lexicon::BilingualLexicon;
use crate::lm::{NGramModel, TokenId, MAX_ORDER};
use crate::text::tokenize;

/// Lines glossed per parallel batch in [`gloss_corpus`].
const BATCH_LINES: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovPolicy {
    /// Emit the source token unchanged with similarity 0.
    CopyThrough,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub stack_size: usize,
    pub oov_policy: OovPolicy,
    /// Merge hypotheses with identical LM histories, keeping the best.
    pub recombine: bool,
    pub score_end_marker: bool,
}

impl Default for GlossConfig {
    fn default() -> Self {
        GlossConfig {
            alpha: 0.01,
            beta: 0.5,
            stack_size: 100,
            oov_policy: OovPolicy::CopyThrough,
            recombine: true,
            score_end_marker: true,
        }
    }
}

impl GlossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stack_size == 0 {
            return Err(Error::Config("stack size must be at least 1".into()));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config("alpha and beta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlossedSentence {
    /// Output token `i` glosses input token `i`.
    pub tokens: Vec<String>,
    pub score: f64,
    pub oov: Vec<bool>,
}

impl GlossedSentence {
    pub fn alignment(&self) -> impl Iterator<Item = (usize, usize)> {
        (0..self.tokens.len()).map(|i| (i, i))
    }

    pub fn oov_count(&self) -> usize {
        self.oov.iter().filter(|&&f| f).count()
    }
}

/// Last `order - 1` LM ids of a hypothesis; unused slots stay zero.
#[derive(Clone, Copy, PartialEq, Eq)]
struct History {
    ids: [TokenId; MAX_ORDER - 1],
    len: u8,
}

impl Hash for History {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.as_slice().hash(state);
    }
}

impl History {
    fn start(lm: &NGramModel) -> Self {
        let mut h = History {
            ids: [0; MAX_ORDER - 1],
            len: 0,
        };
        for _ in 0..lm.order() - 1 {
            h = h.push(lm.bos_id(), lm.order());
        }
        h
    }

    fn as_slice(&self) -> &[TokenId] {
        &self.ids[..self.len as usize]
    }

    fn push(&self, id: TokenId, order: usize) -> Self {
        let cap = order - 1;
        if cap == 0 {
            return *self;
        }
        let mut next = *self;
        if next.len as usize == cap {
            next.ids.copy_within(1..cap, 0);
            next.ids[cap - 1] = id;
        } else {
            next.ids[next.len as usize] = id;
            next.len += 1;
        }
        next
    }
}

struct Candidate<'a> {
    text: &'a str,
    lm_id: TokenId,
    similarity: f64,
}

#[derive(Clone, Copy)]
struct Hypothesis {
    score: f64,
    history: History,
    /// Index into the back-pointer layer of the current position.
    node: u32,
}

#[derive(Clone, Copy)]
struct BackPointer {
    parent: u32,
    candidate: u32,
}

/// Beam-search glossing of one tokenized sentence.
pub fn gloss_sentence<S: AsRef<str>>(
    sentence: &[S],
    lex: &BilingualLexicon,
    lm: &NGramModel,
    cfg: &GlossConfig,
) -> Result<GlossedSentence> {
    cfg.validate()?;
    if sentence.is_empty() {
        return Ok(GlossedSentence {
            tokens: Vec::new(),
            score: 0.0,
            oov: Vec::new(),
        });
    }
    let order = lm.order();
    let mut oov = Vec::with_capacity(sentence.len());
    let options: Vec<Vec<Candidate<'_>>> = sentence
        .iter()
        .map(|s| {
            let s = s.as_ref();
            match lex.options(s).filter(|o| !o.is_empty()) {
                Some(opts) => {
                    oov.push(false);
                    opts.iter()
                        .map(|o| Candidate {
                            text: &o.target,
                            lm_id: lm.id(&o.target),
                            similarity: o.similarity,
                        })
                        .collect()
                }
                None => {
                    oov.push(true);
                    vec![Candidate {
                        text: s,
                        lm_id: lm.id(s),
                        similarity: 0.0,
                    }]
                }
            }
        })
        .collect();

    let mut layers: Vec<Vec<BackPointer>> = Vec::with_capacity(sentence.len());
    let mut stack = vec![Hypothesis {
        score: 0.0,
        history: History::start(lm),
        node: 0,
    }];
    let last = sentence.len() - 1;

    for (pos, cands) in options.iter().enumerate() {
        let mut expanded: Vec<Hypothesis> = Vec::with_capacity(stack.len() * cands.len());
        let mut layer: Vec<BackPointer> = Vec::with_capacity(stack.len() * cands.len());
        let mut best_for: FxHashMap<History, usize> = FxHashMap::default();
        for hyp in &stack {
            for (ci, cand) in cands.iter().enumerate() {
                let lp = lm.logprob_ids(cand.lm_id, hyp.history.as_slice());
                let mut score = hyp.score + (cfg.alpha * lp + cfg.beta * cand.similarity);
                let history = hyp.history.push(cand.lm_id, order);
                if pos == last && cfg.score_end_marker {
                    score += cfg.alpha * lm.logprob_ids(lm.eos_id(), history.as_slice());
                }
                let next = Hypothesis {
                    score,
                    history,
                    node: layer.len() as u32,
                };
                layer.push(BackPointer {
                    parent: hyp.node,
                    candidate: ci as u32,
                });
                if cfg.recombine {
                    match best_for.get(&history) {
                        Some(&slot) => {
                            if score > expanded[slot].score {
                                expanded[slot] = next;
                            }
                        }
                        None => {
                            best_for.insert(history, expanded.len());
                            expanded.push(next);
                        }
                    }
                } else {
                    expanded.push(next);
                }
            }
        }
        // Stable: equal scores keep generation order.
        expanded.sort_by(|a, b| b.score.total_cmp(&a.score));
        expanded.truncate(cfg.stack_size);
        stack = expanded;
        layers.push(layer);
    }

    let best = stack[0];
    let mut tokens = vec![String::new(); sentence.len()];
    let mut node = best.node;
    for pos in (0..sentence.len()).rev() {
        let bp = layers[pos][node as usize];
        tokens[pos] = options[pos][bp.candidate as usize].text.to_owned();
        node = bp.parent;
    }
    Ok(GlossedSentence {
        tokens,
        score: best.score,
        oov,
    })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Glosses many sentences on `workers` threads (0 = one per core).
/// Output order matches input order.
pub fn gloss_sentences<S: AsRef<str> + Sync>(
    sentences: &[Vec<S>],
    lex: &BilingualLexicon,
    lm: &NGramModel,
    cfg: &GlossConfig,
    workers: usize,
) -> Result<Vec<GlossedSentence>> {
    cfg.validate()?;
    thread_pool(workers)?.install(|| {
        sentences
            .par_iter()
            .map(|s| gloss_sentence(s, lex, lm, cfg))
            .collect()
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlossStats {
    pub sentences: usize,
    pub tokens: usize,
    pub oov_tokens: usize,
    pub elapsed: Duration,
}

impl GlossStats {
    pub fn oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov_tokens as f64 / self.tokens as f64
        }
    }

    pub fn sentences_per_second(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.sentences as f64 / secs
        } else {
            0.0
        }
    }
}

/// Glosses a one-sentence-per-line stream. When `scores` is given, each
/// output line gets a companion `score<TAB>oov flags` line there.
#[allow(clippy::too_many_arguments)]
pub fn gloss_corpus<R: BufRead, W: Write>(
    input: R,
    origin: &Path,
    output: &mut W,
    mut scores: Option<&mut dyn Write>,
    lex: &BilingualLexicon,
    lm: &NGramModel,
    cfg: &GlossConfig,
    workers: usize,
) -> Result<GlossStats> {
    cfg.validate()?;
    let pool = thread_pool(workers)?;
    let started = Instant::now();
    let mut stats = GlossStats::default();
    let mut lines = input.split(b'\n');
    let mut line_no = 0usize;
    let out_err = |e: std::io::Error| Error::io("<output>", e);
    loop {
        let mut batch: Vec<String> = Vec::with_capacity(BATCH_LINES);
        while batch.len() < BATCH_LINES {
            let Some(raw) = lines.next() else { break };
            line_no += 1;
            let raw = raw.map_err(|e| Error::format(origin, line_no, format!("read failed: {e}")))?;
            let mut text = String::from_utf8(raw).map_err(|_| Error::format(origin, line_no, "invalid UTF-8"))?;
            if text.ends_with('\r') {
                text.pop();
            }
            batch.push(text);
        }
        if batch.is_empty() {
            break;
        }
        let glossed: Vec<GlossedSentence> = pool.install(|| {
            batch
                .par_iter()
                .map(|line| gloss_sentence(&tokenize(line), lex, lm, cfg))
                .collect::<Result<_>>()
        })?;
        for g in &glossed {
            stats.sentences += 1;
            stats.tokens += g.tokens.len();
            stats.oov_tokens += g.oov_count();
            writeln!(output, "{}", g.tokens.join(" ")).map_err(out_err)?;
            if let Some(side) = scores.as_mut() {
                let flags: Vec<&str> = g.oov.iter().map(|&f| if f { "1" } else { "0" }).collect();
                writeln!(side, "{:.6}\t{}", g.score, flags.join(" ")).map_err(out_err)?;
            }
        }
    }
    stats.elapsed = started.elapsed();
    log::info!(
        "glossed {} sentences ({:.1}/s), OOV rate {:.4}",
        stats.sentences,
        stats.sentences_per_second(),
        stats.oov_rate()
    );
    Ok(stats)
}
