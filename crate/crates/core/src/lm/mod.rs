//! Backoff n-gram language model in the log10 domain.
//!
//! Models are trained with interpolated Kneser-Ney (or an add-k variant)
//! and stored in backoff form, so a trained model and one read from an
//! ARPA file answer queries through the same code path.

mod arpa;
mod train;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

pub use train::{train, Smoothing};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Conventional log10 probability for entries that are never predicted
/// (`<s>` and all-`<s>` contexts).
pub const PSEUDO_LOGPROB: f64 = -99.0;

/// Highest supported model order.
pub const MAX_ORDER: usize = 16;

pub type TokenId = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NGramEntry {
    pub logprob: f64,
    /// log10 backoff weight; `None` for n-grams that never act as a
    /// context (treated as 0).
    pub backoff: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct NGramModel {
    order: usize,
    vocab: Vec<String>,
    ids: FxHashMap<String, TokenId>,
    tables: Vec<FxHashMap<Box<[TokenId]>, NGramEntry>>,
    unk: TokenId,
    bos: TokenId,
    eos: TokenId,
}

impl NGramModel {
    /// Empty model whose vocabulary starts with `<unk>`, `<s>`, `</s>`.
    pub(crate) fn with_markers(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Config(format!("model order must be in 1..={MAX_ORDER}, got {order}")));
        }
        let mut model = NGramModel {
            order,
            vocab: Vec::new(),
            ids: FxHashMap::default(),
            tables: vec![FxHashMap::default(); order],
            unk: 0,
            bos: 0,
            eos: 0,
        };
        model.unk = model.intern(UNK);
        model.bos = model.intern(BOS);
        model.eos = model.intern(EOS);
        Ok(model)
    }

    pub(crate) fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.vocab.len() as TokenId;
        self.vocab.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        id
    }

    pub(crate) fn set(&mut self, gram: &[TokenId], entry: NGramEntry) {
        self.tables[gram.len() - 1].insert(gram.into(), entry);
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// All vocabulary tokens, markers included, in id order.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.vocab[id as usize]
    }

    /// Id of `token`, or of `<unk>` for unknown tokens.
    pub fn id(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(self.unk)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos
    }

    /// Number of stored n-grams of length `n`.
    pub fn count(&self, n: usize) -> usize {
        self.tables.get(n.wrapping_sub(1)).map_or(0, FxHashMap::len)
    }

    pub fn entry(&self, gram: &[&str]) -> Option<NGramEntry> {
        if gram.is_empty() || gram.len() > self.order {
            return None;
        }
        let mut ids = Vec::with_capacity(gram.len());
        for t in gram {
            ids.push(*self.ids.get(*t)?);
        }
        self.entry_ids(&ids)
    }

    pub fn entry_ids(&self, gram: &[TokenId]) -> Option<NGramEntry> {
        self.tables.get(gram.len().checked_sub(1)?)?.get(gram).copied()
    }

    /// Context of `order - 1` sentence-start markers.
    pub fn start_context(&self) -> Vec<TokenId> {
        vec![self.bos; self.order - 1]
    }

    /// log10 P(token | context); the context is truncated to its last
    /// `order - 1` tokens and unknown tokens map to `<unk>`.
    pub fn logprob(&self, token: &str, context: &[&str]) -> f64 {
        let ctx: Vec<TokenId> = context.iter().map(|t| self.id(t)).collect();
        self.logprob_ids(self.id(token), &ctx)
    }

    /// Backoff query on token ids.
    pub fn logprob_ids(&self, token: TokenId, context: &[TokenId]) -> f64 {
        let ctx = &context[context.len().saturating_sub(self.order - 1)..];
        let mut key = [0 as TokenId; MAX_ORDER];
        key[..ctx.len()].copy_from_slice(ctx);
        key[ctx.len()] = token;
        let full = &key[..=ctx.len()];
        let mut backoff = 0.0;
        for start in 0..=ctx.len() {
            let gram = &full[start..];
            if let Some(e) = self.tables[gram.len() - 1].get(gram) {
                return backoff + e.logprob;
            }
            let history = &full[start..ctx.len()];
            if !history.is_empty() {
                if let Some(e) = self.tables[history.len() - 1].get(history) {
                    backoff += e.backoff.unwrap_or(0.0);
                }
            }
        }
        // Only reachable for ids without a unigram entry.
        backoff + self.tables[0].get(&[self.unk][..]).map_or(PSEUDO_LOGPROB, |e| e.logprob)
    }

    /// log10 probability of a whole sentence, `</s>` included.
    pub fn sentence_logprob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let mut ctx = self.start_context();
        let mut total = 0.0;
        for t in sentence {
            let id = self.id(t.as_ref());
            total += self.logprob_ids(id, &ctx);
            push_context(&mut ctx, id, self.order);
        }
        total + self.logprob_ids(self.eos, &ctx)
    }

    /// Tokens that can be predicted (everything except `<s>`).
    pub fn predictable(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.vocab.len() as TokenId).filter(move |&id| id != self.bos)
    }
}

/// Appends `id` to a sliding LM context of at most `order - 1` tokens.
pub fn push_context(ctx: &mut Vec<TokenId>, id: TokenId, order: usize) {
    if order <= 1 {
        ctx.clear();
        return;
    }
    if ctx.len() == order - 1 {
        ctx.remove(0);
    }
    ctx.push(id);
}

/// `10^(−Σ log10 P / N)` over every token and each `</s>`.
pub fn perplexity<S: AsRef<str>>(model: &NGramModel, corpus: &[Vec<S>]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Data("perplexity needs a non-empty corpus".into()));
    }
    let mut total = 0.0;
    let mut scored = 0usize;
    for sentence in corpus {
        total += model.sentence_logprob(sentence);
        scored += sentence.len() + 1;
    }
    Ok(10f64.powf(-total / scored as f64))
}
