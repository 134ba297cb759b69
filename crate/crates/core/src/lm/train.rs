use rustc_hash::FxHashMap;

use super::{NGramEntry, NGramModel, TokenId, PSEUDO_LOGPROB};
use crate::error::{Error, Result};

/// Discount used when an order's counts-of-counts leave the Kneser-Ney
/// estimate undefined (no singletons or no doubletons).
const FALLBACK_DISCOUNT: f64 = 0.5;

/// `k` used when Kneser-Ney falls back to add-k.
const FALLBACK_ADD_K: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    /// Interpolated Kneser-Ney with one discount per order.
    KneserNey,
    /// Add-k with the lower-order distribution as the prior; at order 1
    /// this is plain add-k over the vocabulary.
    AddK(f64),
}

impl Smoothing {
    pub fn name(&self) -> &'static str {
        match self {
            Smoothing::KneserNey => "kneser-ney",
            Smoothing::AddK(_) => "add-k",
        }
    }
}

type Counts = FxHashMap<Vec<TokenId>, u64>;

/// Trains a backoff model from tokenized sentences. Each sentence is
/// padded with `order - 1` `<s>` markers and one `</s>`.
pub fn train<I, T, S>(corpus: I, order: usize, smoothing: Smoothing) -> Result<NGramModel>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut model = NGramModel::with_markers(order)?;
    if let Smoothing::AddK(k) = smoothing {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("add-k constant must be positive, got {k}")));
        }
    }

    // counts[n - 1]: raw counts of n-grams that end in a predicted token.
    let mut counts: Vec<Counts> = vec![Counts::default(); order];
    let mut padded: Vec<TokenId> = Vec::new();
    let mut sentences = 0usize;
    for sentence in corpus {
        sentences += 1;
        padded.clear();
        padded.resize(order - 1, model.bos);
        for t in sentence.as_ref() {
            let id = model.intern(t.as_ref());
            padded.push(id);
        }
        padded.push(model.eos);
        for end in order - 1..padded.len() {
            for n in 1..=order {
                *counts[n - 1].entry(padded[end + 1 - n..=end].to_vec()).or_insert(0) += 1;
            }
        }
    }
    if sentences == 0 {
        return Err(Error::Data("cannot train a language model on an empty corpus".into()));
    }

    let distinct_words = model
        .vocab
        .iter()
        .filter(|t| ![super::UNK, super::BOS, super::EOS].contains(&t.as_str()))
        .count();
    let smoothing = match smoothing {
        Smoothing::KneserNey if distinct_words <= 1 => {
            log::warn!("corpus has a single distinct token; Kneser-Ney discount undefined, using add-k");
            Smoothing::AddK(FALLBACK_ADD_K)
        }
        s => s,
    };

    match smoothing {
        Smoothing::KneserNey => {
            let adjusted = kneser_ney_counts(&counts, model.bos);
            estimate(&mut model, &adjusted, |n, order_counts| {
                let (mut n1, mut n2) = (0u64, 0u64);
                for &c in order_counts.values() {
                    match c {
                        1 => n1 += 1,
                        2 => n2 += 1,
                        _ => {}
                    }
                }
                if n1 == 0 || n2 == 0 {
                    log::warn!("order {n}: n1={n1}, n2={n2}; using fallback discount {FALLBACK_DISCOUNT}");
                    Weights::Discount(FALLBACK_DISCOUNT)
                } else {
                    Weights::Discount(n1 as f64 / (n1 as f64 + 2.0 * n2 as f64))
                }
            });
        }
        Smoothing::AddK(k) => {
            estimate(&mut model, &counts, |_, _| Weights::Prior(k));
        }
    }
    Ok(model)
}

/// Raw counts at the highest order and for n-grams starting with `<s>`;
/// continuation counts (number of distinct left extensions) otherwise.
fn kneser_ney_counts(raw: &[Counts], bos: TokenId) -> Vec<Counts> {
    let order = raw.len();
    let mut adjusted: Vec<Counts> = Vec::with_capacity(order);
    for n in 1..=order {
        if n == order {
            adjusted.push(raw[n - 1].clone());
            continue;
        }
        let mut continuation = Counts::default();
        for gram in raw[n].keys() {
            *continuation.entry(gram[1..].to_vec()).or_insert(0) += 1;
        }
        let table = raw[n - 1]
            .iter()
            .map(|(gram, &c)| {
                let value = if gram[0] == bos {
                    c
                } else {
                    continuation.get(gram).copied().unwrap_or(0)
                };
                (gram.clone(), value)
            })
            .collect();
        adjusted.push(table);
    }
    adjusted
}

enum Weights {
    /// Absolute discount `D`.
    Discount(f64),
    /// Add-k constant.
    Prior(f64),
}

#[derive(Default, Clone, Copy)]
struct ContextStats {
    total: f64,
    types: f64,
}

/// Fills `model` with interpolated probabilities and backoff weights.
/// `weights(n, counts)` picks the smoothing parameters of order `n`.
fn estimate<F>(model: &mut NGramModel, counts: &[Counts], weights: F)
where
    F: Fn(usize, &Counts) -> Weights,
{
    let order = counts.len();
    // Number of predictable tokens: everything but <s>.
    let vocab_size = (model.vocab.len() - 1) as f64;
    let mut probs: Vec<FxHashMap<Vec<TokenId>, f64>> = Vec::with_capacity(order);

    for n in 1..=order {
        let table = &counts[n - 1];
        let w = weights(n, table);
        let mut stats: FxHashMap<&[TokenId], ContextStats> = FxHashMap::default();
        for (gram, &c) in table {
            let s = stats.entry(&gram[..n - 1]).or_default();
            s.total += c as f64;
            s.types += 1.0;
        }

        // Mass handed to the lower order, per context.
        let gamma = |s: &ContextStats| match w {
            Weights::Discount(d) => d * s.types / s.total,
            Weights::Prior(k) => k * vocab_size / (s.total + k * vocab_size),
        };
        let lower = |gram: &[TokenId]| -> f64 {
            if n == 1 {
                // Unigram base: all discounted mass goes to <unk> under
                // Kneser-Ney; uniform under add-k.
                match w {
                    Weights::Discount(_) => f64::from(u8::from(gram[0] == model.unk)),
                    Weights::Prior(_) => 1.0 / vocab_size,
                }
            } else {
                probs[n - 2][&gram[1..]]
            }
        };

        let mut order_probs: FxHashMap<Vec<TokenId>, f64> = FxHashMap::default();
        for (gram, &c) in table {
            let s = &stats[&gram[..n - 1]];
            let own = match w {
                Weights::Discount(d) => (c as f64 - d).max(0.0) / s.total,
                Weights::Prior(k) => c as f64 / (s.total + k * vocab_size),
            };
            order_probs.insert(gram.clone(), own + gamma(s) * lower(gram));
        }
        if n == 1 && !order_probs.contains_key(&[model.unk][..]) {
            let s = &stats[&[][..]];
            let unk = [model.unk];
            order_probs.insert(unk.to_vec(), gamma(s) * lower(&unk));
        }

        for (gram, &p) in &order_probs {
            model.set(
                gram,
                NGramEntry {
                    logprob: p.log10(),
                    backoff: None,
                },
            );
        }
        if n >= 2 {
            for (history, s) in &stats {
                let bow = gamma(s).log10();
                match model.tables[n - 2].get_mut(*history) {
                    Some(e) => e.backoff = Some(bow),
                    None => {
                        // All-<s> contexts are never predicted themselves.
                        model.tables[n - 2].insert(
                            (*history).into(),
                            NGramEntry {
                                logprob: PSEUDO_LOGPROB,
                                backoff: Some(bow),
                            },
                        );
                    }
                }
            }
        }
        probs.push(order_probs);
    }
    let bos = [model.bos];
    if model.entry_ids(&bos).is_none() {
        model.set(
            &bos,
            NGramEntry {
                logprob: PSEUDO_LOGPROB,
                backoff: None,
            },
        );
    }
}
