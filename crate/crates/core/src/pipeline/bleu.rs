use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::text::tokenize;

const MAX_ORDER: usize = 4;

/// Corpus-level BLEU-4 with one reference per hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Bleu {
    /// 0..=100, rounded to two decimals.
    pub score: f64,
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl Bleu {
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        }
    }
}

fn ngram_counts<'t>(tokens: &'t [&str], n: usize) -> FxHashMap<&'t [&'t str], usize> {
    let mut counts = FxHashMap::default();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU over line-aligned hypothesis and reference sentences, on their
/// existing whitespace tokenization.
///
/// Orders for which the hypotheses contain no n-grams at all (every line
/// shorter than `n`) are left out of the geometric mean.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<Bleu> {
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h = tokenize(h.as_ref());
        let r = tokenize(r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            if h.len() < n {
                break;
            }
            totals[n - 1] += h.len() + 1 - n;
            let reference = ngram_counts(&r, n);
            matches[n - 1] += ngram_counts(&h, n)
                .into_iter()
                .map(|(gram, c)| c.min(reference.get(gram).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let used: Vec<usize> = (0..MAX_ORDER).filter(|&i| totals[i] > 0).collect();
    let score = if used.is_empty() || used.iter().any(|&i| matches[i] == 0) {
        0.0
    } else {
        let log_mean = used
            .iter()
            .map(|&i| (matches[i] as f64 / totals[i] as f64).ln())
            .sum::<f64>()
            / used.len() as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(Bleu {
        score: (score * 100.0).round() / 100.0,
        matches,
        totals,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}
