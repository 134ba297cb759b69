#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use translationese::EmbeddingMatrix;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut StdRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

pub fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix
/// (signs fixed so the distribution is Haar).
pub fn random_orthogonal(rng: &mut StdRng, dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Row vector times matrix.
pub fn mul_row(x: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| x.iter().enumerate().map(|(i, xi)| xi * m[(i, j)]).sum())
        .collect()
}

pub fn matrix(tokens: Vec<String>, rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(tokens, rows).unwrap()
}

pub fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Source space of `n` random unit words and a target space that is the
/// same words rotated by `q`, with optional Gaussian noise.
pub fn rotated_pair(
    rng: &mut StdRng,
    n: usize,
    dim: usize,
    noise: f64,
) -> (EmbeddingMatrix, EmbeddingMatrix, DMatrix<f64>) {
    let q = random_orthogonal(rng, dim);
    let src_rows: Vec<Vec<f64>> = gaussian_rows(rng, n, dim).into_iter().map(unit).collect();
    let tgt_rows: Vec<Vec<f64>> = src_rows
        .iter()
        .map(|x| {
            let mut y = mul_row(x, &q);
            if noise > 0.0 {
                y.iter_mut().for_each(|v| *v += noise * rng.sample::<f64, _>(StandardNormal));
            }
            y
        })
        .collect();
    (matrix(words("s", n), src_rows), matrix(words("t", n), tgt_rows), q)
}

/// Seed lexicon pairing `s{i}` with `t{i}` for the given indices.
pub fn index_seed(indices: impl IntoIterator<Item = usize>) -> translationese::SeedLexicon {
    translationese::SeedLexicon {
        pairs: indices.into_iter().map(|i| (format!("s{i}"), format!("t{i}"))).collect(),
        source: translationese::crosslingual::SeedSource::Synthetic,
    }
}

/// Fraction of `s{i}` whose top-1 mapped neighbor is `t{i}`.
pub fn retrieval_accuracy(
    map: &translationese::LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    indices: &[usize],
) -> f64 {
    let lex = translationese::lexicon::build_lexicon(map, src, tgt, 1, translationese::Metric::Cosine).unwrap();
    let hits = indices
        .iter()
        .filter(|&&i| lex.options(&format!("s{i}")).unwrap()[0].target == format!("t{i}"))
        .count();
    hits as f64 / indices.len() as f64
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "da", "gu", "fe", "ho", "ja", "zu", "bi", "co", "xe",
    "wa", "yu", "ol", "an", "is", "em",
];
const PUNCTUATION: [&str; 11] = [",", ".", "!", "?", ";", ":", "(", ")", "-", "\"", "'"];

/// Synthetic target-language text with Zipfian word frequencies and a
/// sparse bigram structure, plus numbers and punctuation.
pub struct SyntheticLanguage {
    pub words: Vec<String>,
    pub numbers: Vec<String>,
    pub sentences: Vec<Vec<String>>,
}

impl SyntheticLanguage {
    pub fn generate(seed: u64, vocab: usize, numbers: usize, target_tokens: usize) -> Self {
        let mut rng = rng(seed);
        let mut words = Vec::with_capacity(vocab);
        let mut seen = std::collections::HashSet::new();
        while words.len() < vocab {
            let len = rng.gen_range(2..=4);
            let w: String = (0..len).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let numbers: Vec<String> = (0..numbers).map(|i| (1900 + i).to_string()).collect();
        // Zipfian sampling weights over words.
        let cumulative: Vec<f64> = (1..=vocab)
            .scan(0.0, |acc, r| {
                *acc += 1.0 / r as f64;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().unwrap();
        let successors: Vec<Vec<usize>> = (0..vocab)
            .map(|_| (0..4).map(|_| rng.gen_range(0..vocab.min(400))).collect())
            .collect();
        let zipf = |rng: &mut StdRng| {
            let u = rng.gen::<f64>() * total;
            cumulative.partition_point(|&c| c < u).min(vocab - 1)
        };
        let mut sentences = Vec::new();
        let mut produced = 0;
        while produced < target_tokens {
            let len = rng.gen_range(4..=18);
            let mut s = Vec::with_capacity(len + 1);
            let mut prev = zipf(&mut rng);
            s.push(words[prev].clone());
            for _ in 1..len {
                let roll = rng.gen::<f64>();
                if roll < 0.08 {
                    s.push(numbers[rng.gen_range(0..numbers.len())].clone());
                } else if roll < 0.16 {
                    s.push(PUNCTUATION[rng.gen_range(0..PUNCTUATION.len() - 1)].to_string());
                } else {
                    prev = if roll < 0.6 {
                        successors[prev][rng.gen_range(0..4)]
                    } else {
                        zipf(&mut rng)
                    };
                    s.push(words[prev].clone());
                }
            }
            s.push(".".to_string());
            produced += s.len();
            sentences.push(s);
        }
        SyntheticLanguage {
            words,
            numbers,
            sentences,
        }
    }

    /// Every token type, most frequent first (ties by first occurrence),
    /// followed by generated words and numbers that never occurred.
    pub fn vocabulary_by_frequency(&self) -> Vec<String> {
        let mut counts: std::collections::HashMap<&str, (usize, usize)> = std::collections::HashMap::new();
        let mut next = 0;
        for t in self.sentences.iter().flatten() {
            let e = counts.entry(t.as_str()).or_insert_with(|| {
                next += 1;
                (0, next)
            });
            e.0 += 1;
        }
        let mut vocab: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
        vocab.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let mut out: Vec<String> = vocab.into_iter().map(|(t, _)| t.to_string()).collect();
        let present: std::collections::HashSet<String> = out.iter().cloned().collect();
        for extra in self.words.iter().chain(&self.numbers).chain(PUNCTUATION.iter().map(|p| p.to_string()).collect::<Vec<_>>().iter()) {
            if !present.contains(extra) {
                out.push(extra.clone());
            }
        }
        out
    }

    /// Random unit embeddings for the whole vocabulary, frequency ordered.
    pub fn embeddings(&self, seed: u64, dim: usize) -> EmbeddingMatrix {
        let vocab = self.vocabulary_by_frequency();
        let mut rng = rng(seed);
        let rows = gaussian_rows(&mut rng, vocab.len(), dim);
        matrix(vocab, rows)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Small random glossing problem: a lexicon over `s0..s5`, a trained LM
/// over `w0..w7` and one source sentence. Prefix hypothesis counts stay
/// at most `max_prefix` so an unrecombined beam of that size is exact.
pub struct DecoderInstance {
    pub lexicon: translationese::BilingualLexicon,
    pub lm: translationese::NGramModel,
    pub sentence: Vec<String>,
    pub config: translationese::GlossConfig,
}

impl DecoderInstance {
    pub fn generate(seed: u64, max_prefix: usize) -> Self {
        use translationese::lexicon::TranslationOption;
        let mut r = rng(seed);
        let lm_words = words("w", 8);
        let order = r.gen_range(1..=3);
        let lm_corpus: Vec<Vec<String>> = (0..r.gen_range(3..12))
            .map(|_| (0..r.gen_range(1..7)).map(|_| lm_words[r.gen_range(0..8)].clone()).collect())
            .collect();
        let lm = translationese::lm::train(&lm_corpus, order, translationese::lm::Smoothing::KneserNey).unwrap();

        // Targets include two words the LM never saw.
        let mut targets = lm_words.clone();
        targets.push("x0".into());
        targets.push("x1".into());
        let mut lexicon = translationese::BilingualLexicon::new(4, translationese::Metric::Cosine);
        for s in words("s", 6) {
            let n = r.gen_range(1..=4);
            let mut picked: Vec<String> = Vec::new();
            while picked.len() < n {
                let t = targets[r.gen_range(0..targets.len())].clone();
                if !picked.contains(&t) {
                    picked.push(t);
                }
            }
            let mut options: Vec<TranslationOption> = picked
                .into_iter()
                .map(|target| TranslationOption {
                    target,
                    similarity: r.gen_range(-1.0..1.0),
                })
                .collect();
            options.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
            lexicon.insert(s, options).unwrap();
        }

        let len = r.gen_range(1..=6);
        let mut sentence = Vec::new();
        let mut prefix = 1;
        for i in 0..len {
            let token = if r.gen_bool(0.1) {
                "oov".to_string()
            } else {
                format!("s{}", r.gen_range(0..6))
            };
            let width = lexicon.options(&token).map_or(1, |o| o.len());
            if i + 1 < len && prefix * width > max_prefix {
                break;
            }
            prefix *= width;
            sentence.push(token);
        }
        let config = translationese::GlossConfig {
            alpha: r.gen_range(0.0..2.0),
            beta: r.gen_range(0.0..2.0),
            ..translationese::GlossConfig::default()
        };
        DecoderInstance {
            lexicon,
            lm,
            sentence,
            config,
        }
    }

    fn candidates(&self) -> Vec<Vec<(String, f64)>> {
        self.sentence
            .iter()
            .map(|s| match self.lexicon.options(s) {
                Some(o) => o.iter().map(|o| (o.target.clone(), o.similarity)).collect(),
                None => vec![(s.clone(), 0.0)],
            })
            .collect()
    }

    /// Scores one complete gloss with string-level LM queries.
    pub fn score(&self, gloss: &[(String, f64)]) -> f64 {
        let mut history: Vec<&str> = vec!["<s>"; self.lm.order() - 1];
        let mut total = 0.0;
        for (t, sim) in gloss {
            total += self.config.alpha * self.lm.logprob(t, &history) + self.config.beta * sim;
            history.push(t);
        }
        if self.config.score_end_marker {
            total += self.config.alpha * self.lm.logprob("</s>", &history);
        }
        total
    }

    /// Best gloss over every option combination.
    pub fn brute_force(&self) -> (Vec<String>, f64) {
        let cands = self.candidates();
        let mut best: Option<(Vec<String>, f64)> = None;
        let mut idx = vec![0usize; cands.len()];
        loop {
            let gloss: Vec<(String, f64)> = idx.iter().zip(&cands).map(|(&i, c)| c[i].clone()).collect();
            let s = self.score(&gloss);
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((gloss.into_iter().map(|g| g.0).collect(), s));
            }
            let mut p = 0;
            loop {
                if p == idx.len() {
                    return best.unwrap();
                }
                idx[p] += 1;
                if idx[p] < cands[p].len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
        }
    }
}
