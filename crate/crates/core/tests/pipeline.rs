mod common;

use std::collections::BTreeMap;

use common::*;
use translationese::lexicon::TranslationOption;
use translationese::lm::{train, Smoothing};
use translationese::pipeline::{
    bleu, end_to_end_cipher_test, prepare_training_data, CipherConfig, Manifest, ParallelCorpus, PipelineConfig,
    PrepareConfig,
};
use translationese::pipeline::shuffle::shuffle;
use translationese::{BilingualLexicon, GlossConfig, Metric};

fn word_lexicon(prefix: &str, n: usize) -> BilingualLexicon {
    let mut lex = BilingualLexicon::new(1, Metric::Cosine);
    for i in 0..n {
        lex.insert(
            format!("{prefix}{i}"),
            vec![TranslationOption {
                target: format!("w{i}"),
                similarity: 0.5,
            }],
        )
        .unwrap();
    }
    lex
}

fn corpora() -> (Vec<ParallelCorpus>, BTreeMap<String, BilingualLexicon>) {
    let make = |lang: &str, prefix: &str| {
        let src = (0..10).map(|i| format!("{prefix}{i} {prefix}{}", (i + 1) % 10)).collect();
        let tgt = (0..10).map(|i| format!("{lang} target {i}")).collect();
        ParallelCorpus::new(lang, src, tgt).unwrap()
    };
    let lexicons = BTreeMap::from([
        ("aa".to_string(), word_lexicon("a", 10)),
        ("bb".to_string(), word_lexicon("b", 10)),
    ]);
    (vec![make("aa", "a"), make("bb", "b")], lexicons)
}

fn expected_pairs() -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for lang in ["aa", "bb"] {
        for i in 0..10 {
            pairs.push((format!("w{i} w{}", (i + 1) % 10), format!("{lang} target {i}")));
        }
    }
    pairs
}

#[test]
fn prepare_splits_and_preserves_pairs() {
    let (corpora, lexicons) = corpora();
    let lm = train([vec!["w1", "w2"]], 2, Smoothing::KneserNey).unwrap();
    let cfg = PrepareConfig {
        dev_size: 3,
        shuffle_seed: 9,
        ..PrepareConfig::default()
    };
    let out = prepare_training_data(&corpora, &lexicons, &lm, &GlossConfig::default(), &cfg, 2).unwrap();
    assert_eq!(out.train_src.len(), 17);
    assert_eq!(out.train_tgt.len(), 17);
    assert_eq!(out.dev_src.len(), 3);
    assert_eq!(out.dev_tgt.len(), 3);

    let mut got: Vec<(String, String)> = out
        .dev_src
        .iter()
        .chain(&out.train_src)
        .cloned()
        .zip(out.dev_tgt.iter().chain(&out.train_tgt).cloned())
        .collect();
    // Pairs stay aligned and the dev split is the head of the shuffled union.
    let mut shuffled = expected_pairs();
    shuffle(&mut shuffled, 9);
    assert_eq!(got, shuffled);
    got.sort();
    let mut want = expected_pairs();
    want.sort();
    assert_eq!(got, want);

    let again = prepare_training_data(&corpora, &lexicons, &lm, &GlossConfig::default(), &cfg, 5).unwrap();
    assert_eq!(again, out);
    let other = PrepareConfig {
        shuffle_seed: 10,
        ..cfg.clone()
    };
    let reshuffled = prepare_training_data(&corpora, &lexicons, &lm, &GlossConfig::default(), &other, 1).unwrap();
    assert_ne!(reshuffled.train_src, out.train_src);

    let dir = tempfile::tempdir().unwrap();
    let files = out.write(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let train_src = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(train_src.lines().collect::<Vec<_>>(), out.train_src);
}

#[test]
fn prepare_requires_every_lexicon() {
    let (corpora, mut lexicons) = corpora();
    lexicons.remove("bb");
    let lm = train([vec!["w1"]], 2, Smoothing::KneserNey).unwrap();
    let err = prepare_training_data(&corpora, &lexicons, &lm, &GlossConfig::default(), &PrepareConfig::default(), 1)
        .unwrap_err();
    assert!(err.to_string().contains("bb"));
}

#[test]
fn bleu_of_identical_text_is_100() {
    let lang = SyntheticLanguage::generate(71, 100, 5, 2_000);
    let text: Vec<String> = lang.sentences.iter().map(|s| s.join(" ")).collect();
    assert_eq!(bleu(&text, &text).unwrap().score, 100.0);
}

#[test]
fn bleu_ignores_sentence_order() {
    let lang = SyntheticLanguage::generate(72, 100, 5, 2_000);
    let refs: Vec<String> = lang.sentences.iter().map(|s| s.join(" ")).collect();
    let hyps: Vec<String> = lang
        .sentences
        .iter()
        .map(|s| s.iter().rev().cloned().collect::<Vec<_>>().join(" "))
        .collect();
    let base = bleu(&hyps, &refs).unwrap();
    let mut pairs: Vec<(String, String)> = hyps.into_iter().zip(refs).collect();
    shuffle(&mut pairs, 3);
    let (h, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
    let permuted = bleu(&h, &r).unwrap();
    assert_eq!(base.score, permuted.score);
    assert_eq!(base.matches, permuted.matches);
    assert!(base.score < 100.0);
}

#[test]
fn default_manifest_parameters() {
    let mut m = Manifest::new("map");
    m.parameters(&PipelineConfig::default());
    for (key, value) in [
        ("vocab_limit", "100000"),
        ("k", "20"),
        ("order", "5"),
        ("alpha", "0.01"),
        ("beta", "0.5"),
        ("stack_size", "100"),
        ("max_len", "100"),
        ("dev_size", "3000"),
    ] {
        assert_eq!(m.get(key), Some(value), "{key}");
    }
}

#[test]
fn small_cipher_round_trip() {
    let lang = SyntheticLanguage::generate(73, 150, 10, 10_000);
    let tgt = lang.embeddings(74, 32);
    let cfg = CipherConfig {
        order: 3,
        top_words: 100,
        ..CipherConfig::default()
    };
    let report = end_to_end_cipher_test(&lang.sentences, &tgt, &cfg, 75).unwrap();
    assert!(report.seed_pairs > 0);
    assert_eq!(report.p_at_1, 1.0);
    assert_eq!(report.p_at_1_top, 1.0);
    assert_eq!(report.top_evaluated, 100);
    assert!(report.heldout_sentences > 0);
    assert_eq!(report.bleu, 100.0);

    let again = end_to_end_cipher_test(&lang.sentences, &tgt, &CipherConfig { workers: 1, ..cfg }, 75).unwrap();
    assert_eq!(again.refine_pairs, report.refine_pairs);
}
