use std::fs;
use std::path::{Path, PathBuf};

use crate::crosslingual::RefineConfig;
use crate::embedding::Metric;
use crate::error::{Error, Result};
use crate::gloss::GlossConfig;
use crate::lm::Smoothing;

/// Every tunable of the pipeline. Defaults:
/// 100K-word vocabularies, 20 options per word, a 5-gram LM, α = 0.01,
/// β = 0.5, a beam of 100, 100-token sentences and a 3000-pair dev set.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub src_embeddings: Option<PathBuf>,
    pub tgt_embeddings: Option<PathBuf>,
    pub seed_lexicon: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub lm: Option<PathBuf>,

    pub vocab_limit: usize,
    pub k: usize,
    pub metric: Metric,
    pub refine: RefineConfig,
    pub order: usize,
    pub smoothing: Smoothing,
    pub gloss: GlossConfig,
    pub max_len: usize,
    pub dev_size: usize,
    pub shuffle_seed: u64,
    /// Worker threads; 0 means one per core. Never affects outputs.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            src_embeddings: None,
            tgt_embeddings: None,
            seed_lexicon: None,
            map: None,
            lexicon: None,
            lm: None,
            vocab_limit: 100_000,
            k: 20,
            metric: Metric::Cosine,
            refine: RefineConfig::default(),
            order: 5,
            smoothing: Smoothing::KneserNey,
            gloss: GlossConfig::default(),
            max_len: 100,
            dev_size: 3000,
            shuffle_seed: 0,
            workers: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

impl PipelineConfig {
    /// Applies one `key = value` setting. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let key = key.as_str();
        match key {
            "src_emb" | "src_embeddings" => self.src_embeddings = Some(value.into()),
            "tgt_emb" | "tgt_embeddings" => self.tgt_embeddings = Some(value.into()),
            "seed_lexicon" => self.seed_lexicon = Some(value.into()),
            "map" => self.map = Some(value.into()),
            "lexicon" => self.lexicon = Some(value.into()),
            "lm" => self.lm = Some(value.into()),
            "vocab_limit" => self.vocab_limit = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "metric" => {
                self.metric = match value {
                    "cosine" => Metric::Cosine,
                    "csls" => Metric::Csls {
                        k: self.refine.csls_k,
                    },
                    _ => return Err(Error::Config(format!("unknown metric {value:?}"))),
                }
            }
            "csls_k" => {
                self.refine.csls_k = parse(key, value)?;
                if let Metric::Csls { k } = &mut self.metric {
                    *k = self.refine.csls_k;
                }
            }
            "refine_iterations" => self.refine.iterations = parse(key, value)?,
            "dict_pool" => self.refine.dict_pool = parse(key, value)?,
            "mutual_only" => self.refine.mutual_only = parse_bool(key, value)?,
            "order" => self.order = parse(key, value)?,
            "smoothing" => {
                self.smoothing = match value {
                    "kneser-ney" | "kn" => Smoothing::KneserNey,
                    "add-k" => Smoothing::AddK(match self.smoothing {
                        Smoothing::AddK(k) => k,
                        Smoothing::KneserNey => 1.0,
                    }),
                    _ => return Err(Error::Config(format!("unknown smoothing {value:?}"))),
                }
            }
            "add_k" => self.smoothing = Smoothing::AddK(parse(key, value)?),
            "alpha" => self.gloss.alpha = parse(key, value)?,
            "beta" => self.gloss.beta = parse(key, value)?,
            "stack_size" => self.gloss.stack_size = parse(key, value)?,
            "recombine" => self.gloss.recombine = parse_bool(key, value)?,
            "score_end_marker" | "end_marker" => self.gloss.score_end_marker = parse_bool(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "dev_size" => self.dev_size = parse(key, value)?,
            "seed" | "shuffle_seed" => self.shuffle_seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Reads a flat `key = value` file (`#` starts a comment line).
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, i + 1, "expected key = value"))?;
            self.set(key, value).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_limit == 0 || self.k == 0 || self.max_len == 0 {
            return Err(Error::Config("vocab_limit, k and max_len must be positive".into()));
        }
        if self.refine.csls_k == 0 {
            return Err(Error::Config("csls_k must be positive".into()));
        }
        self.gloss.validate()
    }

    /// Parameter settings in a fixed order, as recorded in run manifests.
    /// Paths and worker count are left out.
    pub fn parameters(&self) -> Vec<(&'static str, String)> {
        let (smoothing, add_k) = match self.smoothing {
            Smoothing::KneserNey => ("kneser-ney", None),
            Smoothing::AddK(k) => ("add-k", Some(k)),
        };
        let mut params = vec![
            ("vocab_limit", self.vocab_limit.to_string()),
            ("k", self.k.to_string()),
            ("metric", self.metric.name().to_string()),
            ("csls_k", self.refine.csls_k.to_string()),
            ("refine_iterations", self.refine.iterations.to_string()),
            ("dict_pool", self.refine.dict_pool.to_string()),
            ("mutual_only", self.refine.mutual_only.to_string()),
            ("order", self.order.to_string()),
            ("smoothing", smoothing.to_string()),
        ];
        if let Some(k) = add_k {
            params.push(("add_k", k.to_string()));
        }
        params.extend([
            ("alpha", self.gloss.alpha.to_string()),
            ("beta", self.gloss.beta.to_string()),
            ("stack_size", self.gloss.stack_size.to_string()),
            ("recombine", self.gloss.recombine.to_string()),
            ("score_end_marker", self.gloss.score_end_marker.to_string()),
            ("max_len", self.max_len.to_string()),
            ("dev_size", self.dev_size.to_string()),
            ("shuffle_seed", self.shuffle_seed.to_string()),
        ]);
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_setup() {
        let cfg = PipelineConfig::default();
        let params: std::collections::HashMap<_, _> = cfg.parameters().into_iter().collect();
        assert_eq!(params["vocab_limit"], "100000");
        assert_eq!(params["k"], "20");
        assert_eq!(params["order"], "5");
        assert_eq!(params["alpha"], "0.01");
        assert_eq!(params["beta"], "0.5");
        assert_eq!(params["stack_size"], "100");
        assert_eq!(params["max_len"], "100");
        assert_eq!(params["dev_size"], "3000");
    }

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\nalpha = 0.2\nstack-size=7\nmetric = csls\ncsls_k = 4\n").unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.gloss.alpha, 0.2);
        assert_eq!(cfg.gloss.stack_size, 7);
        assert_eq!(cfg.metric, Metric::Csls { k: 4 });
        cfg.set("alpha", "0.05").unwrap();
        assert_eq!(cfg.gloss.alpha, 0.05);
    }

    #[test]
    fn bad_settings() {
        let mut cfg = PipelineConfig::default();
        assert_eq!(cfg.set("nope", "1").unwrap_err().category(), "config");
        assert!(cfg.set("k", "many").is_err());
        assert!(cfg.set("recombine", "maybe").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "alpha = 0.1\njunk\n").unwrap();
        match cfg.apply_file(&path).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }
}
