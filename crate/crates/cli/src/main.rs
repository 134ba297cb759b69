//! Command-line front end for the translationese toolkit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use translationese::crosslingual::{procrustes, refine, seed_identical_strings};
use translationese::gloss::gloss_corpus;
use translationese::lexicon::{build_lexicon, evaluate_precision, GoldLexicon};
use translationese::lm::train;
use translationese::pipeline::{
    bleu, end_to_end_cipher_test, prepare_training_data, CipherConfig, Manifest, ParallelCorpus, PipelineConfig,
    PrepareConfig,
};
use translationese::text::{read_lines, read_sentences};
use translationese::{BilingualLexicon, EmbeddingMatrix, Error, LinearMap, NGramModel, Result, SeedLexicon};

#[derive(Parser)]
#[command(name = "translationese", version, about = "Unsupervised word-by-word glossing into the target language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an orthogonal map from source to target embeddings.
    Map {
        #[arg(long)]
        src_emb: Option<PathBuf>,
        #[arg(long)]
        tgt_emb: Option<PathBuf>,
        /// Seed dictionary (`source target` per line); identical strings
        /// are used when omitted.
        #[arg(long)]
        seed_lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Induce a bilingual lexicon from mapped embeddings.
    Dict {
        #[arg(long)]
        src_emb: Option<PathBuf>,
        #[arg(long)]
        tgt_emb: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train an n-gram language model and write it as ARPA.
    LmTrain {
        /// Tokenized text, one sentence per line.
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Gloss source text into the target language.
    Gloss {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        lm: Option<PathBuf>,
        /// Tokenized source text, one sentence per line.
        #[arg(long)]
        input: PathBuf,
        /// Side file with the decoder score and OOV flags per line.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Gloss parallel corpora and write shuffled train/dev files.
    Prepare {
        /// `LANG:SOURCE:TARGET:LEXICON`, repeatable.
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Precision@1/@5 of a lexicon against a gold dictionary.
    DictEval {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
    },
    /// End-to-end check on a ciphered copy of the target language.
    CipherTest {
        /// Target-language text, one sentence per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tgt_emb: Option<PathBuf>,
        /// Gaussian noise added to the ciphered embeddings.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` settings file, applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for shuffling and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any setting, e.g. `--set alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    vocab_limit: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    csls_k: Option<usize>,
    #[arg(long)]
    refine_iterations: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    smoothing: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    stack_size: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dev_size: Option<usize>,
}

impl Common {
    /// Defaults, then the config file, then flags.
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, Option<String>); 14] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("vocab_limit", self.vocab_limit.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("csls_k", self.csls_k.map(|v| v.to_string())),
            ("metric", self.metric.clone()),
            ("refine_iterations", self.refine_iterations.map(|v| v.to_string())),
            ("order", self.order.map(|v| v.to_string())),
            ("smoothing", self.smoothing.clone()),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("stack_size", self.stack_size.map(|v| v.to_string())),
            ("max_len", self.max_len.map(|v| v.to_string())),
            ("dev_size", self.dev_size.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.set(key, &value)?;
            }
        }
        for o in &self.overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }
}

fn required<'a>(flag: Option<&'a PathBuf>, fallback: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    flag.or(fallback.as_ref())
        .map(PathBuf::as_path)
        .ok_or_else(|| Error::Config(format!("--{name} is required (flag or config file)")))
}

fn load_embeddings(path: &Path, limit: usize) -> Result<EmbeddingMatrix> {
    let (m, report) = EmbeddingMatrix::load(path, limit)?;
    if report.skipped() > 0 {
        log::warn!(
            "{}: skipped {} malformed, {} zero-norm, {} duplicate lines",
            path.display(),
            report.malformed,
            report.zero_norm,
            report.duplicates
        );
    }
    log::info!("{}: {} vectors of dimension {}", path.display(), m.len(), m.dim());
    Ok(m)
}

fn setup_workers(workers: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::debug!("global thread pool already set: {e}");
    }
}

fn finish(mut manifest: Manifest, cfg: &PipelineConfig, outputs: &[(&str, &Path)], at: &Path) -> Result<()> {
    manifest.parameters(cfg);
    for (name, path) in outputs {
        manifest.output(name, path)?;
    }
    manifest.write(at)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Map {
            src_emb,
            tgt_emb,
            seed_lexicon,
            common,
        } => {
            let cfg = common.config()?;
            setup_workers(cfg.workers);
            let out = common.out()?;
            let src_path = required(src_emb.as_ref(), &cfg.src_embeddings, "src-emb")?;
            let tgt_path = required(tgt_emb.as_ref(), &cfg.tgt_embeddings, "tgt-emb")?;
            let src = load_embeddings(src_path, cfg.vocab_limit)?;
            let tgt = load_embeddings(tgt_path, cfg.vocab_limit)?;
            let mut manifest = Manifest::new("map");
            manifest.input("src_emb", src_path)?;
            manifest.input("tgt_emb", tgt_path)?;
            let seed = match seed_lexicon.as_ref().or(cfg.seed_lexicon.as_ref()) {
                Some(path) => {
                    manifest.input("seed_lexicon", path)?;
                    SeedLexicon::load(path, &src, &tgt)?
                }
                None => seed_identical_strings(&src, &tgt)?,
            };
            log::info!("{} seed pairs", seed.pairs.len());
            let fit = procrustes(&src, &tgt, &seed)?;
            let outcome = refine(&fit.map, &src, &tgt, &cfg.refine)?;
            for it in &outcome.iterations {
                log::info!("refine iteration {}: {} pairs", it.iteration, it.pairs);
            }
            outcome.map.save(out)?;
            finish(manifest, &cfg, &[("map", out)], &Manifest::path_for(out))
        }
        Command::Dict {
            src_emb,
            tgt_emb,
            map,
            common,
        } => {
            let cfg = common.config()?;
            setup_workers(cfg.workers);
            let out = common.out()?;
            let src_path = required(src_emb.as_ref(), &cfg.src_embeddings, "src-emb")?;
            let tgt_path = required(tgt_emb.as_ref(), &cfg.tgt_embeddings, "tgt-emb")?;
            let map_path = required(map.as_ref(), &cfg.map, "map")?;
            let src = load_embeddings(src_path, cfg.vocab_limit)?;
            let tgt = load_embeddings(tgt_path, cfg.vocab_limit)?;
            let w = LinearMap::load(map_path)?;
            let lexicon = build_lexicon(&w, &src, &tgt, cfg.k.min(tgt.len()), cfg.metric)?;
            lexicon.export(out)?;
            let mut manifest = Manifest::new("dict");
            manifest.input("src_emb", src_path)?;
            manifest.input("tgt_emb", tgt_path)?;
            manifest.input("map", map_path)?;
            finish(manifest, &cfg, &[("lexicon", out)], &Manifest::path_for(out))
        }
        Command::LmTrain { corpus, common } => {
            let cfg = common.config()?;
            let out = common.out()?;
            let sentences = read_sentences(&corpus)?;
            let model = train(&sentences, cfg.order, cfg.smoothing)?;
            log::info!(
                "{} sentences, {} types, {}-gram counts {:?}",
                sentences.len(),
                model.vocab().len(),
                cfg.order,
                (1..=cfg.order).map(|n| model.count(n)).collect::<Vec<_>>()
            );
            model.save_arpa(out)?;
            let mut manifest = Manifest::new("lm-train");
            manifest.input("corpus", &corpus)?;
            finish(manifest, &cfg, &[("lm", out)], &Manifest::path_for(out))
        }
        Command::Gloss {
            lexicon,
            lm,
            input,
            scores,
            common,
        } => {
            let cfg = common.config()?;
            let out = common.out()?;
            let lex_path = required(lexicon.as_ref(), &cfg.lexicon, "lexicon")?;
            let lm_path = required(lm.as_ref(), &cfg.lm, "lm")?;
            let lex = BilingualLexicon::import(lex_path)?;
            let model = NGramModel::load_arpa(lm_path)?;
            let reader = BufReader::new(File::open(&input).map_err(|e| io_error(&input, e))?);
            let mut writer = BufWriter::new(File::create(out).map_err(|e| io_error(out, e))?);
            let mut side = match &scores {
                Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
                None => None,
            };
            let stats = gloss_corpus(
                reader,
                &input,
                &mut writer,
                side.as_mut().map(|w| w as &mut dyn Write),
                &lex,
                &model,
                &cfg.gloss,
                cfg.workers,
            )?;
            writer.flush().map_err(|e| io_error(out, e))?;
            if let (Some(w), Some(p)) = (side.as_mut(), &scores) {
                w.flush().map_err(|e| io_error(p, e))?;
            }
            eprintln!(
                "glossed {} sentences, {} tokens, OOV rate {:.4}",
                stats.sentences,
                stats.tokens,
                stats.oov_rate()
            );
            let mut manifest = Manifest::new("gloss");
            manifest.input("lexicon", lex_path)?;
            manifest.input("lm", lm_path)?;
            manifest.input("source", &input)?;
            let mut outputs = vec![("gloss", out)];
            if let Some(p) = &scores {
                outputs.push(("scores", p.as_path()));
            }
            finish(manifest, &cfg, &outputs, &Manifest::path_for(out))
        }
        Command::Prepare { corpora, lm, common } => {
            let cfg = common.config()?;
            let out = common.out()?;
            let lm_path = required(lm.as_ref(), &cfg.lm, "lm")?;
            let model = NGramModel::load_arpa(lm_path)?;
            let mut manifest = Manifest::new("prepare");
            manifest.input("lm", lm_path)?;
            let mut parallel = Vec::new();
            let mut lexicons = BTreeMap::new();
            for spec in &corpora {
                let parts: Vec<&str> = spec.split(':').collect();
                let [lang, src, tgt, lex] = parts[..] else {
                    return Err(Error::Config(format!(
                        "--corpus expects LANG:SOURCE:TARGET:LEXICON, got {spec:?}"
                    )));
                };
                if lexicons.contains_key(lang) {
                    return Err(Error::Config(format!("language {lang} given twice")));
                }
                parallel.push(ParallelCorpus::load(lang, Path::new(src), Path::new(tgt))?);
                lexicons.insert(lang.to_string(), BilingualLexicon::import(lex)?);
                manifest.input(&format!("{lang}.source"), Path::new(src))?;
                manifest.input(&format!("{lang}.target"), Path::new(tgt))?;
                manifest.input(&format!("{lang}.lexicon"), Path::new(lex))?;
            }
            let prep = PrepareConfig {
                max_len: cfg.max_len,
                dev_size: cfg.dev_size,
                shuffle_seed: cfg.shuffle_seed,
            };
            let data = prepare_training_data(&parallel, &lexicons, &model, &cfg.gloss, &prep, cfg.workers)?;
            for (lang, dropped) in &data.dropped {
                manifest.push(format!("dropped.{lang}"), dropped.to_string());
            }
            let files = data.write(out)?;
            eprintln!("{} training pairs, {} dev pairs", data.train_src.len(), data.dev_src.len());
            let names: Vec<String> = files
                .iter()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
                .collect();
            let outputs: Vec<(&str, &Path)> = names.iter().map(String::as_str).zip(files.iter().map(PathBuf::as_path)).collect();
            finish(manifest, &cfg, &outputs, &out.join("prepare.manifest"))
        }
        Command::Bleu { hyp, reference } => {
            let b = bleu(&read_lines(&hyp)?, &read_lines(&reference)?)?;
            println!(
                "BLEU = {:.2} ({:.1}/{:.1}/{:.1}/{:.1}, BP = {:.3}, hyp_len = {}, ref_len = {})",
                b.score,
                100.0 * b.precision(1),
                100.0 * b.precision(2),
                100.0 * b.precision(3),
                100.0 * b.precision(4),
                b.brevity_penalty,
                b.hyp_len,
                b.ref_len
            );
            Ok(())
        }
        Command::DictEval { lexicon, gold } => {
            let lex_path = lexicon
                .as_deref()
                .ok_or_else(|| Error::Config("--lexicon is required".into()))?;
            let p = evaluate_precision(&BilingualLexicon::import(lex_path)?, &GoldLexicon::load(&gold)?)?;
            println!(
                "P@1 = {:.4}  P@5 = {:.4}  coverage = {:.4} ({} of {} gold sources)",
                p.p_at_1, p.p_at_5, p.coverage, p.evaluated, p.gold_sources
            );
            Ok(())
        }
        Command::CipherTest {
            corpus,
            tgt_emb,
            noise,
            common,
        } => {
            let cfg = common.config()?;
            setup_workers(cfg.workers);
            let tgt_path = required(tgt_emb.as_ref(), &cfg.tgt_embeddings, "tgt-emb")?;
            let tgt = load_embeddings(tgt_path, cfg.vocab_limit)?;
            let sentences = read_sentences(&corpus)?;
            let cipher = CipherConfig {
                noise,
                k: cfg.k,
                refine: cfg.refine.clone(),
                order: cfg.order,
                gloss: cfg.gloss.clone(),
                workers: cfg.workers,
                ..CipherConfig::default()
            };
            let r = end_to_end_cipher_test(&sentences, &tgt, &cipher, cfg.shuffle_seed)?;
            println!("vocabulary {} ({} ciphered), {} seed pairs", r.vocabulary, r.ciphered_words, r.seed_pairs);
            println!("refine pairs per iteration {:?}", r.refine_pairs);
            println!("P@1 = {:.4}, top-{} P@1 = {:.4}", r.p_at_1, r.top_evaluated, r.p_at_1_top);
            println!("BLEU = {:.2} on {} held-out sentences", r.bleu, r.heldout_sentences);
            println!("elapsed {:.1}s", r.elapsed.as_secs_f64());
            Ok(())
        }
    }
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
