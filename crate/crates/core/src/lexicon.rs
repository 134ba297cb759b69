//! Bilingual lexicon induction: per source token, the ranked target-side
//! nearest neighbors of its mapped vector.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustc_hash::FxHashMap;

use crate::crosslingual::LinearMap;
use crate::embedding::{knn_scan, mean_neighbor_similarity, EmbeddingMatrix, Metric, Rows};
use crate::error::{Error, Result};

const HEADER_TAG: &str = "lexicon";

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationOption {
    pub target: String,
    /// Cosine similarity between the mapped source vector and the target.
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexiconEntry {
    pub source: String,
    pub options: Vec<TranslationOption>,
}

#[derive(Clone, Debug)]
pub struct BilingualLexicon {
    entries: Vec<LexiconEntry>,
    index: FxHashMap<String, usize>,
    k: usize,
    metric: Metric,
}

impl PartialEq for BilingualLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.metric == other.metric && self.entries == other.entries
    }
}

impl BilingualLexicon {
    pub fn new(k: usize, metric: Metric) -> Self {
        BilingualLexicon {
            entries: Vec::new(),
            index: FxHashMap::default(),
            k,
            metric,
        }
    }

    /// Appends an entry. Options must already be in rank order.
    pub fn insert(&mut self, source: impl Into<String>, options: Vec<TranslationOption>) -> Result<()> {
        let source = source.into();
        if self.index.contains_key(&source) {
            return Err(Error::Data(format!("duplicate lexicon entry for {source:?}")));
        }
        if options.len() > self.k {
            return Err(Error::Data(format!(
                "{} options for {source:?} exceed k = {}",
                options.len(),
                self.k
            )));
        }
        self.index.insert(source.clone(), self.entries.len());
        self.entries.push(LexiconEntry { source, options });
        Ok(())
    }

    pub fn options(&self, source: &str) -> Option<&[TranslationOption]> {
        self.index.get(source).map(|&i| self.entries[i].options.as_slice())
    }

    pub fn contains(&self, source: &str) -> bool {
        self.index.contains_key(source)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Writes the TSV form: a `#` header line, then
    /// `source<TAB>target<TAB>similarity` lines grouped by source.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        match self.metric {
            Metric::Cosine => writeln!(out, "# {HEADER_TAG} k={} metric=cosine", self.k)?,
            Metric::Csls { k } => writeln!(out, "# {HEADER_TAG} k={} metric=csls csls_k={k}", self.k)?,
        }
        for entry in &self.entries {
            for option in &entry.options {
                writeln!(out, "{}\t{}\t{:.6}", entry.source, option.target, option.similarity)?;
            }
        }
        Ok(())
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, path)
    }

    pub fn read<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut header: Option<(usize, Metric)> = None;
        let mut groups: Vec<(String, Vec<TranslationOption>)> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if let Some(comment) = line.strip_prefix('#') {
                if header.is_none() {
                    header = parse_header(comment).map_err(|m| Error::format(origin, line_no, m))?;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [source, target, similarity] = fields.as_slice() else {
                return Err(Error::format(
                    origin,
                    line_no,
                    "expected \"source<TAB>target<TAB>similarity\"",
                ));
            };
            let similarity: f64 = similarity
                .trim()
                .parse()
                .ok()
                .filter(|s: &f64| (-1.0..=1.0).contains(s))
                .ok_or_else(|| Error::format(origin, line_no, format!("bad similarity {similarity:?}")))?;
            if source.is_empty() || target.is_empty() {
                return Err(Error::format(origin, line_no, "empty token"));
            }
            match groups.last_mut() {
                Some((s, options)) if s == source => {
                    if options.iter().any(|o| o.target == *target) {
                        return Err(Error::format(origin, line_no, format!("repeated option {target:?}")));
                    }
                    options.push(TranslationOption {
                        target: target.to_string(),
                        similarity,
                    });
                }
                _ => {
                    if !seen.insert(source.to_string()) {
                        return Err(Error::format(
                            origin,
                            line_no,
                            format!("lines for {source:?} are not contiguous"),
                        ));
                    }
                    groups.push((
                        source.to_string(),
                        vec![TranslationOption {
                            target: target.to_string(),
                            similarity,
                        }],
                    ));
                }
            }
        }
        let widest = groups.iter().map(|(_, o)| o.len()).max().unwrap_or(1);
        let (k, metric) = header.unwrap_or((widest, Metric::Cosine));
        if widest > k {
            return Err(Error::format(
                origin,
                0,
                format!("an entry has {widest} options but the header declares k={k}"),
            ));
        }
        let mut lexicon = BilingualLexicon::new(k, metric);
        for (source, options) in groups {
            lexicon.insert(source, options)?;
        }
        Ok(lexicon)
    }
}

fn parse_header(comment: &str) -> std::result::Result<Option<(usize, Metric)>, String> {
    let mut fields = comment.split_whitespace();
    if fields.next() != Some(HEADER_TAG) {
        return Ok(None);
    }
    let mut k = None;
    let mut metric = None;
    let mut csls_k = None;
    for field in fields {
        match field.split_once('=') {
            Some(("k", v)) => k = v.parse::<usize>().ok(),
            Some(("metric", v)) => metric = Some(v.to_owned()),
            Some(("csls_k", v)) => csls_k = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let k = k.filter(|&k| k > 0).ok_or("header lacks a positive k")?;
    let metric = match (metric.as_deref(), csls_k) {
        (Some("cosine") | None, _) => Metric::Cosine,
        (Some("csls"), Some(n)) => Metric::Csls { k: n },
        (Some(other), _) => return Err(format!("unknown metric {other:?}")),
    };
    Ok(Some((k, metric)))
}

/// Top-`k` target options for every source token under `metric`. Stored
/// similarities are cosine regardless of the ranking metric.
pub fn build_lexicon(
    map: &LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    k: usize,
    metric: Metric,
) -> Result<BilingualLexicon> {
    if map.dim() != src.dim() || map.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: if map.dim() != src.dim() { src.dim() } else { tgt.dim() },
        });
    }
    if k == 0 || k > tgt.len() {
        return Err(Error::TooManyNeighbors {
            k,
            available: tgt.len(),
        });
    }
    let mapped = map.map_rows(src.rows());
    let mapped = Rows::new(&mapped, src.dim());
    let hits = match metric {
        Metric::Cosine => knn_scan(mapped, tgt.rows(), k, |cos, _| cos),
        Metric::Csls { k: csls_k } => {
            let r_source = mean_neighbor_similarity(tgt.rows(), mapped, csls_k)?;
            knn_scan(mapped, tgt.rows(), k, |cos, j| 2.0 * cos - r_source[j])
        }
    };
    let mut lexicon = BilingualLexicon::new(k, metric);
    for (i, neighbors) in hits.into_iter().enumerate() {
        let options = neighbors
            .into_iter()
            .map(|n| TranslationOption {
                target: tgt.token(n.index).to_owned(),
                similarity: n.cosine.clamp(-1.0, 1.0),
            })
            .collect();
        lexicon.insert(src.token(i), options)?;
    }
    Ok(lexicon)
}

/// Reference translations; a source word may have several acceptable
/// targets.
#[derive(Clone, Debug, Default)]
pub struct GoldLexicon {
    sources: Vec<String>,
    targets: FxHashMap<String, HashSet<String>>,
}

impl GoldLexicon {
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut gold = GoldLexicon::default();
        for (s, t) in pairs {
            let s = s.into();
            if !gold.targets.contains_key(&s) {
                gold.sources.push(s.clone());
            }
            gold.targets.entry(s).or_default().insert(t.into());
        }
        gold
    }

    /// Reads `source<TAB>target` (or whitespace separated) pairs.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            match fields.as_slice() {
                [s, t] => pairs.push((s.to_string(), t.to_string())),
                _ => return Err(Error::format(path, i + 1, "expected \"source<TAB>target\"")),
            }
        }
        Ok(GoldLexicon::from_pairs(pairs))
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Precision {
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub coverage: f64,
    /// Gold source words found in the lexicon.
    pub evaluated: usize,
    pub gold_sources: usize,
}

/// Precision@1/@5 over the gold sources the lexicon covers.
pub fn evaluate_precision(lex: &BilingualLexicon, gold: &GoldLexicon) -> Result<Precision> {
    if gold.is_empty() {
        return Err(Error::Data("gold lexicon is empty".into()));
    }
    let (mut evaluated, mut hit1, mut hit5) = (0usize, 0usize, 0usize);
    for source in &gold.sources {
        let Some(options) = lex.options(source) else {
            continue;
        };
        evaluated += 1;
        let accepted = &gold.targets[source];
        let hit_within = |n: usize| options.iter().take(n).any(|o| accepted.contains(&o.target));
        hit1 += usize::from(hit_within(1));
        hit5 += usize::from(hit_within(5));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Precision {
        p_at_1: ratio(hit1, evaluated),
        p_at_5: ratio(hit5, evaluated),
        coverage: ratio(evaluated, gold.len()),
        evaluated,
        gold_sources: gold.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn option(target: &str, similarity: f64) -> TranslationOption {
        TranslationOption {
            target: target.into(),
            similarity,
        }
    }

    fn parse(text: &str) -> Result<BilingualLexicon> {
        BilingualLexicon::read(Cursor::new(text.as_bytes().to_vec()), Path::new("<mem>"))
    }

    #[test]
    fn parses_hand_written_file() {
        let lex = parse("casa\thouse\t0.812345\ncasa\thome\t0.700000\ncasa\tbuilding\t0.5\n").unwrap();
        assert_eq!(lex.len(), 1);
        let opts = lex.options("casa").unwrap();
        assert_eq!(opts.iter().map(|o| o.target.as_str()).collect::<Vec<_>>(), ["house", "home", "building"]);
        assert_eq!(opts[0].similarity, 0.812345);
        assert_eq!(lex.k(), 3);
        assert_eq!(lex.metric(), Metric::Cosine);
    }

    #[test]
    fn empty_lexicon_round_trip() {
        let lex = BilingualLexicon::new(20, Metric::Cosine);
        let mut buf = Vec::new();
        lex.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# lexicon k=20 metric=cosine\n");
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, lex);
    }

    #[test]
    fn export_import_round_trip() {
        let mut lex = BilingualLexicon::new(2, Metric::Csls { k: 10 });
        lex.insert("perro", vec![option("dog", 0.9), option("hound", 0.25)]).unwrap();
        lex.insert("gato", vec![option("cat", -0.125)]).unwrap();
        let mut buf = Vec::new();
        lex.write(&mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        for (text, line) in [
            ("a\tb\t0.5\nbroken line\n", 2),
            ("a\tb\tnot-a-number\n", 1),
            ("a\tb\t0.5\nc\td\t0.5\na\te\t0.1\n", 3),
            ("a\tb\t1.5\n", 1),
        ] {
            match parse(text).unwrap_err() {
                Error::Format { line: l, .. } => assert_eq!(l, line, "{text:?}"),
                e => panic!("unexpected {e}"),
            }
        }
    }

    #[test]
    fn precision_counts() {
        let mut lex = BilingualLexicon::new(5, Metric::Cosine);
        for i in 0..10 {
            let top = if i < 7 { format!("t{i}") } else { "wrong".to_string() };
            let mut opts = vec![option(&top, 0.9)];
            if i == 8 {
                opts.push(option(&format!("t{i}"), 0.5));
            }
            lex.insert(format!("s{i}"), opts).unwrap();
        }
        let mut pairs: Vec<(String, String)> = (0..10).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        let p = evaluate_precision(&lex, &GoldLexicon::from_pairs(pairs.clone())).unwrap();
        assert!((p.p_at_1 - 0.7).abs() < 1e-12);
        assert!((p.p_at_5 - 0.8).abs() < 1e-12);
        assert_eq!(p.coverage, 1.0);

        pairs.push(("absent".into(), "x".into()));
        let p = evaluate_precision(&lex, &GoldLexicon::from_pairs(pairs)).unwrap();
        assert!((p.p_at_1 - 0.7).abs() < 1e-12);
        assert!((p.coverage - 10.0 / 11.0).abs() < 1e-12);

        assert!(evaluate_precision(&lex, &GoldLexicon::default()).is_err());
    }
}
