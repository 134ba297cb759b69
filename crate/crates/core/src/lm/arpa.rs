//! ARPA backoff-model text format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NGramEntry, NGramModel, TokenId, BOS, MAX_ORDER, PSEUDO_LOGPROB, UNK};
use crate::error::{Error, Result};

impl NGramModel {
    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_arpa(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Entries are written in token-id order, so output is deterministic.
    pub fn write_arpa<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "\\data\\")?;
        for n in 1..=self.order {
            writeln!(out, "ngram {n}={}", self.count(n))?;
        }
        for n in 1..=self.order {
            writeln!(out)?;
            writeln!(out, "\\{n}-grams:")?;
            let mut grams: Vec<(&[TokenId], &NGramEntry)> =
                self.tables[n - 1].iter().map(|(g, e)| (&g[..], e)).collect();
            grams.sort_unstable_by(|a, b| a.0.cmp(b.0));
            for (gram, entry) in grams {
                let words: Vec<&str> = gram.iter().map(|&id| self.token(id)).collect();
                write!(out, "{:.7}\t{}", entry.logprob, words.join(" "))?;
                match entry.backoff {
                    Some(b) if n < self.order => writeln!(out, "\t{b:.7}")?,
                    _ => writeln!(out)?,
                }
            }
        }
        writeln!(out)?;
        writeln!(out, "\\end\\")
    }

    pub fn load_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_arpa(file, path)
    }

    pub fn read_arpa<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut declared: Vec<usize> = Vec::new();
        let mut state = State::Preamble;
        let mut model: Option<NGramModel> = None;
        let mut section_rows = 0usize;
        let mut last_line = 0usize;

        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            last_line = line_no;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let text = line.trim();
            let fail = |m: String| Error::format(origin, line_no, m);

            if text.starts_with('\\') {
                if let State::Section(n) = state {
                    check_section(n, section_rows, &declared).map_err(fail)?;
                }
                match text {
                    "\\data\\" => state = State::Header,
                    "\\end\\" => {
                        state = State::End;
                        break;
                    }
                    _ => {
                        let n = text
                            .strip_prefix('\\')
                            .and_then(|t| t.strip_suffix("-grams:"))
                            .and_then(|t| t.parse::<usize>().ok())
                            .ok_or_else(|| fail(format!("unknown section {text:?}")))?;
                        if n == 0 || n > declared.len() {
                            return Err(fail(format!("section {n}-grams not declared in \\data\\")));
                        }
                        if model.is_none() {
                            model = Some(NGramModel::with_markers(declared.len()).map_err(|e| fail(e.to_string()))?);
                        }
                        state = State::Section(n);
                        section_rows = 0;
                    }
                }
                continue;
            }
            if text.is_empty() {
                continue;
            }
            match state {
                State::Preamble | State::End => {}
                State::Header => {
                    let spec = text
                        .strip_prefix("ngram ")
                        .and_then(|t| t.split_once('='))
                        .and_then(|(n, c)| Some((n.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)));
                    let (n, c) = spec.ok_or_else(|| fail(format!("bad count line {text:?}")))?;
                    if n != declared.len() + 1 || n > MAX_ORDER {
                        return Err(fail(format!("unexpected order {n} in \\data\\")));
                    }
                    declared.push(c);
                }
                State::Section(n) => {
                    let model = model.as_mut().expect("model created with first section");
                    let fields: Vec<&str> = text.split_whitespace().collect();
                    if fields.len() != n + 1 && fields.len() != n + 2 {
                        return Err(fail(format!("expected {n} words with logprob and optional backoff")));
                    }
                    let logprob: f64 = fields[0]
                        .parse()
                        .map_err(|_| fail(format!("bad logprob {:?}", fields[0])))?;
                    let backoff = match fields.get(n + 1) {
                        Some(b) => Some(b.parse::<f64>().map_err(|_| fail(format!("bad backoff {b:?}")))?),
                        None => None,
                    };
                    let mut gram = Vec::with_capacity(n);
                    for w in &fields[1..=n] {
                        if n == 1 {
                            gram.push(model.intern(w));
                        } else {
                            let id = model
                                .ids
                                .get(*w)
                                .copied()
                                .ok_or_else(|| fail(format!("word {w:?} missing from unigrams")))?;
                            gram.push(id);
                        }
                    }
                    if model.tables[n - 1].contains_key(&gram[..]) {
                        return Err(fail(format!("duplicate {n}-gram")));
                    }
                    model.set(&gram, NGramEntry { logprob, backoff });
                    section_rows += 1;
                }
            }
        }
        if !matches!(state, State::End) {
            return Err(Error::format(origin, last_line, "missing \\end\\ marker"));
        }
        let mut model = model.ok_or_else(|| Error::format(origin, last_line, "no n-gram sections"))?;
        for n in 1..=declared.len() {
            if model.count(n) != declared[n - 1] {
                return Err(Error::format(
                    origin,
                    last_line,
                    format!("{n}-grams: header declares {}, found {}", declared[n - 1], model.count(n)),
                ));
            }
        }
        for marker in [UNK, BOS] {
            let id = model.ids[marker];
            if model.entry_ids(&[id]).is_none() {
                log::warn!("{}: no {marker} unigram, adding it with log10 p = {PSEUDO_LOGPROB}", origin.display());
                model.set(
                    &[id],
                    NGramEntry {
                        logprob: PSEUDO_LOGPROB,
                        backoff: None,
                    },
                );
            }
        }
        Ok(model)
    }
}

#[derive(Clone, Copy)]
enum State {
    Preamble,
    Header,
    Section(usize),
    End,
}

fn check_section(n: usize, rows: usize, declared: &[usize]) -> std::result::Result<(), String> {
    if rows != declared[n - 1] {
        return Err(format!(
            "{n}-grams: header declares {}, section has {rows}",
            declared[n - 1]
        ));
    }
    Ok(())
}
