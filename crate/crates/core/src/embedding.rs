//! Monolingual word-embedding tables and the similarity primitives shared by
//! the alignment, lexicon and cipher stages.
//!
//! Vectors are unit-normalized once at load time, so cosine similarity
//! between stored rows is a plain dot product. All neighbor searches are
//! exact scans; per-query results do not depend on the rayon pool size.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// Vectors whose norm is already this close to one are left untouched by
/// [`normalize`], which makes normalization bitwise idempotent.
const UNIT_TOLERANCE: f64 = 1e-12;

/// Queries handled per task in the batched scans.
const QUERY_BLOCK: usize = 32;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let xa = a.chunks_exact(8);
    let xb = b.chunks_exact(8);
    let (ra, rb) = (xa.remainder(), xb.remainder());
    for (x, y) in xa.zip(xb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length in place. Returns `false` (leaving `v` as is)
/// for zero or non-finite vectors.
pub fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        v.iter_mut().for_each(|x| *x /= n);
    }
    true
}

/// Cosine similarity of two arbitrary (not necessarily unit) vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Borrowed row-major matrix.
#[derive(Clone, Copy, Debug)]
pub struct Rows<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "ragged row data");
        Rows { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The first `n` rows (all rows if `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> Rows<'a> {
        let n = n.min(self.len());
        Rows {
            data: &self.data[..n * self.dim],
            dim: self.dim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks_exact(self.dim)
    }
}

/// Counters for lines dropped while reading an embedding file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub declared_count: usize,
    pub malformed: usize,
    pub zero_norm: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn skipped(&self) -> usize {
        self.malformed + self.zero_norm + self.duplicates
    }
}

/// Vocabulary plus one unit-normalized row per token.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    data: Vec<f64>,
    dim: usize,
    index: FxHashMap<String, usize>,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.tokens == other.tokens && self.data == other.data
    }
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw rows, normalizing each one.
    pub fn from_rows(tokens: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if tokens.len() != rows.len() {
            return Err(Error::Data(format!(
                "{} tokens but {} vectors",
                tokens.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Data("embedding matrix needs a positive dimension".into()));
        }
        let mut matrix = EmbeddingMatrix::empty(dim);
        for (token, mut row) in tokens.into_iter().zip(rows) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if matrix.index.contains_key(&token) {
                return Err(Error::Data(format!("duplicate token {token:?}")));
            }
            if !normalize(&mut row) {
                return Err(Error::ZeroVector);
            }
            matrix.push_unchecked(token, &row);
        }
        Ok(matrix)
    }

    fn empty(dim: usize) -> Self {
        EmbeddingMatrix {
            tokens: Vec::new(),
            data: Vec::new(),
            dim,
            index: FxHashMap::default(),
        }
    }

    fn push_unchecked(&mut self, token: String, row: &[f64]) {
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(row);
    }

    /// Loads a text embedding file, keeping at most `vocab_limit` rows in
    /// file order.
    pub fn load(path: impl AsRef<Path>, vocab_limit: usize) -> Result<(Self, LoadReport)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), vocab_limit, path)
    }

    pub fn read<R: Read>(reader: R, vocab_limit: usize, origin: &Path) -> Result<(Self, LoadReport)> {
        let mut reader = BufReader::new(reader);
        let mut buf = Vec::new();
        let read_line = |reader: &mut BufReader<R>, buf: &mut Vec<u8>| -> Result<bool> {
            buf.clear();
            let n = reader
                .read_until(b'\n', buf)
                .map_err(|e| Error::io(origin, e))?;
            Ok(n > 0)
        };

        if !read_line(&mut reader, &mut buf)? {
            return Err(Error::format(origin, 1, "empty file, expected \"<count> <dim>\" header"));
        }
        let header = std::str::from_utf8(&buf)
            .map_err(|_| Error::format(origin, 1, "header is not valid UTF-8"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed: Option<(usize, usize)> = match fields.as_slice() {
            [count, dim] => count.parse().ok().zip(dim.parse().ok()),
            _ => None,
        };
        let (declared_count, dim) = match parsed {
            Some((c, d)) if d > 0 => (c, d),
            _ => {
                return Err(Error::format(
                    origin,
                    1,
                    format!("garbled header {:?}, expected \"<count> <dim>\"", header.trim_end()),
                ))
            }
        };

        let mut matrix = EmbeddingMatrix::empty(dim);
        let mut report = LoadReport {
            declared_count,
            ..LoadReport::default()
        };
        let mut row = Vec::with_capacity(dim);
        let mut line_no = 1;
        while matrix.len() < vocab_limit && read_line(&mut reader, &mut buf)? {
            line_no += 1;
            let Ok(line) = std::str::from_utf8(&buf) else {
                report.malformed += 1;
                continue;
            };
            let mut fields = line
                .trim_end_matches(['\n', '\r'])
                .split(' ')
                .filter(|f| !f.is_empty());
            let Some(token) = fields.next() else {
                report.malformed += 1;
                continue;
            };
            row.clear();
            let mut ok = true;
            for field in fields {
                match field.parse::<f64>() {
                    Ok(x) if x.is_finite() => row.push(x),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok || row.len() != dim {
                log::debug!("{}:{line_no}: skipping malformed embedding line", origin.display());
                report.malformed += 1;
                continue;
            }
            if matrix.index.contains_key(token) {
                report.duplicates += 1;
                continue;
            }
            if !normalize(&mut row) {
                report.zero_norm += 1;
                continue;
            }
            matrix.push_unchecked(token.to_owned(), &row);
        }
        if report.skipped() > 0 {
            log::warn!(
                "{}: skipped {} malformed, {} zero-norm, {} duplicate lines",
                origin.display(),
                report.malformed,
                report.zero_norm,
                report.duplicates
            );
        }
        Ok((matrix, report))
    }

    /// Writes the matrix in the text format read by [`EmbeddingMatrix::load`].
    /// Components use the shortest representation that round-trips exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (token, row) in self.tokens.iter().zip(self.rows().iter()) {
            write!(out, "{token}")?;
            for x in row {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, row: usize) -> &str {
        &self.tokens[row]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows::new(&self.data, self.dim)
    }
}

/// A scored candidate row. `cosine` is always the raw cosine similarity,
/// `score` is whatever the ranking metric produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
    pub cosine: f64,
}

impl Neighbor {
    fn outranks(&self, other: &Neighbor) -> bool {
        self.score > other.score || (self.score == other.score && self.index < other.index)
    }
}

/// Bounded best-first list with deterministic tie-breaking on row index.
#[derive(Clone, Debug)]
pub(crate) struct TopK {
    k: usize,
    items: Vec<Neighbor>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, candidate: Neighbor) {
        if self.items.len() == self.k {
            match self.items.last() {
                Some(worst) if candidate.outranks(worst) => {}
                _ => return,
            }
        }
        let pos = self.items.partition_point(|n| n.outranks(&candidate));
        self.items.insert(pos, candidate);
        self.items.truncate(self.k);
    }

    pub(crate) fn into_vec(self) -> Vec<Neighbor> {
        self.items
    }
}

/// Exact k-nearest-neighbor scan of every query row against every target
/// row. `score(cos, target_row)` turns a cosine into the ranking score.
pub(crate) fn knn_scan<F>(queries: Rows<'_>, targets: Rows<'_>, k: usize, score: F) -> Vec<Vec<Neighbor>>
where
    F: Fn(f64, usize) -> f64 + Sync,
{
    assert_eq!(queries.dim(), targets.dim());
    let query_count = queries.len();
    let blocks: Vec<Vec<Vec<Neighbor>>> = (0..query_count.div_ceil(QUERY_BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * QUERY_BLOCK;
            let end = (start + QUERY_BLOCK).min(query_count);
            let mut heaps: Vec<TopK> = (start..end).map(|_| TopK::new(k)).collect();
            for (t, target) in targets.iter().enumerate() {
                for (heap, q) in heaps.iter_mut().zip(start..end) {
                    let cos = dot(queries.row(q), target);
                    heap.offer(Neighbor {
                        index: t,
                        score: score(cos, t),
                        cosine: cos,
                    });
                }
            }
            heaps.into_iter().map(TopK::into_vec).collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// Mean cosine of each query's `k` nearest target rows (the CSLS
/// neighborhood density term).
pub fn mean_neighbor_similarity(queries: Rows<'_>, targets: Rows<'_>, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > targets.len() {
        return Err(Error::TooManyNeighbors {
            k,
            available: targets.len(),
        });
    }
    Ok(knn_scan(queries, targets, k, |cos, _| cos)
        .into_iter()
        .map(|list| list.iter().map(|n| n.cosine).sum::<f64>() / k as f64)
        .collect())
}

/// Ranking metric for neighbor retrieval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    /// Cross-domain similarity local scaling with neighborhood size `k`.
    Csls { k: usize },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Csls { .. } => "csls",
        }
    }
}

/// Ranking applied by [`top_k_neighbors`].
#[derive(Clone, Copy, Debug)]
pub enum Scoring<'a> {
    Cosine,
    /// CSLS: `2 cos(q, y) - r_T(q) - penalty[y]`, where `r_T(q)` is the mean
    /// cosine of the query's `csls_k` nearest rows in the searched matrix
    /// and `penalty[y]` is the precomputed density of row `y` in the other
    /// space.
    Csls { target_penalty: &'a [f64], csls_k: usize },
}

/// Ranked top-`k` rows of `matrix` for `query` as `(token, score)` pairs.
/// Ties go to the lower row index.
pub fn top_k_neighbors(
    query: &[f64],
    matrix: &EmbeddingMatrix,
    k: usize,
    scoring: Scoring<'_>,
) -> Result<Vec<(String, f64)>> {
    if query.len() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            found: query.len(),
        });
    }
    if k == 0 || k > matrix.len() {
        return Err(Error::TooManyNeighbors {
            k,
            available: matrix.len(),
        });
    }
    let mut q = query.to_vec();
    if !normalize(&mut q) {
        return Err(Error::ZeroVector);
    }
    let queries = Rows::new(&q, q.len());
    let hits = match scoring {
        Scoring::Cosine => knn_scan(queries, matrix.rows(), k, |cos, _| cos),
        Scoring::Csls { target_penalty, csls_k } => {
            if target_penalty.len() != matrix.len() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.len(),
                    found: target_penalty.len(),
                });
            }
            let r_query = mean_neighbor_similarity(queries, matrix.rows(), csls_k)?[0];
            knn_scan(queries, matrix.rows(), k, |cos, t| 2.0 * cos - r_query - target_penalty[t])
        }
    };
    Ok(hits
        .into_iter()
        .next()
        .unwrap_or_default()
        .into_iter()
        .map(|n| (matrix.token(n.index).to_owned(), n.score))
        .collect())
}
