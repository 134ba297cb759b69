//! Orthogonal mapping of a source embedding space onto a target space.
//!
//! The initial map is the closed-form Procrustes solution on a seed
//! lexicon (identical strings by default). [`refine`] then alternates
//! between inducing a synthetic lexicon of mutual CSLS nearest neighbors
//! and re-solving Procrustes on it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embedding::{self, knn_scan, mean_neighbor_similarity, EmbeddingMatrix, Rows};
use crate::error::{Error, Result};

/// Orthogonality tolerance on `‖WᵀW − I‖_F`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-4;

/// Square matrix `W`; a source row vector `x` maps to `xW`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    matrix: Vec<f64>,
    dim: usize,
    orthogonal: bool,
}

impl LinearMap {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        LinearMap {
            matrix,
            dim,
            orthogonal: true,
        }
    }

    /// Wraps a row-major `dim × dim` matrix; the orthogonal flag is derived.
    pub fn from_row_major(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: matrix.len(),
            });
        }
        let mut map = LinearMap {
            matrix,
            dim,
            orthogonal: false,
        };
        map.orthogonal = map.orthogonality_error() < ORTHOGONALITY_TOLERANCE;
        Ok(map)
    }

    fn from_nalgebra(w: &DMatrix<f64>) -> Self {
        let dim = w.nrows();
        let mut matrix = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                matrix.push(w[(i, j)]);
            }
        }
        let mut map = LinearMap {
            matrix,
            dim,
            orthogonal: false,
        };
        map.orthogonal = map.orthogonality_error() < ORTHOGONALITY_TOLERANCE;
        map
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dim + col]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.matrix
    }

    /// `‖WᵀW − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim;
        let mut sum = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut g = 0.0;
                for r in 0..d {
                    g += self.matrix[r * d + i] * self.matrix[r * d + j];
                }
                let e = g - if i == j { 1.0 } else { 0.0 };
                sum += e * e;
            }
        }
        sum.sqrt()
    }

    /// Frobenius distance to another map of the same size.
    pub fn distance(&self, other: &LinearMap) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `xW` (not renormalized).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "vector does not match map dimension");
        out.iter_mut().for_each(|o| *o = 0.0);
        for (xi, w_row) in x.iter().zip(self.matrix.chunks_exact(self.dim)) {
            for (o, w) in out.iter_mut().zip(w_row) {
                *o += xi * w;
            }
        }
    }

    /// Maps every row and renormalizes it; returns row-major data.
    pub fn map_rows(&self, rows: Rows<'_>) -> Vec<f64> {
        assert_eq!(rows.dim(), self.dim, "rows do not match map dimension");
        let mut out = vec![0.0; rows.len() * self.dim];
        out.par_chunks_exact_mut(self.dim)
            .zip(rows.iter().collect::<Vec<_>>())
            .for_each(|(dst, src)| {
                self.apply_into(src, dst);
                embedding::normalize(dst);
            });
        out
    }

    /// Text form: `"<d> <d>"` then `d` rows of 9-significant-digit floats.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.dim, self.dim)?;
        for row in self.matrix.chunks_exact(self.dim) {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.8e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::format(path, 1, "empty map file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, 1, "expected \"<d> <d>\" header"))?;
        let dim = match dims.as_slice() {
            [r, c] if r == c && *r > 0 => *r,
            _ => return Err(Error::format(path, 1, "expected a square \"<d> <d>\" header")),
        };
        let mut matrix = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            let line_no = r + 2;
            let line = lines
                .next()
                .transpose()
                .map_err(|e| Error::io(path, e))?
                .ok_or_else(|| Error::format(path, line_no, "missing matrix row"))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(path, line_no, "unparsable matrix entry"))?;
            if row.len() != dim {
                return Err(Error::format(
                    path,
                    line_no,
                    format!("expected {dim} entries, found {}", row.len()),
                ));
            }
            matrix.extend(row);
        }
        LinearMap::from_row_major(dim, matrix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedSource {
    IdenticalStrings,
    File,
    Synthetic,
}

/// Anchor pairs for the initial Procrustes fit.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedLexicon {
    pub pairs: Vec<(String, String)>,
    pub source: SeedSource,
}

impl SeedLexicon {
    /// Reads a `source<TAB>target` file, dropping pairs whose tokens are
    /// missing from either embedding table.
    pub fn load(path: impl AsRef<Path>, src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut missing = 0usize;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let Some((s, t)) = line.split_once('\t') else {
                return Err(Error::format(path, i + 1, "expected \"source<TAB>target\""));
            };
            let (s, t) = (s.trim(), t.trim());
            if src.contains(s) && tgt.contains(t) {
                pairs.push((s.to_owned(), t.to_owned()));
            } else {
                missing += 1;
            }
        }
        if missing > 0 {
            log::warn!("{}: {missing} seed pairs not covered by the embeddings", path.display());
        }
        if pairs.is_empty() {
            return Err(Error::Data(format!(
                "{}: no usable seed pairs",
                path.display()
            )));
        }
        Ok(SeedLexicon {
            pairs,
            source: SeedSource::File,
        })
    }

    fn resolve(&self, src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<Vec<(usize, usize)>> {
        self.pairs
            .iter()
            .map(|(s, t)| match (src.index_of(s), tgt.index_of(t)) {
                (Some(i), Some(j)) => Ok((i, j)),
                _ => Err(Error::Data(format!("seed pair ({s:?}, {t:?}) not in vocabulary"))),
            })
            .collect()
    }
}

/// Pairs every token spelled identically in both vocabularies, in source
/// row order.
pub fn seed_identical_strings(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<SeedLexicon> {
    let pairs: Vec<(String, String)> = src
        .tokens()
        .iter()
        .filter(|t| tgt.contains(t))
        .map(|t| (t.clone(), t.clone()))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Data(
            "source and target vocabularies share no tokens; supply a seed lexicon file".into(),
        ));
    }
    Ok(SeedLexicon {
        pairs,
        source: SeedSource::IdenticalStrings,
    })
}

/// Result of a Procrustes fit.
#[derive(Clone, Debug)]
pub struct ProcrustesFit {
    pub map: LinearMap,
    /// Singular values of `XᵀY`, descending.
    pub singular_values: Vec<f64>,
    pub pairs: usize,
}

impl ProcrustesFit {
    /// The optimum is not unique when `XᵀY` is rank deficient.
    pub fn is_rank_deficient(&self) -> bool {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        let min = self.singular_values.last().copied().unwrap_or(0.0);
        max == 0.0 || min <= max * 1e-10
    }
}

/// Orthogonal `W` minimizing `‖XW − Y‖_F` for the seed pairs.
pub fn procrustes(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, seed: &SeedLexicon) -> Result<ProcrustesFit> {
    let pairs = seed.resolve(src, tgt)?;
    procrustes_indexed(src.rows(), tgt.rows(), &pairs)
}

/// Procrustes on explicit row pairs `(source row, target row)`.
pub fn procrustes_indexed(src: Rows<'_>, tgt: Rows<'_>, pairs: &[(usize, usize)]) -> Result<ProcrustesFit> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    if pairs.len() < 2 {
        return Err(Error::Data(format!(
            "Procrustes needs at least 2 seed pairs, got {}",
            pairs.len()
        )));
    }
    let d = src.dim();
    if pairs.len() < d {
        log::warn!("only {} seed pairs for dimension {d}; the map is underdetermined", pairs.len());
    }
    let mut cross = DMatrix::<f64>::zeros(d, d);
    for &(i, j) in pairs {
        let (x, y) = (src.row(i), tgt.row(j));
        for (a, xa) in x.iter().enumerate() {
            for (b, yb) in y.iter().enumerate() {
                cross[(a, b)] += xa * yb;
            }
        }
    }
    solve(cross, pairs.len())
}

/// Procrustes on two stacked point sets of equal shape (row `i` of `x`
/// pairs with row `i` of `y`). Rows need not be unit length.
pub fn procrustes_rows(x: Rows<'_>, y: Rows<'_>) -> Result<ProcrustesFit> {
    if x.len() != y.len() {
        return Err(Error::Data(format!("{} source rows but {} target rows", x.len(), y.len())));
    }
    let pairs: Vec<(usize, usize)> = (0..x.len()).map(|i| (i, i)).collect();
    procrustes_indexed(x, y, &pairs)
}

fn solve(cross: DMatrix<f64>, pairs: usize) -> Result<ProcrustesFit> {
    let svd = cross.svd(true, true);
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Data("SVD did not converge".into())),
    };
    let w = u * v_t;
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let fit = ProcrustesFit {
        map: LinearMap::from_nalgebra(&w),
        singular_values,
        pairs,
    };
    if fit.is_rank_deficient() {
        log::warn!("cross-covariance is rank deficient; the Procrustes solution is not unique");
    }
    Ok(fit)
}

/// Refinement hyper-parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefineConfig {
    pub iterations: usize,
    pub csls_k: usize,
    /// Only the this-many most frequent words of each side take part in
    /// building the synthetic lexicon. Clamped to the vocabulary size.
    pub dict_pool: usize,
    pub mutual_only: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 5,
            csls_k: 10,
            dict_pool: 10_000,
            mutual_only: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationReport {
    pub iteration: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub map: LinearMap,
    pub iterations: Vec<IterationReport>,
    /// Set when an iteration found fewer than two pairs.
    pub stopped_early: bool,
}

/// CSLS between a mapped source vector and target row `candidate`.
///
/// `2 cos(x, y) − r_T(x) − r_S(y)`, with `r_T` the mean cosine of the
/// query's `csls_k` nearest target rows and `r_S` the mean cosine of the
/// candidate's `csls_k` nearest mapped-source rows.
pub fn csls_score(
    mapped_query: &[f64],
    tgt: &EmbeddingMatrix,
    src_mapped: Rows<'_>,
    candidate: &str,
    csls_k: usize,
) -> Result<f64> {
    let y_index = tgt
        .index_of(candidate)
        .ok_or_else(|| Error::Data(format!("candidate {candidate:?} not in target vocabulary")))?;
    if mapped_query.len() != tgt.dim() || src_mapped.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: tgt.dim(),
            found: mapped_query.len(),
        });
    }
    let mut q = mapped_query.to_vec();
    if !embedding::normalize(&mut q) {
        return Err(Error::ZeroVector);
    }
    let y = tgt.row(y_index);
    let r_target = mean_neighbor_similarity(Rows::new(&q, q.len()), tgt.rows(), csls_k)?[0];
    let r_source = mean_neighbor_similarity(Rows::new(y, y.len()), src_mapped, csls_k)?[0];
    Ok(2.0 * embedding::dot(&q, y) - r_target - r_source)
}

/// Mutual (or one-directional) CSLS nearest-neighbor pairs between the
/// mapped source rows and target rows.
pub(crate) fn csls_pairs(
    mapped: Rows<'_>,
    tgt: Rows<'_>,
    csls_k: usize,
    mutual_only: bool,
) -> Result<Vec<(usize, usize)>> {
    let r_target = mean_neighbor_similarity(mapped, tgt, csls_k)?;
    let r_source = mean_neighbor_similarity(tgt, mapped, csls_k)?;
    let forward = knn_scan(mapped, tgt, 1, |cos, j| 2.0 * cos - r_source[j]);
    let backward = if mutual_only {
        knn_scan(tgt, mapped, 1, |cos, i| 2.0 * cos - r_target[i])
    } else {
        Vec::new()
    };
    Ok(forward
        .iter()
        .enumerate()
        .filter_map(|(s, best)| {
            let t = best.first()?.index;
            if !mutual_only || backward[t].first().map(|n| n.index) == Some(s) {
                Some((s, t))
            } else {
                None
            }
        })
        .collect())
}

/// Iterative Procrustes refinement on induced CSLS lexicons.
pub fn refine(
    map: &LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    if map.dim() != src.dim() || map.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: src.dim(),
        });
    }
    if cfg.csls_k == 0 {
        return Err(Error::Config("csls_k must be at least 1".into()));
    }
    let mut current = map.clone();
    let mut reports = Vec::with_capacity(cfg.iterations);
    let mut stopped_early = false;
    let src_pool = src.rows().prefix(cfg.dict_pool);
    let tgt_pool = tgt.rows().prefix(cfg.dict_pool);

    for iteration in 1..=cfg.iterations {
        let mapped = current.map_rows(src_pool);
        let pairs = csls_pairs(Rows::new(&mapped, src.dim()), tgt_pool, cfg.csls_k, cfg.mutual_only)?;
        log::info!("refinement iteration {iteration}: {} synthetic pairs", pairs.len());
        reports.push(IterationReport {
            iteration,
            pairs: pairs.len(),
        });
        if pairs.len() < 2 {
            log::warn!("refinement stopped early at iteration {iteration}: fewer than 2 pairs");
            stopped_early = true;
            break;
        }
        current = procrustes_indexed(src.rows(), tgt.rows(), &pairs)?.map;
    }
    Ok(RefineOutcome {
        map: current,
        iterations: reports,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(tokens: &[&str], rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(tokens.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn identical_string_seed() {
        let src = matrix(&["2010", ".", "casa"], vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let tgt = matrix(&["2010", ".", "house"], vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let seed = seed_identical_strings(&src, &tgt).unwrap();
        assert_eq!(
            seed.pairs,
            vec![("2010".to_string(), "2010".to_string()), (".".to_string(), ".".to_string())]
        );
        assert_eq!(seed.source, SeedSource::IdenticalStrings);

        let other = matrix(&["x", "y"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let err = seed_identical_strings(&src, &other).unwrap_err();
        assert!(err.to_string().contains("seed lexicon"));

        let all = seed_identical_strings(&src, &src).unwrap();
        assert_eq!(all.pairs.len(), 3);
    }

    #[test]
    fn identity_recovery() {
        let m = matrix(
            &["a", "b", "c"],
            vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.4, 0.0, 1.0]],
        );
        let seed = seed_identical_strings(&m, &m).unwrap();
        let fit = procrustes(&m, &m, &seed).unwrap();
        assert!(!fit.is_rank_deficient());
        assert!(fit.map.distance(&LinearMap::identity(3)) < 1e-6 * 3.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((fit.map.get(i, j) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let m = matrix(&["a", "b"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let seed = SeedLexicon {
            pairs: vec![("a".into(), "a".into())],
            source: SeedSource::Synthetic,
        };
        assert!(procrustes(&m, &m, &seed).is_err());
    }

    #[test]
    fn rank_deficiency_is_flagged_not_fatal() {
        let m = matrix(&["a", "b", "c"], vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let seed = seed_identical_strings(&m, &m).unwrap();
        let fit = procrustes(&m, &m, &seed).unwrap();
        assert!(fit.is_rank_deficient());
        assert!(fit.map.orthogonality_error() < ORTHOGONALITY_TOLERANCE);
    }

    #[test]
    fn csls_single_pair_is_zero() {
        let tgt = matrix(&["y"], vec![vec![0.6, 0.8]]);
        let src_mapped = [0.6, 0.8];
        let score = csls_score(&[0.6, 0.8], &tgt, Rows::new(&src_mapped, 2), "y", 1).unwrap();
        assert!(score.abs() < 1e-12);
        assert!(csls_score(&[0.6, 0.8], &tgt, Rows::new(&src_mapped, 2), "y", 2).is_err());
        assert!(csls_score(&[0.6, 0.8], &tgt, Rows::new(&src_mapped, 2), "nope", 1).is_err());
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let m = matrix(&["a", "b"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let map = LinearMap::from_row_major(2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let cfg = RefineConfig {
            iterations: 0,
            ..RefineConfig::default()
        };
        let out = refine(&map, &m, &m, &cfg).unwrap();
        assert_eq!(out.map, map);
        assert!(out.iterations.is_empty());
    }

    #[test]
    fn map_file_round_trip() {
        let theta: f64 = 0.3;
        let map = LinearMap::from_row_major(2, vec![theta.cos(), theta.sin(), -theta.sin(), theta.cos()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        map.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("2 2\n"));
        let back = LinearMap::load(&path).unwrap();
        assert!(back.is_orthogonal());
        assert!(back.distance(&map) < 1e-8);
    }

    #[test]
    fn malformed_map_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        std::fs::write(&path, "2 2\n1 0\n0\n").unwrap();
        match LinearMap::load(&path).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
