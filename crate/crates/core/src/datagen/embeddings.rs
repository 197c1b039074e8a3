use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, FormatError, Result};
use crate::rng::stream;

/// One vector per token, row-major `L×d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEmbeddings {
    dim: usize,
    values: Vec<f64>,
}

impl VocabEmbeddings {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite token embedding"));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of tokens `L`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, token: usize) -> &[f64] {
        &self.values[token * self.dim..(token + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rescales every vector longer than `bound` to length `bound`.
    pub fn clip_norms(&mut self, bound: f64) {
        for row in self.values.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > bound {
                row.iter_mut().for_each(|v| *v *= bound / norm);
            }
        }
    }
}

/// A word-vector table as read from text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub words: Vec<String>,
    pub vectors: VocabEmbeddings,
}

/// Reads `word v1 … vD` lines. A leading `count dim` line, as written by
/// word2vec's text exporter, is skipped.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_embedding_table(&text)?)
}

pub(crate) fn parse_embedding_table(text: &str) -> Result<EmbeddingTable, FormatError> {
    let mut words = Vec::new();
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if idx == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        match dim {
            None if rest.is_empty() => {
                return Err(FormatError::Parse {
                    line: line_no,
                    message: format!("word {word:?} has no vector"),
                })
            }
            None => dim = Some(rest.len()),
            Some(d) if d != rest.len() => {
                return Err(FormatError::Parse {
                    line: line_no,
                    message: format!("expected {d} components, found {}", rest.len()),
                })
            }
            Some(_) => {}
        }
        for (col, field) in rest.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| FormatError::Parse {
                line: line_no,
                message: format!("component {} is not a number: {field:?}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Parse {
                    line: line_no,
                    message: format!("component {} is not finite", col + 1),
                });
            }
            values.push(v);
        }
        words.push(word.to_string());
    }
    let dim = dim.ok_or(FormatError::Parse {
        line: 0,
        message: "no embeddings found".into(),
    })?;
    Ok(EmbeddingTable {
        words,
        vectors: VocabEmbeddings { dim, values },
    })
}

/// Picks `count` distinct rows uniformly at random, in draw order.
pub fn choose_words(table: &EmbeddingTable, count: usize, seed: u64) -> Result<EmbeddingTable> {
    let total = table.words.len();
    if count == 0 || count > total {
        return Err(Error::invalid(format!(
            "cannot choose {count} words from a table of {total}"
        )));
    }
    let mut rng = stream(seed);
    let picks = index::sample(&mut rng, total, count);
    let mut words = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * table.vectors.dim);
    for i in picks.iter() {
        words.push(table.words[i].clone());
        values.extend_from_slice(table.vectors.vector(i));
    }
    Ok(EmbeddingTable {
        words,
        vectors: VocabEmbeddings::new(table.vectors.dim, values)?,
    })
}

/// Gaussian random projection to `target_dim` dimensions.
///
/// `P` is `D×target_dim` with i.i.d. `N(0, 1/target_dim)` entries drawn once
/// from `seed`; each token maps to `Pᵀx`, which preserves squared norms in
/// expectation.
pub fn random_project(v: &VocabEmbeddings, target_dim: usize, seed: u64) -> Result<VocabEmbeddings> {
    if target_dim == 0 || target_dim > v.dim {
        return Err(Error::invalid(format!(
            "cannot project dimension {} to {target_dim}",
            v.dim
        )));
    }
    let normal = Normal::new(0.0, (1.0 / target_dim as f64).sqrt()).expect("positive scale");
    let mut rng = stream(seed);
    let p: Vec<f64> = (0..v.dim * target_dim).map(|_| normal.sample(&mut rng)).collect();
    project_with(v, &p, target_dim)
}

/// Applies an explicit row-major `D×target_dim` projection.
pub fn project_with(v: &VocabEmbeddings, p: &[f64], target_dim: usize) -> Result<VocabEmbeddings> {
    if target_dim == 0 || p.len() != v.dim * target_dim {
        return Err(Error::invalid(format!(
            "projection has {} entries, expected {}x{target_dim}",
            p.len(),
            v.dim
        )));
    }
    let mut out = vec![0.0; v.len() * target_dim];
    for (x, y) in v.values.chunks_exact(v.dim).zip(out.chunks_exact_mut(target_dim)) {
        for (r, &xr) in x.iter().enumerate() {
            for (c, yc) in y.iter_mut().enumerate() {
                *yc += p[r * target_dim + c] * xr;
            }
        }
    }
    VocabEmbeddings::new(target_dim, out)
}
