//! Corpora of tokenized sentences with one context embedding per modeled
//! position, the synthetic generator, embedding-table ingestion and the
//! on-disk dataset formats.

mod embeddings;
mod format;
mod synth;

pub use embeddings::{
    choose_words, load_embedding_table, project_with, random_project, EmbeddingTable,
    VocabEmbeddings,
};
pub use format::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use synth::{gen_corpus, gen_theta_star, gen_vocab, SyntheticConfig, SyntheticProblem};

use crate::design::GainQuery;
use crate::error::{Error, Result};

/// One sentence reduced to its modeled positions.
///
/// Position `j` pairs the observed token `tokens[j]` with the embedding of
/// its history, stored row-major in `embeddings[j * dim..(j + 1) * dim]`.
/// A sentence of `m` raw tokens whose first token has no history carries
/// `m - 1` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedSentence {
    dim: usize,
    tokens: Vec<u32>,
    embeddings: Vec<f32>,
}

impl TokenizedSentence {
    pub fn new(dim: usize, tokens: Vec<u32>, embeddings: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if embeddings.len() != tokens.len() * dim {
            return Err(Error::invalid(format!(
                "{} tokens need {} embedding values, got {}",
                tokens.len(),
                tokens.len() * dim,
                embeddings.len()
            )));
        }
        if let Some(v) = embeddings.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite embedding value {v}")));
        }
        Ok(Self {
            dim,
            tokens,
            embeddings,
        })
    }

    /// Builds a sentence from per-position vectors.
    pub fn from_positions(dim: usize, positions: &[(u32, Vec<f32>)]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(positions.len());
        let mut embeddings = Vec::with_capacity(positions.len() * dim);
        for (token, x) in positions {
            if x.len() != dim {
                return Err(Error::invalid(format!(
                    "embedding of length {} in a dimension-{dim} sentence",
                    x.len()
                )));
            }
            tokens.push(*token);
            embeddings.extend_from_slice(x);
        }
        Self::new(dim, tokens, embeddings)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of modeled positions.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn embedding(&self, position: usize) -> &[f32] {
        &self.embeddings[position * self.dim..(position + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = (u32, &[f32])> + '_ {
        self.tokens
            .iter()
            .copied()
            .zip(self.embeddings.chunks_exact(self.dim))
    }

    /// Sum of the position embeddings, accumulated in 64-bit.
    pub fn summed_embedding(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for x in self.embeddings.chunks_exact(self.dim) {
            for (s, &v) in sum.iter_mut().zip(x) {
                *s += f64::from(v);
            }
        }
        sum
    }

    pub fn gain_query(&self) -> GainQuery<'_, f32> {
        GainQuery::new(self.dim, &self.embeddings)
    }
}

/// A corpus of sentences sharing one embedding dimension and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    vocab_size: usize,
    sentences: Vec<TokenizedSentence>,
}

impl Dataset {
    pub fn new(dim: usize, vocab_size: usize, sentences: Vec<TokenizedSentence>) -> Result<Self> {
        if dim == 0 || vocab_size == 0 {
            return Err(Error::invalid(
                "dataset dimension and vocabulary size must be positive",
            ));
        }
        for (i, s) in sentences.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::invalid(format!(
                    "sentence {i} has dimension {}, dataset has {dim}",
                    s.dim()
                )));
            }
            if let Some(&t) = s.tokens().iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::invalid(format!(
                    "sentence {i} has token {t} outside vocabulary of size {vocab_size}"
                )));
            }
        }
        Ok(Self {
            dim,
            vocab_size,
            sentences,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn sentences(&self) -> &[TokenizedSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn total_positions(&self) -> usize {
        self.sentences.iter().map(TokenizedSentence::len).sum()
    }

    /// The same corpus with every sentence collapsed to a single position
    /// carrying the sum of its embeddings (rounded to stored precision).
    /// The token of that position is the sentence's first token, or 0.
    pub fn summed(&self) -> Dataset {
        let sentences = self
            .sentences
            .iter()
            .map(|s| {
                let x: Vec<f32> = s.summed_embedding().into_iter().map(|v| v as f32).collect();
                let token = s.tokens().first().copied().unwrap_or(0);
                TokenizedSentence {
                    dim: self.dim,
                    tokens: vec![token],
                    embeddings: x,
                }
            })
            .collect();
        Dataset {
            dim: self.dim,
            vocab_size: self.vocab_size,
            sentences,
        }
    }
}
