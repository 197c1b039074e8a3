use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, TokenizedSentence, VocabEmbeddings};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::softmax::{softmax_in_place, ParamMatrix};

/// `L` token vectors with i.i.d. standard normal entries.
pub fn gen_vocab(vocab_size: usize, dim: usize, seed: u64) -> Result<VocabEmbeddings> {
    if vocab_size == 0 || dim == 0 {
        return Err(Error::invalid("vocabulary size and dimension must be positive"));
    }
    let mut rng = stream(seed);
    let values = (0..vocab_size * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    VocabEmbeddings::new(dim, values)
}

/// A `d×L` parameter matrix with i.i.d. standard normal entries, left
/// outside the zero-sum gauge.
pub fn gen_theta_star(dim: usize, vocab_size: usize, seed: u64) -> Result<ParamMatrix> {
    if vocab_size == 0 || dim == 0 {
        return Err(Error::invalid("vocabulary size and dimension must be positive"));
    }
    let mut rng = stream(seed);
    let values = (0..vocab_size * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    ParamMatrix::from_column_major(dim, vocab_size, values)
}

/// Samples `count` sentences from the first-order softmax chain.
///
/// Each sentence has a length drawn uniformly from `len_range` (inclusive);
/// its first token is uniform over the vocabulary and every later token is
/// drawn from `softmax(Θᵀ x)` where `x` is the previous token's vector. Only
/// the later tokens are modeled, so a length-`m` sentence has `m − 1`
/// positions.
pub fn gen_corpus(
    vocab: &VocabEmbeddings,
    theta_star: &ParamMatrix,
    count: usize,
    len_range: (usize, usize),
    seed: u64,
) -> Result<Dataset> {
    let (lo, hi) = len_range;
    if lo < 2 || hi < lo {
        return Err(Error::invalid(format!(
            "sentence lengths [{lo}, {hi}] need 2 <= min <= max"
        )));
    }
    if theta_star.dim() != vocab.dim() || theta_star.vocab_size() != vocab.len() {
        return Err(Error::invalid(format!(
            "{}x{} parameters for {} tokens of dimension {}",
            theta_star.dim(),
            theta_star.vocab_size(),
            vocab.len(),
            vocab.dim()
        )));
    }
    let (dim, l) = (vocab.dim(), vocab.len());
    // Contexts are stored as f32; sample from the stored values so the data
    // follow the model exactly.
    let stored: Vec<Vec<f32>> = (0..l)
        .map(|t| vocab.vector(t).iter().map(|&v| v as f32).collect())
        .collect();
    let probs: Vec<Vec<f64>> = stored
        .iter()
        .map(|x| {
            let wide: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
            let mut z = theta_star.logits(&wide);
            softmax_in_place(&mut z);
            z
        })
        .collect();

    let mut rng = stream(seed);
    let mut sentences = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.random_range(lo..=hi);
        let mut prev = rng.random_range(0..l);
        let mut tokens = Vec::with_capacity(len - 1);
        let mut embeddings = Vec::with_capacity((len - 1) * dim);
        for _ in 1..len {
            let next = sample_categorical(&probs[prev], rng.random::<f64>());
            embeddings.extend_from_slice(&stored[prev]);
            tokens.push(next as u32);
            prev = next;
        }
        sentences.push(TokenizedSentence::new(dim, tokens, embeddings)?);
    }
    Dataset::new(dim, l, sentences)
}

fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum just below u.
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

/// Sizes of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub corpus_size: usize,
    pub len_min: usize,
    pub len_max: usize,
    /// Shrink token vectors longer than 1 onto the unit sphere.
    pub normalize: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocab_size: 20,
            dim: 10,
            corpus_size: 5000,
            len_min: 5,
            len_max: 20,
            normalize: false,
        }
    }
}

/// Token vectors, true parameters and the corpus they generate.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub vocab: VocabEmbeddings,
    pub theta_star: ParamMatrix,
    pub dataset: Dataset,
}

impl SyntheticConfig {
    /// Everything from one master seed.
    pub fn generate(&self, seed: u64) -> Result<SyntheticProblem> {
        let vocab = gen_vocab(self.vocab_size, self.dim, derive_seed(seed, 1))?;
        self.generate_with_vocab(vocab, seed)
    }

    /// Uses externally supplied token vectors (for instance projected word
    /// embeddings); `Θ*` and the corpus still come from `seed`.
    pub fn generate_with_vocab(&self, mut vocab: VocabEmbeddings, seed: u64) -> Result<SyntheticProblem> {
        if vocab.len() != self.vocab_size || vocab.dim() != self.dim {
            return Err(Error::invalid(format!(
                "vocabulary is {}x{}, config wants {}x{}",
                vocab.len(),
                vocab.dim(),
                self.vocab_size,
                self.dim
            )));
        }
        if self.normalize {
            vocab.clip_norms(1.0);
        }
        let theta_star = gen_theta_star(self.dim, self.vocab_size, derive_seed(seed, 2))?;
        let dataset = gen_corpus(
            &vocab,
            &theta_star,
            self.corpus_size,
            (self.len_min, self.len_max),
            derive_seed(seed, 3),
        )?;
        Ok(SyntheticProblem {
            vocab,
            theta_star,
            dataset,
        })
    }
}
