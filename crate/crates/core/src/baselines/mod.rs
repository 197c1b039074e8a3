//! Comparison selectors: uniform sampling, sentence-level optimal design,
//! density-based inverse propensity sampling, clustering-based sensitivity
//! sampling and LLM-judged quality scoring.

mod ask_llm;
mod clustered;
mod density;
mod uniform;

pub use ask_llm::{
    ask_llm_select, score_all, wrap_prompt, AskLlmOptions, FnScorer, HttpScorer, ProcessScorer,
    ScoreRequest, ScoreResponse, Scorer, ScorerError, ASK_LLM_PROMPT,
};
pub use clustered::{
    clustered_sensitivity, kmeans, sensitivity_probabilities, ClusterModel, ClusteredParams,
};
pub use density::{density_sampling, DensityMode, DensityParams, RaceSketch};
pub use uniform::uniform_select;

use std::time::Instant;

use rand::Rng as _;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::selection::{LazyGreedy, SelectionResult};

/// Batch size used when a caller does not pick one.
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Greedy log-determinant selection on sentence embeddings, where each
/// sentence is represented by the sum of its position embeddings.
///
/// Identical to [`greedy_naive`](crate::selection::greedy_naive) on
/// [`Dataset::summed`]; the lazy selector is used for speed.
pub fn sentence_od(dataset: &Dataset, n: usize, sigma0: f64) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut result = LazyGreedy::new(DEFAULT_BATCH_SIZE, sigma0).run(&dataset.summed(), n)?;
    result.method = "sentence-od".into();
    result.batch_size = None;
    result.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Sentence embeddings `Σ_j x_j`, row-major `N×d`.
pub(crate) fn sentence_embeddings(dataset: &Dataset) -> Vec<f64> {
    dataset
        .sentences()
        .iter()
        .flat_map(|s| s.summed_embedding())
        .collect()
}

/// Draws `n` distinct indices with probability proportional to `weights`
/// using exponential keys: item `i` gets `-ln(u_i) / w_i` and the `n`
/// smallest keys win, in increasing key order.
pub fn weighted_sample_without_replacement(
    weights: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("sampling weights must be finite and non-negative"));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if n > 0 && positive == 0 {
        return Err(Error::InvalidState("total sampling weight is zero".into()));
    }
    if positive < n {
        return Err(Error::InvalidState(format!(
            "only {positive} items have positive weight, {n} requested"
        )));
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // 1 - u lies in (0, 1], so the key is finite for positive w.
            let u: f64 = rng.random();
            let key = if w > 0.0 { -(1.0 - u).ln() / w } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().take(n).map(|(_, i)| i).collect())
}
