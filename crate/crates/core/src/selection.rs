//! Greedy log-determinant subset selection.
//!
//! [`greedy_naive`] rescans every remaining sentence each round.
//! [`fisher_sft`] caches gains and only recomputes a sentence when its cached
//! value still beats the best gain seen so far in the round. Gains of
//! `log det` can only shrink as `V` grows, so a cached value is an upper bound
//! and skipped sentences can never be the round's winner. Both produce the
//! same sequence, bit for bit.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};

/// Ordered output of a selection method.
///
/// Serializes with the field order `method, seed, n, sigma0, batch_size,
/// chosen, round_gains, gain_evaluations, wall_ms`; `weights` is appended
/// only by methods that produce importance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub seed: u64,
    pub n: usize,
    pub sigma0: Option<f64>,
    pub batch_size: Option<usize>,
    pub chosen: Vec<usize>,
    /// Greedy methods: the winning gain of each round. Other methods: the
    /// gain each chosen sentence adds when committed in the chosen order.
    pub round_gains: Vec<f64>,
    pub gain_evaluations: u64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl SelectionResult {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &SelectionResult) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        &a == other
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection results always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("malformed selection JSON: {e}")))
    }
}

pub(crate) fn check_budget(dataset: &Dataset, n: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot select from an empty dataset"));
    }
    if n > dataset.len() {
        return Err(Error::invalid(format!(
            "budget n = {n} exceeds dataset size N = {}",
            dataset.len()
        )));
    }
    Ok(())
}

/// Index of the largest value, lowest index on ties; `None` if all are `-∞`.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Plain greedy: every round evaluates every unselected sentence.
pub fn greedy_naive(dataset: &Dataset, n: usize, sigma0: f64) -> Result<SelectionResult> {
    check_budget(dataset, n)?;
    let start = Instant::now();
    let sentences = dataset.sentences();
    let mut design = DesignMatrix::new(dataset.dim(), sigma0)?;
    let mut gains = vec![0.0; sentences.len()];
    let mut chosen = Vec::with_capacity(n);
    let mut round_gains = Vec::with_capacity(n);
    let mut evaluations = 0u64;
    for _ in 0..n {
        for (i, s) in sentences.iter().enumerate() {
            if gains[i] == f64::NEG_INFINITY {
                continue;
            }
            gains[i] = design.gain(&s.gain_query())?;
            evaluations += 1;
        }
        let k = argmax(&gains).expect("n <= N leaves a candidate every round");
        round_gains.push(gains[k]);
        chosen.push(k);
        gains[k] = f64::NEG_INFINITY;
        design.commit(&sentences[k].gain_query())?;
    }
    Ok(SelectionResult {
        method: "greedy-naive".into(),
        seed: 0,
        n,
        sigma0: Some(sigma0),
        batch_size: None,
        chosen,
        round_gains,
        gain_evaluations: evaluations,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        weights: None,
    })
}

/// Cached upper bounds on each sentence's current gain.
#[derive(Debug, Clone)]
pub struct GainCache {
    /// `+∞` before the first evaluation, `-∞` once selected.
    pub g: Vec<f64>,
    pub g_max: f64,
    /// Round in which each entry was last recomputed (rounds count from 1).
    pub fresh: Vec<usize>,
}

impl GainCache {
    pub fn new(len: usize) -> Self {
        Self {
            g: vec![f64::INFINITY; len],
            g_max: 0.0,
            fresh: vec![0; len],
        }
    }
}

/// Lazy batched greedy with its tuning knobs.
#[derive(Debug, Clone)]
pub struct LazyGreedy {
    pub batch_size: usize,
    pub sigma0: f64,
    /// Evaluate each batch on the rayon pool. Results are identical either way.
    pub parallel: bool,
    /// Recompute every skipped gain and fail if it beats the round's running
    /// maximum. Test-only cost: turns the lazy run into a full scan.
    pub shadow_check: bool,
}

impl LazyGreedy {
    pub fn new(batch_size: usize, sigma0: f64) -> Self {
        Self {
            batch_size,
            sigma0,
            parallel: false,
            shadow_check: false,
        }
    }

    pub fn run(&self, dataset: &Dataset, n: usize) -> Result<SelectionResult> {
        check_budget(dataset, n)?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let start = Instant::now();
        let sentences = dataset.sentences();
        let total = sentences.len();
        let mut design = DesignMatrix::new(dataset.dim(), self.sigma0)?;
        let mut cache = GainCache::new(total);
        let mut chosen = Vec::with_capacity(n);
        let mut round_gains = Vec::with_capacity(n);
        let mut evaluations = 0u64;

        for round in 1..=n {
            cache.g_max = 0.0;
            for batch_start in (0..total).step_by(self.batch_size) {
                let batch = batch_start..(batch_start + self.batch_size).min(total);
                let stale: Vec<usize> = batch
                    .clone()
                    .filter(|&i| cache.g[i] > cache.g_max)
                    .collect();
                if self.shadow_check {
                    for i in batch.clone().filter(|i| !stale.contains(i)) {
                        if cache.g[i] == f64::NEG_INFINITY {
                            continue;
                        }
                        let fresh = design.gain(&sentences[i].gain_query())?;
                        if fresh > cache.g_max {
                            return Err(Error::InvalidState(format!(
                                "round {round}: skipped sentence {i} has gain {fresh} above {}",
                                cache.g_max
                            )));
                        }
                    }
                }
                let fresh = evaluate(&design, dataset, &stale, self.parallel)?;
                evaluations += stale.len() as u64;
                for (&i, g) in stale.iter().zip(fresh) {
                    cache.g[i] = g;
                    cache.fresh[i] = round;
                }
                let batch_max = cache.g[batch].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                cache.g_max = cache.g_max.max(batch_max);
            }

            // A stale entry can tie the round maximum while its true gain is
            // lower; refresh until the lowest-index maximizer is current.
            let k = loop {
                let k = argmax(&cache.g).expect("n <= N leaves a candidate every round");
                if cache.fresh[k] == round {
                    break k;
                }
                cache.g[k] = design.gain(&sentences[k].gain_query())?;
                cache.fresh[k] = round;
                evaluations += 1;
            };
            round_gains.push(cache.g[k]);
            chosen.push(k);
            cache.g[k] = f64::NEG_INFINITY;
            design.commit(&sentences[k].gain_query())?;
        }

        Ok(SelectionResult {
            method: "fisher-sft".into(),
            seed: 0,
            n,
            sigma0: Some(self.sigma0),
            batch_size: Some(self.batch_size),
            chosen,
            round_gains,
            gain_evaluations: evaluations,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            weights: None,
        })
    }
}

fn evaluate(
    design: &DesignMatrix,
    dataset: &Dataset,
    indices: &[usize],
    parallel: bool,
) -> Result<Vec<f64>> {
    let sentences = dataset.sentences();
    if parallel && indices.len() > 1 {
        indices
            .par_iter()
            .map(|&i| design.gain(&sentences[i].gain_query()))
            .collect()
    } else {
        indices
            .iter()
            .map(|&i| design.gain(&sentences[i].gain_query()))
            .collect()
    }
}

/// Lazy batched greedy selection; same output as [`greedy_naive`].
pub fn fisher_sft(
    dataset: &Dataset,
    n: usize,
    batch_size: usize,
    sigma0: f64,
) -> Result<SelectionResult> {
    LazyGreedy::new(batch_size, sigma0).run(dataset, n)
}

/// The gain each sentence adds when committed in the given order.
pub fn realized_gains(dataset: &Dataset, order: &[usize], sigma0: f64) -> Result<Vec<f64>> {
    let mut design = DesignMatrix::new(dataset.dim(), sigma0)?;
    order
        .iter()
        .map(|&i| {
            let q = dataset.sentences()[i].gain_query();
            let g = design.gain(&q)?;
            design.commit(&q)?;
            Ok(g)
        })
        .collect()
}
