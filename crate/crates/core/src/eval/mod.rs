//! Prediction-error metrics and the multi-method experiment harness.

mod config;
mod experiment;

pub use config::ExperimentConfig;
pub use experiment::{
    run_experiment, AggregateRow, DataSource, ExperimentOutput, ExperimentRecord,
    AGGREGATE_HEADER, FAILURES_HEADER, RECORDS_HEADER,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{
    clustered_sensitivity, density_sampling, sentence_od, uniform_select, ClusteredParams,
    DensityParams, DEFAULT_BATCH_SIZE,
};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::selection::{greedy_naive, realized_gains, LazyGreedy, SelectionResult};
use crate::softmax::ParamMatrix;

/// Per-sentence prediction errors `Σ_j ‖(Θ* − Θ̂)ᵀ x_j‖₂`.
pub fn sentence_errors(theta_star: &ParamMatrix, theta_hat: &ParamMatrix, dataset: &Dataset) -> Result<Vec<f64>> {
    let (d, l) = (theta_star.dim(), theta_star.vocab_size());
    if theta_hat.dim() != d || theta_hat.vocab_size() != l {
        return Err(Error::invalid(format!(
            "comparing {d}x{l} parameters with {}x{}",
            theta_hat.dim(),
            theta_hat.vocab_size()
        )));
    }
    if dataset.dim() != d || dataset.vocab_size() != l {
        return Err(Error::invalid(format!(
            "{d}x{l} parameters for a dataset with d = {}, L = {}",
            dataset.dim(),
            dataset.vocab_size()
        )));
    }
    let diff: Vec<f64> = theta_star
        .as_slice()
        .iter()
        .zip(theta_hat.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let diff = ParamMatrix::from_column_major(d, l, diff)?;
    Ok(dataset
        .sentences()
        .par_iter()
        .map(|s| {
            let mut x = vec![0.0; d];
            let mut z = vec![0.0; l];
            s.embeddings()
                .chunks_exact(d)
                .map(|row| {
                    x.iter_mut().zip(row).for_each(|(a, &b)| *a = f64::from(b));
                    diff.logits_into(&x, &mut z);
                    z.iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .sum()
        })
        .collect())
}

/// Largest per-sentence prediction error.
pub fn max_pred_error(theta_star: &ParamMatrix, theta_hat: &ParamMatrix, dataset: &Dataset) -> Result<f64> {
    Ok(sentence_errors(theta_star, theta_hat, dataset)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Per-sentence prediction error averaged over the dataset.
pub fn mean_pred_error(theta_star: &ParamMatrix, theta_hat: &ParamMatrix, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("mean error over an empty dataset"));
    }
    let e = sentence_errors(theta_star, theta_hat, dataset)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Selection methods that work on embeddings alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    FisherSft,
    GreedyNaive,
    Uniform,
    SentenceOd,
    Density,
    Clustered,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::FisherSft,
        Method::GreedyNaive,
        Method::Uniform,
        Method::SentenceOd,
        Method::Density,
        Method::Clustered,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FisherSft => "fisher-sft",
            Method::GreedyNaive => "greedy-naive",
            Method::Uniform => "uniform",
            Method::SentenceOd => "sentence-od",
            Method::Density => "density",
            Method::Clustered => "clustered",
        }
    }

    /// Stream tag for the method's randomness under a run seed.
    fn tag(&self) -> u64 {
        16 + *self as u64
    }

    /// Runs the method. Methods that are not greedy get the gains their
    /// choices realize, in order, as `round_gains`.
    pub fn select(&self, dataset: &Dataset, n: usize, seed: u64, settings: &MethodSettings) -> Result<SelectionResult> {
        let method_seed = crate::rng::derive_seed(seed, self.tag());
        let sigma0 = settings.sigma0;
        let mut result = match self {
            Method::FisherSft => {
                let mut lazy = LazyGreedy::new(settings.batch_size, sigma0);
                lazy.parallel = true;
                lazy.run(dataset, n)?
            }
            Method::GreedyNaive => greedy_naive(dataset, n, sigma0)?,
            Method::SentenceOd => sentence_od(dataset, n, sigma0)?,
            Method::Uniform => {
                crate::selection::check_budget(dataset, n)?;
                uniform_select(dataset.len(), n, method_seed)?
            }
            Method::Density => {
                let params = DensityParams { seed: method_seed, ..settings.density.clone() };
                density_sampling(dataset, n, &params)?
            }
            Method::Clustered => {
                let params = ClusteredParams { seed: method_seed, ..settings.clustered.clone() };
                clustered_sensitivity(dataset, n, &params)?
            }
        };
        result.seed = seed;
        if matches!(self, Method::Uniform | Method::Density | Method::Clustered) {
            result.round_gains = realized_gains(dataset, &result.chosen, sigma0)?;
            result.sigma0 = Some(sigma0);
        }
        Ok(result)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(Method::as_str).collect();
                Error::invalid(format!("unknown method {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

/// Knobs shared by every selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub sigma0: f64,
    pub batch_size: usize,
    pub density: DensityParams,
    pub clustered: ClusteredParams,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            batch_size: DEFAULT_BATCH_SIZE,
            density: DensityParams::default(),
            clustered: ClusteredParams::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_theta_star, SyntheticConfig, TokenizedSentence};

    #[test]
    fn identical_parameters_have_zero_error() {
        let p = SyntheticConfig { corpus_size: 30, ..SyntheticConfig::default() }.generate(1).unwrap();
        assert_eq!(max_pred_error(&p.theta_star, &p.theta_star, &p.dataset).unwrap(), 0.0);
        assert_eq!(mean_pred_error(&p.theta_star, &p.theta_star, &p.dataset).unwrap(), 0.0);
    }

    #[test]
    fn single_position_error_is_a_norm() {
        let s = TokenizedSentence::new(2, vec![0], vec![1.0, -2.0]).unwrap();
        let ds = Dataset::new(2, 2, vec![s]).unwrap();
        let a = ParamMatrix::from_column_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = ParamMatrix::zeros(2, 2);
        // (Θ* − Θ̂)ᵀx = (1, −2).
        let e = 5f64.sqrt();
        assert_eq!(max_pred_error(&a, &b, &ds).unwrap(), e);
        assert_eq!(mean_pred_error(&a, &b, &ds).unwrap(), e);
    }

    #[test]
    fn matches_double_loop() {
        let p = SyntheticConfig { vocab_size: 4, dim: 3, corpus_size: 25, ..SyntheticConfig::default() }
            .generate(2)
            .unwrap();
        let hat = gen_theta_star(3, 4, 99).unwrap();
        let mut per_sentence = Vec::new();
        for s in p.dataset.sentences() {
            let mut total = 0.0;
            for j in 0..s.len() {
                let x = s.embedding(j);
                let mut sq = 0.0;
                for t in 0..4 {
                    let mut v = 0.0;
                    for a in 0..3 {
                        v += (p.theta_star.get(a, t) - hat.get(a, t)) * f64::from(x[a]);
                    }
                    sq += v * v;
                }
                total += sq.sqrt();
            }
            per_sentence.push(total);
        }
        let max = per_sentence.iter().copied().fold(0.0, f64::max);
        let mean = per_sentence.iter().sum::<f64>() / 25.0;
        assert!((max_pred_error(&p.theta_star, &hat, &p.dataset).unwrap() - max).abs() < 1e-12);
        assert!((mean_pred_error(&p.theta_star, &hat, &p.dataset).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = SyntheticConfig { corpus_size: 5, ..SyntheticConfig::default() }.generate(1).unwrap();
        assert!(max_pred_error(&p.theta_star, &ParamMatrix::zeros(10, 19), &p.dataset).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("fishersft".parse::<Method>().is_err());
    }
}
