use std::str::FromStr;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{sentence_embeddings, weighted_sample_without_replacement};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::selection::{check_budget, SelectionResult};

/// Kernel density sketch with signed-random-projection hashes.
///
/// Row `r` hashes a vector to the sign pattern of `⌈log₂ B⌉` Gaussian
/// projections, taken modulo `B`. The score of a query is its bucket count
/// averaged over rows, an estimate of the angular-kernel density at that
/// point.
#[derive(Debug, Clone)]
pub struct RaceSketch {
    rows: usize,
    bins: usize,
    dim: usize,
    bits: usize,
    seeds: Vec<u64>,
    /// `rows × bits × dim`.
    planes: Vec<f64>,
    counts: Vec<u64>,
    inserted: u64,
}

impl RaceSketch {
    pub fn new(rows: usize, bins: usize, dim: usize, seed: u64) -> Result<Self> {
        if rows == 0 || bins == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "sketch needs positive rows, bins and dimension, got {rows}, {bins}, {dim}"
            )));
        }
        let bits = bins.next_power_of_two().trailing_zeros() as usize;
        let seeds: Vec<u64> = (0..rows as u64).map(|r| derive_seed(seed, r)).collect();
        let mut planes = Vec::with_capacity(rows * bits * dim);
        for &s in &seeds {
            let mut rng = stream(s);
            planes.extend((0..bits * dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        }
        Ok(Self {
            rows,
            bins,
            dim,
            bits,
            seeds,
            planes,
            counts: vec![0; rows * bins],
            inserted: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Row-major `rows × bins` counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row * self.bins..(row + 1) * self.bins].iter().sum()
    }

    pub fn hash(&self, row: usize, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.dim, "query dimension");
        let mut pattern = 0usize;
        for b in 0..self.bits {
            let plane = &self.planes[(row * self.bits + b) * self.dim..][..self.dim];
            let dot: f64 = plane.iter().zip(x).map(|(p, v)| p * v).sum();
            pattern = (pattern << 1) | usize::from(dot >= 0.0);
        }
        pattern % self.bins
    }

    fn hashes(&self, x: &[f64]) -> Vec<usize> {
        (0..self.rows).map(|r| self.hash(r, x)).collect()
    }

    fn insert_hashed(&mut self, hashes: &[usize]) {
        for (r, &h) in hashes.iter().enumerate() {
            self.counts[r * self.bins + h] += 1;
        }
        self.inserted += 1;
    }

    fn score_hashed(&self, hashes: &[usize]) -> f64 {
        let total: u64 = hashes
            .iter()
            .enumerate()
            .map(|(r, &h)| self.counts[r * self.bins + h])
            .sum();
        total as f64 / self.rows as f64
    }

    pub fn insert(&mut self, x: &[f64]) {
        let h = self.hashes(x);
        self.insert_hashed(&h);
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.score_hashed(&self.hashes(x))
    }
}

/// How sketch scores turn into sampling weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityMode {
    /// Weight `1 / score`: sparse regions are favoured.
    #[default]
    Inverse,
    /// Weight `score`.
    Proportional,
}

impl DensityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityMode::Inverse => "inverse",
            DensityMode::Proportional => "proportional",
        }
    }
}

impl FromStr for DensityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(DensityMode::Inverse),
            "proportional" => Ok(DensityMode::Proportional),
            other => Err(Error::invalid(format!(
                "unknown density mode {other:?} (expected inverse or proportional)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityParams {
    pub rows: usize,
    pub bins: usize,
    pub seed: u64,
    pub mode: DensityMode,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            rows: 50,
            bins: 1024,
            seed: 0,
            mode: DensityMode::Inverse,
        }
    }
}

/// Inverse propensity sampling on sketched sentence-embedding densities.
///
/// The hash functions and the sampling keys use independent streams derived
/// from `params.seed`.
pub fn density_sampling(dataset: &Dataset, n: usize, params: &DensityParams) -> Result<SelectionResult> {
    check_budget(dataset, n)?;
    let start = Instant::now();
    let dim = dataset.dim();
    let embeddings = sentence_embeddings(dataset);
    let mut sketch = RaceSketch::new(params.rows, params.bins, dim, derive_seed(params.seed, 1))?;
    let hashes: Vec<Vec<usize>> = embeddings
        .par_chunks_exact(dim)
        .map(|x| sketch.hashes(x))
        .collect();
    for h in &hashes {
        sketch.insert_hashed(h);
    }
    let weights: Vec<f64> = hashes
        .iter()
        .map(|h| {
            let score = sketch.score_hashed(h);
            match params.mode {
                DensityMode::Inverse => 1.0 / score,
                DensityMode::Proportional => score,
            }
        })
        .collect();
    let mut rng = stream(derive_seed(params.seed, 2));
    let chosen = weighted_sample_without_replacement(&weights, n, &mut rng)?;
    Ok(SelectionResult {
        method: "density".into(),
        seed: params.seed,
        n,
        sigma0: None,
        batch_size: None,
        chosen,
        round_gains: Vec::new(),
        gain_evaluations: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        weights: None,
    })
}
