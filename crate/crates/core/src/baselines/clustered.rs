use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::Distribution;

use super::sentence_embeddings;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Rng};
use crate::selection::{check_budget, SelectionResult};

/// Lloyd's k-means output on row-major points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub dim: usize,
    /// Row-major `k×d`.
    pub centers: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn center(&self, cluster: usize) -> &[f64] {
        &self.centers[cluster * self.dim..(cluster + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Greedy k-means++: each new center is the best of `2 + ⌊ln k⌋` candidates
/// drawn proportionally to squared distance, judged by the resulting
/// potential.
fn seed_centers(points: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let count = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers = row(rng.random_range(0..count)).to_vec();
    let mut dist: Vec<f64> = (0..count).map(|i| sq_dist(row(i), &centers)).collect();
    let trials = 2 + (k as f64).ln().floor() as usize;
    while centers.len() < k * dim {
        let total: f64 = dist.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                WeightedIndex::new(&dist).expect("positive total").sample(rng)
            } else {
                rng.random_range(0..count)
            };
            let updated: Vec<f64> = (0..count)
                .map(|i| dist[i].min(sq_dist(row(i), row(pick))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least two trials");
        centers.extend_from_slice(row(pick));
        dist = updated;
    }
    centers
}

/// Lloyd iterations from greedy k-means++ seeds.
///
/// Stops when the centers move by at most `tol` relative to their norm, or
/// after `max_iters` updates; the returned assignments are always nearest
/// centers of the returned centers. Empty clusters keep their center.
pub fn kmeans(
    points: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::invalid("points do not form rows of the given dimension"));
    }
    let count = points.len() / dim;
    if k == 0 || k > count {
        return Err(Error::invalid(format!("cannot form {k} clusters from {count} points")));
    }
    let mut rng = stream(seed);
    let mut centers = seed_centers(points, dim, k, &mut rng);
    let assign = |centers: &[f64]| -> Vec<usize> {
        points
            .chunks_exact(dim)
            .map(|x| nearest(x, centers, dim).0)
            .collect()
    };
    let mut assignments = assign(&centers);
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![0.0; k * dim];
        let mut sizes = vec![0usize; k];
        for (x, &c) in points.chunks_exact(dim).zip(&assignments) {
            sizes[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut shift = 0.0;
        let mut norm = 0.0;
        for c in 0..k {
            let center = &mut centers[c * dim..(c + 1) * dim];
            if sizes[c] > 0 {
                for (v, s) in center.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    let new = s / sizes[c] as f64;
                    shift += (new - *v) * (new - *v);
                    *v = new;
                }
            }
            norm += center.iter().map(|v| v * v).sum::<f64>();
        }
        assignments = assign(&centers);
        if shift.sqrt() <= tol * norm.sqrt().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(ClusterModel {
        dim,
        centers,
        assignments,
        iterations,
    })
}

/// Sampling probabilities `p_e = (ℓ̂(e) + Λ_c·‖e − c‖^z) / Σ_x (ℓ̂(x) + Λ_c·‖x − c‖^z)`.
///
/// `lambda` and `loss` are per cluster; `ℓ̂(e)` is the loss of `e`'s cluster.
pub fn sensitivity_probabilities(
    points: &[f64],
    model: &ClusterModel,
    lambda: &[f64],
    loss: &[f64],
    z: f64,
) -> Result<Vec<f64>> {
    let k = model.k();
    if lambda.len() != k || loss.len() != k {
        return Err(Error::invalid(format!(
            "{} cluster weights and {} losses for {k} clusters",
            lambda.len(),
            loss.len()
        )));
    }
    if lambda.iter().chain(loss).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("cluster weights and losses must be finite and non-negative"));
    }
    let raw: Vec<f64> = points
        .chunks_exact(model.dim)
        .zip(&model.assignments)
        .map(|(x, &c)| loss[c] + lambda[c] * sq_dist(x, model.center(c)).sqrt().powf(z))
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::InvalidState(
            "every sensitivity score is zero; nothing to sample".into(),
        ));
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredParams {
    pub k: usize,
    pub z: f64,
    /// Per-cluster weights; all ones when absent.
    pub lambda: Option<Vec<f64>>,
    /// Per-cluster proxy losses; all zeros when absent.
    pub loss_table: Option<Vec<f64>>,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ClusteredParams {
    fn default() -> Self {
        Self {
            k: 10,
            z: 2.0,
            lambda: None,
            loss_table: None,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Clustering-based sensitivity sampling on sentence embeddings.
///
/// Items are drawn independently with replacement from the sensitivity
/// distribution until `n` distinct sentences have appeared. With `s` total
/// draws, a sentence drawn `c` times gets importance weight `c / (s·p_e)`,
/// reported in `weights` alongside `chosen` (first-appearance order). If
/// fewer than `n` sentences have positive sensitivity, the rest of the
/// budget goes to zero-sensitivity sentences drawn uniformly, with weight 1.
pub fn clustered_sensitivity(
    dataset: &Dataset,
    n: usize,
    params: &ClusteredParams,
) -> Result<SelectionResult> {
    check_budget(dataset, n)?;
    let start = Instant::now();
    let dim = dataset.dim();
    let k = params.k.min(dataset.len());
    let points = sentence_embeddings(dataset);
    let model = kmeans(&points, dim, k, derive_seed(params.seed, 1), params.max_iters, params.tol)?;
    let lambda = params.lambda.clone().unwrap_or_else(|| vec![1.0; k]);
    let loss = params.loss_table.clone().unwrap_or_else(|| vec![0.0; k]);
    let p = match sensitivity_probabilities(&points, &model, &lambda, &loss, params.z) {
        Ok(p) => p,
        // Every sentence sits on its center.
        Err(Error::InvalidState(_)) => vec![0.0; dataset.len()],
        Err(e) => return Err(e),
    };

    let support = p.iter().filter(|&&v| v > 0.0).count();
    let sampled = n.min(support);
    let mut rng = stream(derive_seed(params.seed, 2));
    let mut counts = vec![0u64; dataset.len()];
    let mut chosen = Vec::with_capacity(n);
    let mut draws = 0u64;
    let cap = 1_000_000u64.max(1000 * dataset.len() as u64);
    if sampled > 0 {
        let dist = WeightedIndex::new(&p).map_err(|e| Error::InvalidState(e.to_string()))?;
        while chosen.len() < sampled {
            if draws == cap {
                return Err(Error::InvalidState(format!(
                    "{draws} draws produced only {} distinct sentences",
                    chosen.len()
                )));
            }
            let e = dist.sample(&mut rng);
            draws += 1;
            if counts[e] == 0 {
                chosen.push(e);
            }
            counts[e] += 1;
        }
    }
    let mut weights: Vec<f64> = chosen
        .iter()
        .map(|&e| counts[e] as f64 / (draws as f64 * p[e]))
        .collect();
    if sampled < n {
        // Zero sensitivity means the sentence coincides with its center, so
        // it stands for itself alone.
        let idle: Vec<usize> = (0..p.len()).filter(|&e| p[e] == 0.0).collect();
        for i in index::sample(&mut rng, idle.len(), n - sampled) {
            chosen.push(idle[i]);
            weights.push(1.0);
        }
    }
    Ok(SelectionResult {
        method: "clustered".into(),
        seed: params.seed,
        n,
        sigma0: None,
        batch_size: None,
        chosen,
        round_gains: Vec::new(),
        gain_evaluations: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        weights: Some(weights),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TokenizedSentence;
    use rand_distr::StandardNormal;

    #[test]
    fn recovers_planted_blobs() {
        let mut rng = stream(5);
        let mut points = Vec::new();
        for i in 0..400 {
            let mean = if i % 2 == 0 { [5.0, 5.0] } else { [-5.0, 0.0] };
            for m in mean {
                let e: f64 = StandardNormal.sample(&mut rng);
                points.push(m + 0.3 * e);
            }
        }
        let model = kmeans(&points, 2, 2, 1, 100, 1e-6).unwrap();
        let mut centers: Vec<&[f64]> = (0..2).map(|c| model.center(c)).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(sq_dist(centers[0], &[-5.0, 0.0]).sqrt() < 0.05, "{centers:?}");
        assert!(sq_dist(centers[1], &[5.0, 5.0]).sqrt() < 0.05, "{centers:?}");
        for (x, &c) in points.chunks_exact(2).zip(&model.assignments) {
            assert_eq!(nearest(x, &model.centers, 2).0, c);
        }
    }

    #[test]
    fn probabilities_normalize() {
        let mut rng = stream(8);
        for _ in 0..20 {
            let points: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
            let model = kmeans(&points, 3, 4, 2, 100, 1e-6).unwrap();
            let loss: Vec<f64> = (0..4).map(|c| c as f64 * 0.1).collect();
            let p = sensitivity_probabilities(&points, &model, &[1.0, 2.0, 0.5, 1.0], &loss, 2.0)
                .unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_points_are_uniform() {
        // Square corners around one center.
        let points = [1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let model = kmeans(&points, 2, 1, 0, 100, 1e-6).unwrap();
        let p = sensitivity_probabilities(&points, &model, &[1.0], &[0.0], 2.0).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_sensitivity_falls_back_to_uniform() {
        let s = (0..4).map(|_| TokenizedSentence::new(1, vec![0], vec![2.0]).unwrap()).collect();
        let ds = Dataset::new(1, 1, s).unwrap();
        let model = kmeans(&sentence_embeddings(&ds), 1, 1, 0, 100, 1e-6).unwrap();
        assert!(sensitivity_probabilities(&sentence_embeddings(&ds), &model, &[1.0], &[0.0], 2.0).is_err());
        let r = clustered_sensitivity(&ds, 2, &ClusteredParams::default()).unwrap();
        assert_eq!(r.chosen.len(), 2);
        assert_ne!(r.chosen[0], r.chosen[1]);
        assert_eq!(r.weights, Some(vec![1.0, 1.0]));
    }

    #[test]
    fn singleton_clusters_fill_the_budget() {
        // Two far groups plus one singleton cluster per isolated point.
        let xs = [0.0, 0.1, 0.2, 50.0, 100.0];
        let s = xs.iter().map(|&x| TokenizedSentence::new(1, vec![0], vec![x]).unwrap()).collect();
        let ds = Dataset::new(1, 1, s).unwrap();
        let params = ClusteredParams { k: 3, ..ClusteredParams::default() };
        let r = clustered_sensitivity(&ds, 5, &params).unwrap();
        let mut sorted = r.chosen.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn selection_is_distinct_and_weighted() {
        let s = (0..60)
            .map(|i| {
                let x = vec![(i as f32 * 0.37).sin(), (i as f32 * 1.3).cos()];
                TokenizedSentence::new(2, vec![0], x).unwrap()
            })
            .collect();
        let ds = Dataset::new(2, 1, s).unwrap();
        let params = ClusteredParams { k: 4, seed: 3, ..ClusteredParams::default() };
        let r = clustered_sensitivity(&ds, 20, &params).unwrap();
        let mut c = r.chosen.clone();
        c.sort();
        c.dedup();
        assert_eq!(c.len(), 20);
        let w = r.weights.as_ref().unwrap();
        assert_eq!(w.len(), 20);
        assert!(w.iter().all(|&v| v > 0.0 && v.is_finite()));
        assert_eq!(r, clustered_sensitivity(&ds, 20, &params).map(|mut x| {
            x.wall_ms = r.wall_ms;
            x
        }).unwrap());
    }
}
