//! Multinomial logistic regression over position embeddings.
//!
//! The parameter matrix `Θ` is `d×L`; column `ℓ` scores token `ℓ` through
//! `θ_ℓᵀx`. Adding the same vector to every column leaves every probability
//! unchanged, so fitted parameters are kept in the zero-sum gauge `Θ·1 = 0`.

mod fit;
mod io;
mod curvature;

pub use fit::{fit_mle, FitOptions, FitResult, FitStatus, StepRule};
pub use io::{read_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use curvature::{curvature_diagnostic, restricted_min_eigenvalue, CurvatureReport};

use nalgebra::DMatrix;

use crate::datagen::{Dataset, TokenizedSentence};
use crate::error::{Error, Result};

/// Largest `d·L` for which the dense Hessian is formed.
pub const MAX_DENSE_PARAMS: usize = 64;

/// `d×L` parameter matrix, column-major (column `ℓ` contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    dim: usize,
    vocab_size: usize,
    data: Vec<f64>,
}

impl ParamMatrix {
    pub fn zeros(dim: usize, vocab_size: usize) -> Self {
        Self {
            dim,
            vocab_size,
            data: vec![0.0; dim * vocab_size],
        }
    }

    pub fn from_column_major(dim: usize, vocab_size: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || vocab_size == 0 {
            return Err(Error::invalid("parameter matrix dimensions must be positive"));
        }
        if data.len() != dim * vocab_size {
            return Err(Error::invalid(format!(
                "{dim}x{vocab_size} parameters need {} values, got {}",
                dim * vocab_size,
                data.len()
            )));
        }
        Ok(Self {
            dim,
            vocab_size,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Column-major storage; also the vectorization used by the Hessian.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, token: usize) -> f64 {
        self.data[token * self.dim + row]
    }

    pub fn column(&self, token: usize) -> &[f64] {
        &self.data[token * self.dim..(token + 1) * self.dim]
    }

    /// `Θᵀx`.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        self.logits_into(x, &mut out);
        out
    }

    pub(crate) fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (z, col) in out.iter_mut().zip(self.data.chunks_exact(self.dim)) {
            *z = col.iter().zip(x).map(|(t, v)| t * v).sum();
        }
    }

    /// `Θ·1`, the per-row sum across columns.
    pub fn column_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        for col in self.data.chunks_exact(self.dim) {
            for (s, v) in sum.iter_mut().zip(col) {
                *s += v;
            }
        }
        sum
    }

    /// Subtracts the mean column from every column.
    pub fn project_zero_sum(&mut self) {
        let mean: Vec<f64> = self
            .column_sum()
            .into_iter()
            .map(|s| s / self.vocab_size as f64)
            .collect();
        for col in self.data.chunks_exact_mut(self.dim) {
            for (v, m) in col.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_shape(&self, dim: usize, vocab_size: usize) -> Result<()> {
        if self.dim != dim || self.vocab_size != vocab_size {
            return Err(Error::invalid(format!(
                "parameters are {}x{}, data needs {dim}x{vocab_size}",
                self.dim, self.vocab_size
            )));
        }
        Ok(())
    }
}

/// In-place softmax with max subtraction; returns `log Σ exp(z)`.
pub(crate) fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
    max + total.ln()
}

/// `p(ℓ | x; Θ)` for every token `ℓ`.
pub fn softmax_prob(theta: &ParamMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != theta.dim {
        return Err(Error::invalid(format!(
            "embedding of length {} for {}-dimensional parameters",
            x.len(),
            theta.dim
        )));
    }
    if x.iter().chain(&theta.data).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to softmax"));
    }
    let mut z = theta.logits(x);
    softmax_in_place(&mut z);
    Ok(z)
}

/// The sentences of a selected subset `S`.
#[derive(Debug, Clone)]
pub struct SubsetData<'a> {
    dim: usize,
    vocab_size: usize,
    sentences: Vec<&'a TokenizedSentence>,
}

impl<'a> SubsetData<'a> {
    /// Sentences are kept in index order, so the same subset always yields
    /// the same floating-point objective whatever order it was chosen in.
    pub fn new(dataset: &'a Dataset, indices: &[usize]) -> Result<Self> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let sentences = sorted
            .iter()
            .map(|&i| {
                dataset.sentences().get(i).ok_or_else(|| {
                    Error::invalid(format!(
                        "index {i} out of range for {} sentences",
                        dataset.len()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dim: dataset.dim(),
            vocab_size: dataset.vocab_size(),
            sentences,
        })
    }

    pub fn all(dataset: &'a Dataset) -> Self {
        Self {
            dim: dataset.dim(),
            vocab_size: dataset.vocab_size(),
            sentences: dataset.sentences().iter().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// `n = |S|`.
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[&'a TokenizedSentence] {
        &self.sentences
    }

    /// Every `(y, x)` pair, with `x` widened to 64-bit.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, Vec<f64>)> + '_ {
        self.sentences.iter().flat_map(|s| {
            s.positions()
                .map(|(y, x)| (y as usize, x.iter().map(|&v| f64::from(v)).collect()))
        })
    }

    fn check(&self, theta: &ParamMatrix) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("the selected subset is empty"));
        }
        theta.check_shape(self.dim, self.vocab_size)
    }
}

/// `−(1/n) Σ_{i∈S} Σ_j log p(y_ij | x_ij; Θ)`.
pub fn subset_nll(theta: &ParamMatrix, data: &SubsetData<'_>) -> Result<f64> {
    data.check(theta)?;
    let mut z = vec![0.0; theta.vocab_size];
    let mut total = 0.0;
    for (y, x) in data.pairs() {
        theta.logits_into(&x, &mut z);
        let zy = z[y];
        total += softmax_in_place(&mut z) - zy;
    }
    Ok(total / data.len() as f64)
}

/// Gradient of [`subset_nll`]: column `ℓ` is
/// `(1/n) Σ (p(ℓ|x) − 1[y = ℓ]) x`.
pub fn nll_gradient(theta: &ParamMatrix, data: &SubsetData<'_>) -> Result<ParamMatrix> {
    data.check(theta)?;
    let d = theta.dim;
    let mut grad = ParamMatrix::zeros(d, theta.vocab_size);
    let mut p = vec![0.0; theta.vocab_size];
    for (y, x) in data.pairs() {
        theta.logits_into(&x, &mut p);
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (col, &r) in grad.data.chunks_exact_mut(d).zip(&p) {
            for (g, v) in col.iter_mut().zip(&x) {
                *g += r * v;
            }
        }
    }
    let scale = 1.0 / data.len() as f64;
    grad.data.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Dense `(dL)×(dL)` Hessian, `(1/n) Σ (diag(p) − ppᵀ) ⊗ xxᵀ`.
///
/// Rows and columns are indexed `ℓ·d + a` (token-major, feature-minor),
/// matching the column-major layout of [`ParamMatrix`].
pub fn nll_hessian_dense(theta: &ParamMatrix, data: &SubsetData<'_>) -> Result<DMatrix<f64>> {
    data.check(theta)?;
    let (d, l) = (theta.dim, theta.vocab_size);
    if d * l > MAX_DENSE_PARAMS {
        return Err(Error::UnsupportedSize(format!(
            "dense Hessian needs d·L <= {MAX_DENSE_PARAMS}, got {}",
            d * l
        )));
    }
    let mut h = DMatrix::zeros(d * l, d * l);
    let mut p = vec![0.0; l];
    for (_, x) in data.pairs() {
        theta.logits_into(&x, &mut p);
        softmax_in_place(&mut p);
        for t in 0..l {
            for u in 0..l {
                let w = if t == u { p[t] - p[t] * p[u] } else { -p[t] * p[u] };
                for a in 0..d {
                    for b in 0..d {
                        h[(t * d + a, u * d + b)] += w * x[a] * x[b];
                    }
                }
            }
        }
    }
    Ok(h / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, d: usize, l: usize) -> ParamMatrix {
        ParamMatrix::from_column_major(d, l, (0..d * l).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_data(rng: &mut ChaCha8Rng, d: usize, l: usize, n: usize) -> Dataset {
        let sentences = (0..n)
            .map(|_| {
                let m = rng.random_range(1..5);
                let pos: Vec<(u32, Vec<f32>)> = (0..m)
                    .map(|_| {
                        (
                            rng.random_range(0..l as u32),
                            (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                        )
                    })
                    .collect();
                TokenizedSentence::from_positions(d, &pos).unwrap()
            })
            .collect();
        Dataset::new(d, l, sentences).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = softmax_prob(&ParamMatrix::zeros(3, 4), &[1.0, -2.0, 0.5]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn binary_reduces_to_sigmoid() {
        let w = [0.3, -1.2];
        let theta =
            ParamMatrix::from_column_major(2, 2, vec![w[0] / 2.0, w[1] / 2.0, -w[0] / 2.0, -w[1] / 2.0])
                .unwrap();
        let x = [0.7, 0.4];
        let p = softmax_prob(&theta, &x).unwrap();
        let wx = w[0] * x[0] + w[1] * x[1];
        assert!((p[0] - 1.0 / (1.0 + (-wx).exp())).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_formula_and_survives_large_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = random_theta(&mut rng, 3, 5);
        let x = [0.2, -0.9, 0.4];
        let z = theta.logits(&x);
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let p = softmax_prob(&theta, &x).unwrap();
        for (pi, zi) in p.iter().zip(&z) {
            assert!((pi - zi.exp() / denom).abs() < 1e-15);
        }
        let big = ParamMatrix::from_column_major(1, 2, vec![1000.0, 0.0]).unwrap();
        let p = softmax_prob(&big, &[1.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let theta = ParamMatrix::zeros(2, 2);
        assert!(softmax_prob(&theta, &[f64::NAN, 0.0]).is_err());
        assert!(softmax_prob(&theta, &[0.0]).is_err());
    }

    #[test]
    fn nll_at_zero_is_log_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ds = random_data(&mut rng, 3, 6, 7);
        let data = SubsetData::all(&ds);
        let nll = subset_nll(&ParamMatrix::zeros(3, 6), &data).unwrap();
        let expected = ds.total_positions() as f64 / 7.0 * 6f64.ln();
        assert!((nll - expected).abs() < 1e-12);
    }

    #[test]
    fn single_pair_nll_is_neg_log_prob() {
        let s = TokenizedSentence::from_positions(2, &[(1, vec![0.5, -0.25])]).unwrap();
        let ds = Dataset::new(2, 3, vec![s]).unwrap();
        let theta = ParamMatrix::from_column_major(2, 3, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let q = softmax_prob(&theta, &[0.5, -0.25]).unwrap()[1];
        let nll = subset_nll(&theta, &SubsetData::all(&ds)).unwrap();
        assert!((nll + q.ln()).abs() < 1e-14);
    }

    #[test]
    fn nll_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = random_data(&mut rng, 3, 4, 9);
        let theta = random_theta(&mut rng, 3, 4);
        let idx = [0, 2, 5, 8];
        let mut total = 0.0;
        for &i in &idx {
            for (y, x) in ds.sentences()[i].positions() {
                let z: Vec<f64> = (0..4)
                    .map(|l| (0..3).map(|a| theta.get(a, l) * f64::from(x[a])).sum())
                    .collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                total -= (z[y as usize].exp() / denom).ln();
            }
        }
        let data = SubsetData::new(&ds, &idx).unwrap();
        assert!((subset_nll(&theta, &data).unwrap() - total / 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_subset_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = random_data(&mut rng, 2, 3, 2);
        let data = SubsetData::new(&ds, &[]).unwrap();
        let theta = ParamMatrix::zeros(2, 3);
        assert!(matches!(subset_nll(&theta, &data), Err(Error::InvalidArgument(_))));
        assert!(nll_gradient(&theta, &data).is_err());
        assert!(SubsetData::new(&ds, &[5]).is_err());
    }

    #[test]
    fn single_pair_gradient_at_uniform() {
        let x = [0.5f32, -2.0];
        let s = TokenizedSentence::from_positions(2, &[(0, x.to_vec())]).unwrap();
        let ds = Dataset::new(2, 2, vec![s]).unwrap();
        let g = nll_gradient(&ParamMatrix::zeros(2, 2), &SubsetData::all(&ds)).unwrap();
        assert_eq!(g.column(0), &[-0.25, 1.0]);
        assert_eq!(g.column(1), &[0.25, -1.0]);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = random_data(&mut rng, 4, 5, 10);
        let theta = random_theta(&mut rng, 4, 5);
        let g = nll_gradient(&theta, &SubsetData::all(&ds)).unwrap();
        assert!(g.column_sum().iter().all(|s| s.abs() < 1e-14));
    }

    #[test]
    fn hessian_at_uniform_single_pair() {
        let x = [0.6f32, -0.8];
        let s = TokenizedSentence::from_positions(2, &[(2, x.to_vec())]).unwrap();
        let ds = Dataset::new(2, 3, vec![s]).unwrap();
        let h = nll_hessian_dense(&ParamMatrix::zeros(2, 3), &SubsetData::all(&ds)).unwrap();
        let l = 3.0;
        for t in 0..3 {
            for u in 0..3 {
                let w = if t == u { 1.0 / l } else { 0.0 } - 1.0 / (l * l);
                for a in 0..2 {
                    for b in 0..2 {
                        let expected = w * f64::from(x[a]) * f64::from(x[b]);
                        assert!((h[(t * 2 + a, u * 2 + b)] - expected).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_annihilates_constant_token_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ds = random_data(&mut rng, 3, 4, 6);
        let theta = random_theta(&mut rng, 3, 4);
        let h = nll_hessian_dense(&theta, &SubsetData::all(&ds)).unwrap();
        assert!((&h - h.transpose()).abs().max() < 1e-14);
        let v = [0.3, -1.1, 0.7];
        let ones_kron_v = DMatrix::from_fn(12, 1, |r, _| v[r % 3]);
        assert!((&h * ones_kron_v).abs().max() < 1e-12);
        let min_eig = h.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-10);
    }

    #[test]
    fn hessian_size_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = random_data(&mut rng, 9, 8, 2);
        let err = nll_hessian_dense(&ParamMatrix::zeros(9, 8), &SubsetData::all(&ds)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedSize(_)));
    }

    #[test]
    fn zero_sum_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut theta = random_theta(&mut rng, 3, 4);
        let x = [0.1, 0.2, -0.4];
        let before = softmax_prob(&theta, &x).unwrap();
        theta.project_zero_sum();
        assert!(theta.column_sum().iter().all(|s| s.abs() < 1e-15));
        let after = softmax_prob(&theta, &x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
