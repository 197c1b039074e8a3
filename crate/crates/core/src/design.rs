//! The design matrix `V = σ0²·I + Σ x xᵀ` and sentence-level information gains.
//!
//! `V` is kept together with its lower Cholesky factor `C` (`V = C·Cᵀ`), so
//! the gain of adding the columns `X = [x_1 … x_M]` never needs `V⁻¹`:
//!
//! ```text
//! log det(V + X Xᵀ) − log det(V) = log det(I_M + Wᵀ W),   W = C⁻¹ X
//! ```
//!
//! which costs `M` triangular solves and one `M×M` Cholesky factorization.
//! Committing a sentence applies `M` positive rank-one updates to `C`.

use crate::error::{Error, Result};

/// A borrowed sentence: `M` embedding columns of length `dim`, stored
/// position-major (`values[j * dim..(j + 1) * dim]` is column `j`).
#[derive(Debug, Clone, Copy)]
pub struct GainQuery<'a, T = f64> {
    dim: usize,
    values: &'a [T],
}

impl<'a, T: Copy + Into<f64>> GainQuery<'a, T> {
    pub fn new(dim: usize, values: &'a [T]) -> Self {
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of embedding columns `M`.
    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn columns(&self) -> impl Iterator<Item = &'a [T]> + 'a {
        let dim = self.dim.max(1);
        self.values.chunks_exact(dim)
    }
}

/// Symmetric positive-definite accumulator with a maintained Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    dim: usize,
    sigma0: f64,
    /// Row-major, full (both triangles).
    values: Vec<f64>,
    /// Row-major lower-triangular factor; the strict upper triangle stays zero.
    chol: Vec<f64>,
    logdet: f64,
}

impl DesignMatrix {
    /// `V = sigma0²·I_dim`.
    pub fn new(dim: usize, sigma0: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("design dimension must be positive"));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma0 must be positive and finite, got {sigma0}"
            )));
        }
        let mut values = vec![0.0; dim * dim];
        let mut chol = vec![0.0; dim * dim];
        for k in 0..dim {
            values[k * dim + k] = sigma0 * sigma0;
            chol[k * dim + k] = sigma0;
        }
        Ok(Self {
            dim,
            sigma0,
            values,
            chol,
            logdet: 2.0 * dim as f64 * sigma0.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// `log det V`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `V`, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lower Cholesky factor of `V`, row-major.
    pub fn cholesky(&self) -> &[f64] {
        &self.chol
    }

    /// `log det(V + X Xᵀ) − log det(V)`; never negative.
    pub fn gain<T: Copy + Into<f64>>(&self, query: &GainQuery<'_, T>) -> Result<f64> {
        self.check(query)?;
        let m = query.len();
        if m == 0 {
            return Ok(0.0);
        }
        let w = self.whiten(query);
        let d = self.dim;
        // Capacitance matrix I + WᵀW, lower triangle only.
        let mut cap = vec![0.0; m * m];
        for a in 0..m {
            let wa = &w[a * d..(a + 1) * d];
            for b in 0..=a {
                let wb = &w[b * d..(b + 1) * d];
                let dot: f64 = wa.iter().zip(wb).map(|(p, q)| p * q).sum();
                cap[a * m + b] = dot + if a == b { 1.0 } else { 0.0 };
            }
        }
        let logdet = cholesky_logdet_in_place(&mut cap, m).ok_or_else(|| {
            Error::NumericalFailure("capacitance matrix lost positive definiteness".into())
        })?;
        Ok(logdet.max(0.0))
    }

    /// `Σ_j x_jᵀ V⁻¹ x_j`.
    pub fn whitened_curvature<T: Copy + Into<f64>>(&self, query: &GainQuery<'_, T>) -> Result<f64> {
        self.check(query)?;
        Ok(self.whiten(query).iter().map(|v| v * v).sum())
    }

    /// `V ← V + X Xᵀ`, updating the factor one column at a time.
    pub fn commit<T: Copy + Into<f64>>(&mut self, query: &GainQuery<'_, T>) -> Result<()> {
        self.check(query)?;
        let d = self.dim;
        let mut v = vec![0.0; d];
        for col in query.columns() {
            for (dst, &src) in v.iter_mut().zip(col) {
                *dst = src.into();
            }
            for r in 0..d {
                for c in 0..d {
                    self.values[r * d + c] += v[r] * v[c];
                }
            }
            cholesky_rank_one_update(&mut self.chol, d, &mut v);
        }
        self.logdet = 2.0 * (0..d).map(|k| self.chol[k * d + k].ln()).sum::<f64>();
        Ok(())
    }

    fn check<T>(&self, query: &GainQuery<'_, T>) -> Result<()> {
        if query.dim != self.dim || !query.values.len().is_multiple_of(self.dim) {
            return Err(Error::invalid(format!(
                "query of dimension {} ({} values) against a dimension-{} design",
                query.dim,
                query.values.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Solves `C w_j = x_j` for every column; returns `W` column-major.
    fn whiten<T: Copy + Into<f64>>(&self, query: &GainQuery<'_, T>) -> Vec<f64> {
        let d = self.dim;
        let mut w = vec![0.0; query.len() * d];
        for (col, out) in query.columns().zip(w.chunks_exact_mut(d)) {
            for i in 0..d {
                let row = &self.chol[i * d..i * d + i];
                let partial: f64 = row.iter().zip(&out[..i]).map(|(l, x)| l * x).sum();
                out[i] = (col[i].into() - partial) / self.chol[i * d + i];
            }
        }
        w
    }
}

/// Positive rank-one update `C Cᵀ + v vᵀ` of a row-major lower factor.
/// `v` is consumed as workspace.
fn cholesky_rank_one_update(chol: &mut [f64], d: usize, v: &mut [f64]) {
    for k in 0..d {
        let lkk = chol[k * d + k];
        let vk = v[k];
        if vk == 0.0 {
            continue;
        }
        let r = lkk.hypot(vk);
        let c = r / lkk;
        let s = vk / lkk;
        chol[k * d + k] = r;
        for i in k + 1..d {
            let lik = (chol[i * d + k] + s * v[i]) / c;
            chol[i * d + k] = lik;
            v[i] = c * v[i] - s * lik;
        }
    }
}

/// In-place Cholesky of the lower triangle of an `m×m` row-major matrix.
/// Returns `log det`, or `None` if a pivot is not positive.
fn cholesky_logdet_in_place(a: &mut [f64], m: usize) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..m {
        let mut diag = a[j * m + j];
        for k in 0..j {
            diag -= a[j * m + k] * a[j * m + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * m + j] = ljj;
        logdet += 2.0 * ljj.ln();
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / ljj;
        }
    }
    Some(logdet)
}
