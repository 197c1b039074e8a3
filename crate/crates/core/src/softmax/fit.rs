use std::collections::HashMap;

use super::{softmax_in_place, ParamMatrix, SubsetData};
use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const MAX_STEP: f64 = 1e8;

/// How the trial step of each backtracking line search is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Start from twice the previously accepted step.
    Backtracking,
    /// Start from the Barzilai–Borwein step `sᵀs / sᵀy`.
    BarzilaiBorwein,
}

impl StepRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepRule::Backtracking => "backtracking",
            StepRule::BarzilaiBorwein => "barzilai-borwein",
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "barzilai-borwein" | "bb" => Ok(StepRule::BarzilaiBorwein),
            "backtracking" => Ok(StepRule::Backtracking),
            other => Err(Error::invalid(format!(
                "unknown step rule {other:?} (expected barzilai-borwein or backtracking)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient's infinity norm is at most this.
    pub grad_tol: f64,
    pub step_rule: StepRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            step_rule: StepRule::BarzilaiBorwein,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// The line search could not decrease the objective any further.
    Stalled,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIterations => "max-iters",
            FitStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ParamMatrix,
    pub status: FitStatus,
    pub iterations: usize,
    pub nll: f64,
    pub grad_inf_norm: f64,
}

/// Sufficient statistics: positions sharing a bit-identical embedding are
/// merged into one row with per-token counts.
struct Compressed {
    dim: usize,
    vocab_size: usize,
    scale: f64,
    xs: Vec<f64>,
    counts: Vec<f64>,
    totals: Vec<f64>,
}

impl Compressed {
    fn new(data: &SubsetData<'_>) -> Self {
        let (dim, vocab_size) = (data.dim(), data.vocab_size());
        let mut rows: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut xs = Vec::new();
        let mut counts = Vec::new();
        let mut totals = Vec::new();
        for s in data.sentences() {
            for (y, x) in s.positions() {
                let key: Vec<u32> = x.iter().map(|v| v.to_bits()).collect();
                let row = *rows.entry(key).or_insert_with(|| {
                    xs.extend(x.iter().map(|&v| f64::from(v)));
                    counts.extend(std::iter::repeat_n(0.0, vocab_size));
                    totals.push(0.0);
                    totals.len() - 1
                });
                counts[row * vocab_size + y as usize] += 1.0;
                totals[row] += 1.0;
            }
        }
        Self {
            dim,
            vocab_size,
            scale: 1.0 / data.len() as f64,
            xs,
            counts,
            totals,
        }
    }

    fn value(&self, theta: &ParamMatrix) -> f64 {
        let mut z = vec![0.0; self.vocab_size];
        let mut total = 0.0;
        for (r, x) in self.xs.chunks_exact(self.dim).enumerate() {
            theta.logits_into(x, &mut z);
            let counts = &self.counts[r * self.vocab_size..(r + 1) * self.vocab_size];
            let observed: f64 = counts.iter().zip(&z).map(|(c, v)| c * v).sum();
            total += self.totals[r] * softmax_in_place(&mut z) - observed;
        }
        total * self.scale
    }

    fn value_and_gradient(&self, theta: &ParamMatrix, grad: &mut ParamMatrix) -> f64 {
        let d = self.dim;
        grad.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
        let mut z = vec![0.0; self.vocab_size];
        let mut total = 0.0;
        for (r, x) in self.xs.chunks_exact(d).enumerate() {
            theta.logits_into(x, &mut z);
            let counts = &self.counts[r * self.vocab_size..(r + 1) * self.vocab_size];
            let observed: f64 = counts.iter().zip(&z).map(|(c, v)| c * v).sum();
            total += self.totals[r] * softmax_in_place(&mut z) - observed;
            for ((col, p), c) in grad.as_mut_slice().chunks_exact_mut(d).zip(&z).zip(counts) {
                let w = self.totals[r] * p - c;
                if w != 0.0 {
                    for (g, v) in col.iter_mut().zip(x) {
                        *g += w * v;
                    }
                }
            }
        }
        grad.as_mut_slice().iter_mut().for_each(|g| *g *= self.scale);
        total * self.scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood estimate of `Θ` on a subset by projected gradient
/// descent with a halving Armijo line search.
///
/// Every iterate lies in the zero-sum gauge. Hitting `max_iters` is not an
/// error; the returned status says how the run ended.
pub fn fit_mle(data: &SubsetData<'_>, init: &ParamMatrix, opts: &FitOptions) -> Result<FitResult> {
    data.check(init)?;
    let problem = Compressed::new(data);
    let mut theta = init.clone();
    theta.project_zero_sum();
    let mut grad = ParamMatrix::zeros(theta.dim(), theta.vocab_size());
    let mut f = problem.value_and_gradient(&theta, &mut grad);
    grad.project_zero_sum();
    if !f.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "negative log-likelihood is {f} at the initial point"
        )));
    }

    let mut step = 1.0;
    let mut previous: Option<(ParamMatrix, ParamMatrix)> = None;
    let mut candidate = theta.clone();
    let mut next_grad = grad.clone();
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if grad.max_abs() <= opts.grad_tol {
            status = FitStatus::Converged;
            break;
        }
        let mut t = match (opts.step_rule, &previous) {
            (StepRule::BarzilaiBorwein, Some((theta_prev, grad_prev))) => {
                let s: Vec<f64> = theta.as_slice().iter().zip(theta_prev.as_slice()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = grad.as_slice().iter().zip(grad_prev.as_slice()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 0.0 {
                    dot(&s, &s) / sy
                } else {
                    2.0 * step
                }
            }
            _ => 2.0 * step,
        }
        .min(MAX_STEP);
        let gg = dot(grad.as_slice(), grad.as_slice());

        let accepted = loop {
            for ((c, &v), &g) in candidate
                .as_mut_slice()
                .iter_mut()
                .zip(theta.as_slice())
                .zip(grad.as_slice())
            {
                *c = v - t * g;
            }
            candidate.project_zero_sum();
            let fc = problem.value(&candidate);
            if fc.is_finite() && fc <= f - ARMIJO * t * gg {
                break Some(fc);
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(_) = accepted else {
            status = FitStatus::Stalled;
            break;
        };

        let f_new = problem.value_and_gradient(&candidate, &mut next_grad);
        next_grad.project_zero_sum();
        if !f_new.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "negative log-likelihood became {f_new} at iteration {iterations}"
            )));
        }
        previous = Some((theta.clone(), grad.clone()));
        std::mem::swap(&mut theta, &mut candidate);
        std::mem::swap(&mut grad, &mut next_grad);
        f = f_new;
        step = t;
        iterations += 1;
    }
    if status == FitStatus::MaxIterations && grad.max_abs() <= opts.grad_tol {
        status = FitStatus::Converged;
    }

    Ok(FitResult {
        grad_inf_norm: grad.max_abs(),
        theta,
        status,
        iterations,
        nll: f,
    })
}
