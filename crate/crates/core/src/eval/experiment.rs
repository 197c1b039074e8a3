use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::{sentence_errors, ExperimentConfig, Method};
use crate::datagen::{read_dataset, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::softmax::{fit_mle, read_params, ParamMatrix, SubsetData};

pub const RECORDS_HEADER: &str = "method,n,seed,e_max,e_mean,fit_status,wall_ms";
pub const AGGREGATE_HEADER: &str = "method,n,e_max_mean,e_max_se,e_mean_mean,e_mean_se";
pub const FAILURES_HEADER: &str = "method,n,failed";

/// Where the corpus and true parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A fresh problem generated from each run seed.
    Synthetic(SyntheticConfig),
    /// One fixed corpus; run seeds only drive the randomized selectors.
    Files { dataset: PathBuf, theta_star: PathBuf },
}

/// One `(method, n, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    /// `NaN` when the cell failed.
    pub e_max: f64,
    pub e_mean: f64,
    /// A fit status, or `select-failed` / `fit-failed`.
    pub fit_status: String,
    /// Selection time.
    pub wall_ms: f64,
}

impl ExperimentRecord {
    pub fn failed(&self) -> bool {
        !(self.e_max.is_finite() && self.e_mean.is_finite())
    }
}

/// Mean and standard error over the successful seeds of one `(method, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub n: usize,
    pub e_max_mean: f64,
    pub e_max_se: f64,
    pub e_mean_mean: f64,
    pub e_mean_se: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by method name, then `n`, then seed.
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentOutput {
    pub fn aggregate(&self, method: Method, n: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method && a.n == n)
    }

    pub fn records_csv(&self) -> String {
        let mut out = format!("{RECORDS_HEADER}\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.method, r.n, r.seed, r.e_max, r.e_mean, r.fit_status, r.wall_ms
            )
            .unwrap();
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_HEADER}\n");
        for a in &self.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.method, a.n, a.e_max_mean, a.e_max_se, a.e_mean_mean, a.e_mean_se
            )
            .unwrap();
        }
        out
    }

    /// Failed-cell counts per `(method, n)`, including zeros.
    pub fn failures_csv(&self) -> String {
        let mut out = format!("{FAILURES_HEADER}\n");
        for a in &self.aggregates {
            writeln!(out, "{},{},{}", a.method, a.n, a.failed).unwrap();
        }
        out
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.as_str(), r.n)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&&ExperimentRecord> = rows.iter().filter(|r| !r.failed()).collect();
            let maxes: Vec<f64> = ok.iter().map(|r| r.e_max).collect();
            let means: Vec<f64> = ok.iter().map(|r| r.e_mean).collect();
            let (e_max_mean, e_max_se) = mean_se(&maxes);
            let (e_mean_mean, e_mean_se) = mean_se(&means);
            AggregateRow {
                method: rows[0].method,
                n: rows[0].n,
                e_max_mean,
                e_max_se,
                e_mean_mean,
                e_mean_se,
                succeeded: ok.len(),
                failed: rows.len() - ok.len(),
            }
        })
        .collect()
}

fn run_cell(
    config: &ExperimentConfig,
    method: Method,
    n: usize,
    seed: u64,
    dataset: &Dataset,
    theta_star: &ParamMatrix,
) -> Result<ExperimentRecord> {
    let mut record = ExperimentRecord {
        method,
        n,
        seed,
        e_max: f64::NAN,
        e_mean: f64::NAN,
        fit_status: "select-failed".into(),
        wall_ms: f64::NAN,
    };
    let start = Instant::now();
    let Ok(selection) = method.select(dataset, n, seed, &config.settings) else {
        return Ok(record);
    };
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    record.fit_status = "fit-failed".into();
    let subset = SubsetData::new(dataset, &selection.chosen)?;
    let init = ParamMatrix::zeros(dataset.dim(), dataset.vocab_size());
    let Ok(fit) = fit_mle(&subset, &init, &config.fit) else {
        return Ok(record);
    };
    let errors = sentence_errors(theta_star, &fit.theta, dataset)?;
    record.e_max = errors.iter().copied().fold(0.0, f64::max);
    record.e_mean = errors.iter().sum::<f64>() / errors.len() as f64;
    record.fit_status = fit.status.as_str().into();
    Ok(record)
}

fn run_all(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|k| config.seed + k).collect();
    let problems: Vec<(Dataset, ParamMatrix)> = match &config.source {
        DataSource::Synthetic(synth) => seeds
            .par_iter()
            .map(|&s| synth.generate(s).map(|p| (p.dataset, p.theta_star)))
            .collect::<Result<_>>()?,
        DataSource::Files { dataset, theta_star } => {
            vec![(read_dataset(dataset)?, read_params(theta_star)?)]
        }
    };
    for (dataset, _) in &problems {
        if let Some(&n) = config.n_grid.iter().find(|&&n| n > dataset.len()) {
            return Err(Error::invalid(format!(
                "budget {n} exceeds the {} sentences of the corpus",
                dataset.len()
            )));
        }
    }
    let mut cells = Vec::new();
    for (k, &seed) in seeds.iter().enumerate() {
        for &method in &config.methods {
            for &n in &config.n_grid {
                cells.push((k.min(problems.len() - 1), method, n, seed));
            }
        }
    }
    let mut records: Vec<ExperimentRecord> = cells
        .into_par_iter()
        .map(|(p, method, n, seed)| {
            let (dataset, theta_star) = &problems[p];
            run_cell(config, method, n, seed, dataset, theta_star)
        })
        .collect::<Result<_>>()?;
    records.sort_by(|a, b| {
        (a.method.as_str(), a.n, a.seed).cmp(&(b.method.as_str(), b.n, b.seed))
    });
    let aggregates = aggregate(&records);
    Ok(ExperimentOutput { records, aggregates })
}

/// Runs select → fit → evaluate for every `(method, n, seed)`.
///
/// Errors are measured on the full corpus. A failed selection or fit is
/// recorded in the cell's status and left out of the aggregates; the
/// failure count per `(method, n)` is kept in [`AggregateRow::failed`].
/// Output is independent of the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_all(config))
}
