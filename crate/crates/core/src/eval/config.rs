use std::fmt::Write as _;
use std::path::PathBuf;

use super::{DataSource, Method, MethodSettings};
use crate::datagen::SyntheticConfig;
use crate::error::{Error, Result};
use crate::softmax::FitOptions;

/// Everything a run of [`run_experiment`](super::run_experiment) depends on.
///
/// Serializes to and from a plain `key = value` text file; see
/// [`ExperimentConfig::set`] for the keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    /// Number of runs; run `k` uses seed `seed + k`.
    pub seeds: usize,
    pub seed: u64,
    pub source: DataSource,
    pub settings: MethodSettings,
    pub fit: FitOptions,
    /// Worker threads; all cores when `None`.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::FisherSft,
                Method::Uniform,
                Method::SentenceOd,
                Method::Density,
                Method::Clustered,
            ],
            n_grid: vec![250, 500, 1000, 2000],
            seeds: 20,
            seed: 0,
            source: DataSource::Synthetic(SyntheticConfig::default()),
            settings: MethodSettings::default(),
            fit: FitOptions::default(),
            threads: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Reads `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; later keys win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", idx + 1))
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::invalid(format!("config line {}: {e}", idx + 1)))?;
        }
        Ok(config)
    }

    fn synthetic_mut(&mut self, key: &str) -> Result<&mut SyntheticConfig> {
        match &mut self.source {
            DataSource::Synthetic(s) => Ok(s),
            DataSource::Files { .. } => Err(Error::invalid(format!(
                "{key} applies to generated data, but a dataset file is configured"
            ))),
        }
    }

    /// Sets one key. Recognized keys: `methods`, `n_grid`, `seeds`, `seed`,
    /// `threads`, `sigma0`, `batch_size`, `vocab_size`, `dim`,
    /// `corpus_size`, `len_min`, `len_max`, `normalize`, `dataset`,
    /// `theta_star`, `max_iters`, `grad_tol`, `step_rule`
    /// (`barzilai-borwein` or `backtracking`), `density_rows`,
    /// `density_bins`, `density_mode`, `clusters`, `cluster_z`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "methods" => self.methods = parse_list(key, value)?,
            "n_grid" => self.n_grid = parse_list(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => {
                self.threads = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "sigma0" => self.settings.sigma0 = parse(key, value)?,
            "batch_size" => self.settings.batch_size = parse(key, value)?,
            "vocab_size" => self.synthetic_mut(key)?.vocab_size = parse(key, value)?,
            "dim" => self.synthetic_mut(key)?.dim = parse(key, value)?,
            "corpus_size" => self.synthetic_mut(key)?.corpus_size = parse(key, value)?,
            "len_min" => self.synthetic_mut(key)?.len_min = parse(key, value)?,
            "len_max" => self.synthetic_mut(key)?.len_max = parse(key, value)?,
            "normalize" => self.synthetic_mut(key)?.normalize = parse(key, value)?,
            "dataset" | "theta_star" => {
                let path = PathBuf::from(value);
                match &mut self.source {
                    DataSource::Files { dataset, theta_star } => {
                        if key == "dataset" {
                            *dataset = path;
                        } else {
                            *theta_star = path;
                        }
                    }
                    DataSource::Synthetic(_) => {
                        let (dataset, theta_star) = if key == "dataset" {
                            (path, PathBuf::new())
                        } else {
                            (PathBuf::new(), path)
                        };
                        self.source = DataSource::Files { dataset, theta_star };
                    }
                }
            }
            "max_iters" => self.fit.max_iters = parse(key, value)?,
            "grad_tol" => self.fit.grad_tol = parse(key, value)?,
            "step_rule" => self.fit.step_rule = value.parse()?,
            "density_rows" => self.settings.density.rows = parse(key, value)?,
            "density_bins" => self.settings.density.bins = parse(key, value)?,
            "density_mode" => self.settings.density.mode = value.parse()?,
            "clusters" => self.settings.clustered.k = parse(key, value)?,
            "cluster_z" => self.settings.clustered.z = parse(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// The fully resolved configuration in the format [`parse`](Self::parse) reads.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("methods", join(&self.methods));
        kv("n_grid", join(&self.n_grid));
        kv("seeds", self.seeds.to_string());
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.map_or("auto".into(), |t| t.to_string()));
        kv("sigma0", self.settings.sigma0.to_string());
        kv("batch_size", self.settings.batch_size.to_string());
        match &self.source {
            DataSource::Synthetic(s) => {
                kv("vocab_size", s.vocab_size.to_string());
                kv("dim", s.dim.to_string());
                kv("corpus_size", s.corpus_size.to_string());
                kv("len_min", s.len_min.to_string());
                kv("len_max", s.len_max.to_string());
                kv("normalize", s.normalize.to_string());
            }
            DataSource::Files { dataset, theta_star } => {
                kv("dataset", dataset.display().to_string());
                kv("theta_star", theta_star.display().to_string());
            }
        }
        kv("max_iters", self.fit.max_iters.to_string());
        kv("grad_tol", self.fit.grad_tol.to_string());
        kv("step_rule", self.fit.step_rule.as_str().into());
        kv("density_rows", self.settings.density.rows.to_string());
        kv("density_bins", self.settings.density.bins.to_string());
        kv("density_mode", self.settings.density.mode.as_str().into());
        kv("clusters", self.settings.clustered.k.to_string());
        kv("cluster_z", self.settings.clustered.z.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.n_grid.is_empty() || self.seeds == 0 {
            return Err(Error::invalid("need at least one method, budget and seed"));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::invalid("budgets must be positive to fit a model"));
        }
        if !(self.settings.sigma0 > 0.0 && self.settings.sigma0.is_finite()) {
            return Err(Error::invalid(format!("sigma0 must be positive, got {}", self.settings.sigma0)));
        }
        if self.settings.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        if let DataSource::Files { dataset, theta_star } = &self.source {
            if dataset.as_os_str().is_empty() || theta_star.as_os_str().is_empty() {
                return Err(Error::invalid(
                    "a dataset file needs both `dataset` and `theta_star` paths",
                ));
            }
        }
        Ok(())
    }
}
