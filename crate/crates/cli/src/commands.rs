use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use clap::ArgMatches;

use fishersft::baselines::{
    ask_llm_select, AskLlmOptions, ClusteredParams, DensityParams, HttpScorer, ProcessScorer, Scorer,
};
use fishersft::datagen::{
    choose_words, load_embedding_table, random_project, read_dataset, write_dataset, SyntheticConfig,
};
use fishersft::eval::{run_experiment, sentence_errors, ExperimentConfig, Method, MethodSettings};
use fishersft::rng::derive_seed;
use fishersft::selection::{greedy_naive, LazyGreedy};
use fishersft::softmax::{fit_mle, read_params, write_params, FitOptions, SubsetData};
use fishersft::{Dataset, ParamMatrix, SelectionResult};

use crate::args::{BenchArgs, Common, EvalArgs, FitArgs, GenArgs, PipelineArgs, SelectArgs};
use crate::{audit, CliError};

/// The parsed subcommand, kept for writing audit files.
pub struct Context<'a> {
    pub command: &'a clap::Command,
    pub matches: &'a ArgMatches,
}

impl Context<'_> {
    fn audit(&self, output: &Path) -> Result<(), CliError> {
        audit::write(self.command, self.matches, output)
    }
}

fn init_threads(common: &Common) -> Result<(), CliError> {
    match common.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => {
            // Fails only if a pool already exists, which is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            Ok(())
        }
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn gen(a: &GenArgs, ctx: &Context<'_>) -> Result<(), CliError> {
    init_threads(&a.common)?;
    let cfg = SyntheticConfig {
        vocab_size: a.vocab_size,
        dim: a.dim,
        corpus_size: a.corpus_size,
        len_min: a.len_min,
        len_max: a.len_max,
        normalize: a.normalize,
    };
    let problem = match &a.embeddings {
        None => {
            if a.words_out.is_some() {
                return Err(CliError::Usage("--words-out needs --embeddings".into()));
            }
            cfg.generate(a.seed)?
        }
        Some(path) => {
            let table = load_embedding_table(path)?;
            let chosen = choose_words(&table, a.vocab_size, derive_seed(a.seed, 4))?;
            let vocab = if chosen.vectors.dim() == a.dim {
                chosen.vectors
            } else {
                random_project(&chosen.vectors, a.dim, derive_seed(a.seed, 5))?
            };
            if let Some(words) = &a.words_out {
                write_text(words, &(chosen.words.join("\n") + "\n"))?;
            }
            cfg.generate_with_vocab(vocab, a.seed)?
        }
    };
    write_dataset(&a.out, &problem.dataset)?;
    write_params(&a.theta_out, &problem.theta_star)?;
    ctx.audit(&a.out)?;
    println!(
        "wrote {} sentences ({} positions) to {}",
        problem.dataset.len(),
        problem.dataset.total_positions(),
        a.out.display()
    );
    Ok(())
}

fn read_texts(path: &Path) -> Result<Vec<String>, CliError> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    } else {
        Ok(text.lines().map(str::to_owned).collect())
    }
}

fn ask_llm(a: &SelectArgs) -> Result<SelectionResult, CliError> {
    let texts_path = a
        .texts
        .as_ref()
        .ok_or_else(|| CliError::Usage("ask-llm needs --texts".into()))?;
    let texts = read_texts(texts_path)?;
    if let Some(path) = &a.dataset {
        let dataset = read_dataset(path)?;
        if dataset.len() != texts.len() {
            return Err(CliError::Data(format!(
                "{} texts for a dataset of {} sentences",
                texts.len(),
                dataset.len()
            )));
        }
    }
    let timeout = Duration::from_millis(a.scorer_timeout_ms);
    let scorer: Box<dyn Scorer> = match (&a.scorer_cmd, &a.scorer_url) {
        (Some(program), None) => Box::new(ProcessScorer {
            program: program.clone(),
            args: Vec::new(),
            timeout,
        }),
        (None, Some(endpoint)) => Box::new(HttpScorer {
            endpoint: endpoint.clone(),
            timeout,
        }),
        _ => return Err(CliError::Usage("ask-llm needs exactly one of --scorer-cmd and --scorer-url".into())),
    };
    let mut result = ask_llm_select(&texts, a.n, scorer.as_ref(), &AskLlmOptions::default())?;
    result.seed = a.seed;
    Ok(result)
}

pub fn select(a: &SelectArgs, ctx: &Context<'_>) -> Result<(), CliError> {
    init_threads(&a.common)?;
    let result = if a.method == "ask-llm" {
        ask_llm(a)?
    } else {
        let method: Method = a.method.parse()?;
        let path = a
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{method} needs --dataset")))?;
        let dataset = read_dataset(path)?;
        let settings = MethodSettings {
            sigma0: a.sigma0,
            batch_size: a.batch_size,
            density: DensityParams {
                rows: a.density_rows,
                bins: a.density_bins,
                mode: a.density_mode.parse()?,
                ..DensityParams::default()
            },
            clustered: ClusteredParams {
                k: a.clusters,
                z: a.cluster_z,
                ..ClusteredParams::default()
            },
        };
        method.select(&dataset, a.n, a.seed, &settings)?
    };
    write_text(&a.out, &(result.to_json() + "\n"))?;
    ctx.audit(&a.out)?;
    println!("{}: selected {} sentences in {:.1} ms", result.method, result.chosen.len(), result.wall_ms);
    Ok(())
}

pub fn fit(a: &FitArgs, ctx: &Context<'_>) -> Result<(), CliError> {
    init_threads(&a.common)?;
    let dataset = read_dataset(&a.dataset)?;
    let indices: Vec<usize> = match &a.selection {
        Some(path) => {
            SelectionResult::from_json(&read_text(path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                .chosen
        }
        None => (0..dataset.len()).collect(),
    };
    let data = SubsetData::new(&dataset, &indices)?;
    let opts = FitOptions {
        max_iters: a.max_iters,
        grad_tol: a.grad_tol,
        step_rule: a.step_rule.parse()?,
    };
    let init = ParamMatrix::zeros(dataset.dim(), dataset.vocab_size());
    let fit = fit_mle(&data, &init, &opts)?;
    write_params(&a.out, &fit.theta)?;
    ctx.audit(&a.out)?;
    println!(
        "{} after {} iterations: nll {:.6}, gradient {:.3e}",
        fit.status.as_str(),
        fit.iterations,
        fit.nll,
        fit.grad_inf_norm
    );
    Ok(())
}

pub fn eval(a: &EvalArgs, ctx: &Context<'_>) -> Result<(), CliError> {
    init_threads(&a.common)?;
    let dataset = read_dataset(&a.dataset)?;
    let star = read_params(&a.theta_star)?;
    let hat = read_params(&a.theta_hat)?;
    let errors = sentence_errors(&star, &hat, &dataset)?;
    if errors.is_empty() {
        return Err(CliError::Data(format!("{} has no sentences", a.dataset.display())));
    }
    let e_max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e_mean = errors.iter().sum::<f64>() / errors.len() as f64;
    write_text(&a.out, &format!("e_max,e_mean,sentences\n{e_max},{e_mean},{}\n", errors.len()))?;
    if let Some(path) = &a.per_sentence {
        let mut csv = String::from("sentence,error\n");
        for (i, e) in errors.iter().enumerate() {
            writeln!(csv, "{i},{e}").unwrap();
        }
        write_text(path, &csv)?;
    }
    ctx.audit(&a.out)?;
    println!("e_max {e_max:.6}, e_mean {e_mean:.6} over {} sentences", errors.len());
    Ok(())
}

pub fn bench(a: &BenchArgs, ctx: &Context<'_>) -> Result<(), CliError> {
    init_threads(&a.common)?;
    let dataset: Dataset = match &a.dataset {
        Some(path) => read_dataset(path)?,
        None => {
            SyntheticConfig {
                corpus_size: a.corpus_size,
                dim: a.dim,
                vocab_size: a.vocab_size,
                ..SyntheticConfig::default()
            }
            .generate(a.seed)?
            .dataset
        }
    };
    let mut lazy = LazyGreedy::new(a.batch_size, a.sigma0);
    lazy.parallel = true;
    let lazy = lazy.run(&dataset, a.n)?;
    let naive = greedy_naive(&dataset, a.n, a.sigma0)?;
    let identical = lazy.chosen == naive.chosen && lazy.round_gains == naive.round_gains;
    let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { f64::NAN };

    let mut report = String::new();
    writeln!(report, "identical: {identical}").unwrap();
    writeln!(report, "sentences: {}", dataset.len()).unwrap();
    writeln!(report, "budget: {}", a.n).unwrap();
    writeln!(report, "lazy gain evaluations: {}", lazy.gain_evaluations).unwrap();
    writeln!(report, "naive gain evaluations: {}", naive.gain_evaluations).unwrap();
    writeln!(
        report,
        "evaluation ratio: {:.4}",
        ratio(lazy.gain_evaluations as f64, naive.gain_evaluations as f64)
    )
    .unwrap();
    writeln!(report, "lazy wall ms: {:.3}", lazy.wall_ms).unwrap();
    writeln!(report, "naive wall ms: {:.3}", naive.wall_ms).unwrap();
    writeln!(report, "wall-time ratio: {:.4}", ratio(lazy.wall_ms, naive.wall_ms)).unwrap();
    print!("{report}");
    if let Some(out) = &a.out {
        write_text(out, &report)?;
        ctx.audit(out)?;
    }
    if identical {
        Ok(())
    } else {
        Err(CliError::Mismatch("lazy and naive greedy chose different subsets".into()))
    }
}

pub fn pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::parse(&read_text(path)?)?,
        None => ExperimentConfig::default(),
    };
    for item in &a.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    let flags: [(&str, Option<String>); 8] = [
        ("methods", a.methods.clone()),
        ("n_grid", a.n_grid.clone()),
        ("seeds", a.seeds.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("sigma0", a.sigma0.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("density_mode", a.density_mode.clone()),
        ("threads", a.threads.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(p) = &a.dataset {
        cfg.set("dataset", &p.to_string_lossy())?;
    }
    if let Some(p) = &a.theta_star {
        cfg.set("theta_star", &p.to_string_lossy())?;
    }
    if a.normalize {
        cfg.set("normalize", "true")?;
    }
    cfg.validate()?;

    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", a.out.display())))?;
    write_text(&a.out.join("config.conf"), &cfg.to_kv())?;
    let output = run_experiment(&cfg)?;
    write_text(&a.out.join("records.csv"), &output.records_csv())?;
    write_text(&a.out.join("aggregate.csv"), &output.aggregate_csv())?;
    write_text(&a.out.join("failures.csv"), &output.failures_csv())?;

    println!("{:<14} {:>6} {:>12} {:>12} {:>7}", "method", "n", "E_max", "E_mean", "failed");
    for row in &output.aggregates {
        println!(
            "{:<14} {:>6} {:>12.4} {:>12.4} {:>7}",
            row.method.as_str(),
            row.n,
            row.e_max_mean,
            row.e_mean_mean,
            row.failed
        );
    }
    Ok(())
}
