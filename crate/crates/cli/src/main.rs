mod args;
mod audit;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Failure classes, each with its own exit code and message prefix.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Lib(#[from] fishersft::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use fishersft::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Lib(e) => match e {
                E::InvalidArgument(_) | E::UnsupportedSize(_) => 1,
                E::Format(_) | E::Io { .. } | E::PartialResults { .. } => 2,
                E::NumericalFailure(_) | E::InvalidState(_) => 3,
            },
        }
    }

    fn prefix(&self) -> &'static str {
        if let CliError::Mismatch(_) = self {
            return "bench mismatch";
        }
        match self.exit_code() {
            1 => "usage error",
            2 => "data error",
            _ => "numerical error",
        }
    }
}

/// The value of `--config` for a single-step command, read before clap sees
/// the arguments so that the file can supply required flags.
fn config_flag(argv: &[OsString]) -> Option<PathBuf> {
    let sub = argv.get(1)?.to_str()?;
    if sub == "pipeline" {
        return None;
    }
    let mut rest = argv.iter().skip(2);
    while let Some(a) = rest.next() {
        let a = a.to_str()?;
        if a == "--config" {
            return rest.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_flag(&argv) else { return Ok(argv) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let name = argv[1].to_string_lossy().into_owned();
    let cli = Cli::command();
    let sub = cli
        .find_subcommand(&name)
        .ok_or_else(|| CliError::Usage(format!("unknown command {name:?}")))?;
    let mut expanded = vec![argv[0].clone(), argv[1].clone()];
    expanded.extend(audit::to_flags(sub, &text)?);
    expanded.extend(argv.into_iter().skip(2));
    Ok(expanded)
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let root = Cli::command();
    let (name, sub_matches) = matches.subcommand().expect("a subcommand is required");
    let sub = root.find_subcommand(name).expect("parsed subcommand exists");
    let ctx = commands::Context { command: sub, matches: sub_matches };
    match cli.command {
        Command::Gen(a) => commands::gen(&a, &ctx),
        Command::Select(a) => commands::select(&a, &ctx),
        Command::Fit(a) => commands::fit(&a, &ctx),
        Command::Eval(a) => commands::eval(&a, &ctx),
        Command::Bench(a) => commands::bench(&a, &ctx),
        Command::Pipeline(a) => commands::pipeline(&a),
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("{}: {e}", e.prefix());
            return ExitCode::from(e.exit_code());
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.prefix());
            ExitCode::from(e.exit_code())
        }
    }
}
