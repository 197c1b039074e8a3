//! Audit files: the fully resolved flags of a run, stored next to its
//! outputs as `key = value` lines, and readable back through `--config`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, ArgMatches};

use crate::CliError;

const SKIPPED: [&str; 3] = ["config", "help", "version"];

/// `<output>.audit.conf`.
pub fn audit_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".audit.conf");
    PathBuf::from(name)
}

/// Every flag of the subcommand with its effective value, defaults included.
pub fn render(command: &clap::Command, matches: &ArgMatches) -> String {
    let mut out = format!("command = {}\n", command.get_name());
    for arg in command.get_arguments() {
        let id = arg.get_id().as_str();
        if SKIPPED.contains(&id) {
            continue;
        }
        let Some(values) = matches.get_raw(id) else { continue };
        let values: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
        if values.is_empty() {
            continue;
        }
        writeln!(out, "{id} = {}", values.join(",")).unwrap();
    }
    out
}

pub fn write(command: &clap::Command, matches: &ArgMatches, output: &Path) -> Result<(), CliError> {
    let path = audit_path(output);
    std::fs::write(&path, render(command, matches))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Turns an audit file back into command-line flags for `command`.
pub fn to_flags(command: &clap::Command, text: &str) -> Result<Vec<OsString>, CliError> {
    let mut flags = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", idx + 1)))?;
        if key == "command" {
            if value != command.get_name() {
                return Err(CliError::Usage(format!(
                    "config was written by `{value}`, not `{}`",
                    command.get_name()
                )));
            }
            continue;
        }
        let arg = command
            .get_arguments()
            .find(|a| a.get_id().as_str() == key && !SKIPPED.contains(&key))
            .ok_or_else(|| CliError::Usage(format!("config line {}: unknown key {key:?}", idx + 1)))?;
        let long = arg.get_long().expect("every flag has a long form");
        match arg.get_action() {
            ArgAction::SetTrue => {
                if value == "true" {
                    flags.push(format!("--{long}").into());
                }
            }
            _ => flags.push(format!("--{long}={value}").into()),
        }
    }
    Ok(flags)
}
