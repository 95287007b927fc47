//! key=value config files. Keys are long option names (`max-sweeps` or
//! `max_sweeps`); a flag given on the command line beats the file.

use std::collections::BTreeMap;

use clap::{CommandFactory, FromArgMatches};

use crate::Cli;

pub enum ParseFailure {
    Clap(clap::Error),
    Config(String),
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value, got '{line}'", i + 1))?;
        let key = k.trim().replace('_', "-");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("config line {}: duplicate key '{key}'", i + 1));
        }
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if any.
fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn given(argv: &[String], long: &str) -> bool {
    let eq = format!("--{long}=");
    argv.iter().any(|a| a.strip_prefix("--") == Some(long) || a.starts_with(&eq))
}

/// Parse arguments, filling options the command line leaves out from the
/// `--config` file. Required options may come from the file alone.
pub fn parse_with_config(mut argv: Vec<String>) -> Result<Cli, ParseFailure> {
    if let Some(path) = config_path(&argv) {
        let text = std::fs::read_to_string(&path).map_err(|e| ParseFailure::Config(format!("cannot read config {path}: {e}")))?;
        let entries = parse_config(&text).map_err(ParseFailure::Config)?;
        let cmd = Cli::command();
        let sub = argv
            .iter()
            .skip(1)
            .find_map(|a| cmd.find_subcommand(a.as_str()))
            .ok_or_else(|| ParseFailure::Config("a subcommand is required".into()))?;
        let mut extra = Vec::new();
        for (key, value) in entries {
            let known = key != "config"
                && (cmd.get_arguments().any(|a| a.get_long() == Some(key.as_str()))
                    || sub.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if !known {
                return Err(ParseFailure::Config(format!("unknown config key '{key}' for '{}'", sub.get_name())));
            }
            if !given(&argv, &key) {
                extra.push(format!("--{key}={value}"));
            }
        }
        argv.extend(extra);
    }
    let m = Cli::command().try_get_matches_from(argv).map_err(ParseFailure::Clap)?;
    Cli::from_arg_matches(&m).map_err(ParseFailure::Clap)
}
