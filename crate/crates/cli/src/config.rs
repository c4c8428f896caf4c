//! `--config` handling: TOML values become extra flags for every argument the
//! command line left unset, then the argv is parsed again.

use std::ffi::OsString;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command, CommandFactory, FromArgMatches};

use crate::args::Cli;

pub enum ParseFailure {
    Clap(clap::Error),
    Config(String),
}

impl From<clap::Error> for ParseFailure {
    fn from(e: clap::Error) -> Self {
        ParseFailure::Clap(e)
    }
}

fn scalar(key: &str, v: &toml::Value) -> Result<String, ParseFailure> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(ParseFailure::Config(format!(
            "--config: key `{key}` has unsupported value {other}"
        ))),
    }
}

/// Flags for one config entry, or nothing when the entry should not apply.
fn flags_for(cmd: &Command, matches: &ArgMatches, key: &str, value: &toml::Value) -> Result<Vec<OsString>, ParseFailure> {
    let id = key.replace('-', "_");
    let arg = cmd
        .get_arguments()
        .find(|a| a.get_id().as_str() == id)
        .ok_or_else(|| ParseFailure::Config(format!("--config: unknown key `{key}` for `{}`", cmd.get_name())))?;
    if id == "config" {
        return Err(ParseFailure::Config("--config: a config file cannot name another".into()));
    }
    if matches.value_source(&id) == Some(ValueSource::CommandLine) {
        return Ok(Vec::new());
    }
    let long = format!("--{}", arg.get_long().unwrap_or(&id));
    let mut out = Vec::new();
    match (arg.get_action(), value) {
        (ArgAction::SetTrue, toml::Value::Boolean(b)) => {
            if *b {
                out.push(long.into());
            }
        }
        (ArgAction::Count, toml::Value::Integer(n)) => {
            out.extend((0..*n).map(|_| OsString::from(&long)));
        }
        (_, toml::Value::Array(items)) => {
            out.push(long.into());
            for item in items {
                out.push(scalar(key, item)?.into());
            }
        }
        (_, v) => {
            out.push(long.into());
            out.push(scalar(key, v)?.into());
        }
    }
    Ok(out)
}

/// Parses `argv`, folding in the `--config` file when one is given.
pub fn parse(argv: Vec<OsString>) -> Result<Cli, ParseFailure> {
    // lenient first pass: required flags may still come from the file
    let matches = Cli::command().ignore_errors(true).try_get_matches_from(&argv)?;
    let Some(path) = matches.get_one::<std::path::PathBuf>("config") else {
        let matches = Cli::command().try_get_matches_from(&argv)?;
        return Ok(Cli::from_arg_matches(&matches)?);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseFailure::Config(format!("--config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| ParseFailure::Config(format!("--config {}: {e}", path.display())))?;

    let mut root = Cli::command();
    root.build();
    let mut cmd = &root;
    let mut leaf = &matches;
    let mut names = Vec::new();
    while let Some((name, sub)) = leaf.subcommand() {
        names.push(name.to_string());
        cmd = cmd.find_subcommand(name).expect("parsed subcommand exists");
        leaf = sub;
    }

    // Scalars from the root and from each table on the subcommand path, the
    // more specific table last so its flags come last.
    let mut entries: Vec<(String, toml::Value)> = Vec::new();
    let mut tables = vec![&table];
    let mut t = &table;
    for name in &names {
        match t.get(name) {
            Some(toml::Value::Table(sub)) => {
                tables.push(sub);
                t = sub;
            }
            Some(_) => {
                return Err(ParseFailure::Config(format!("--config: `{name}` must be a table")));
            }
            None => break,
        }
    }
    for t in tables {
        for (k, v) in t {
            if !v.is_table() {
                entries.push((k.clone(), v.clone()));
            }
        }
    }

    let mut extended = argv;
    let mut seen = std::collections::HashSet::new();
    for (k, v) in entries.iter().rev() {
        // a subcommand table overrides the same key at the root
        if seen.insert(k.replace('-', "_")) {
            extended.extend(flags_for(cmd, leaf, k, v)?);
        }
    }
    let matches = Cli::command().try_get_matches_from(&extended)?;
    Ok(Cli::from_arg_matches(&matches)?)
}
