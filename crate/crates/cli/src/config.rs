//! Config files are folded into the command line: each key becomes a flag
//! placed ahead of the user's own flags, so anything given explicitly wins.
//!
//! ```toml
//! jobs = 4
//!
//! [learn]
//! estimator = "bayes"
//! alpha = 0.01
//!
//! [labels]
//! Accident = "Acc"
//! ```

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::args::{Command, CONFIG_ENV};
use crate::error::CliError;

/// Path of the config file named on the command line or in the environment.
pub fn locate(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn scalar(key: &str, v: &toml::Value) -> Result<Option<String>, CliError> {
    Ok(Some(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(_) => return Ok(None),
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, CliError> = items
                .iter()
                .map(|i| scalar(key, i)?.ok_or_else(|| CliError::usage(format!("config key `{key}`: nested booleans"))))
                .collect();
            parts?.join(",")
        }
        other => return Err(CliError::usage(format!("config key `{key}`: unsupported value {other}"))),
    }))
}

fn flags(table: &toml::Table, out: &mut Vec<OsString>) -> Result<(), CliError> {
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            v => {
                out.push(flag.into());
                out.push(scalar(key, v)?.unwrap_or_default().into());
            }
        }
    }
    Ok(())
}

/// `argv` with the config's values spliced in: top-level keys before the
/// subcommand, the subcommand's own table and `[labels]` right after it.
pub fn apply(argv: Vec<OsString>, path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let doc: toml::Table =
        text.parse().map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;

    let mut global = toml::Table::new();
    for (k, v) in &doc {
        match v {
            toml::Value::Table(_) if Command::NAMES.contains(&k.as_str()) || k == "labels" => {}
            toml::Value::Table(_) => return Err(CliError::usage(format!("config: unknown section [{k}]"))),
            _ => {
                global.insert(k.clone(), v.clone());
            }
        }
    }

    let Some(pos) = argv.iter().position(|a| Command::NAMES.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(argv);
    };
    let name = argv[pos].to_string_lossy().into_owned();
    let mut spliced: Vec<OsString> = argv[..pos].to_vec();
    flags(&global, &mut spliced)?;
    spliced.push(argv[pos].clone());
    if let Some(toml::Value::Table(t)) = doc.get(&name) {
        flags(t, &mut spliced)?;
    }
    if name == "visualize" {
        if let Some(toml::Value::Table(labels)) = doc.get("labels") {
            for (k, v) in labels {
                let text = v.as_str().ok_or_else(|| CliError::usage(format!("config label `{k}` must be a string")))?;
                spliced.push("--label".into());
                spliced.push(format!("{k}={text}").into());
            }
        }
    }
    spliced.extend(argv[pos + 1..].iter().cloned());
    Ok(spliced)
}
