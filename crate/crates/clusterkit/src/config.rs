//! Optional `key = value` configuration files.
//!
//! Keys are long flag names without the leading dashes. Values are spliced
//! into the argument list right after the subcommand, ahead of the user's
//! own flags, so anything given on the command line wins.

use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config line {line}: expected key = value")]
    Syntax { line: usize },
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

/// Value of `--config` in `args`, if any.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config entries after the first token naming a subcommand.
/// `true` values become bare switches and `false` values are dropped.
pub fn splice(args: Vec<OsString>, pairs: &[(String, String)], subcommands: &[&str]) -> Vec<OsString> {
    let Some(pos) = args.iter().skip(1).position(|a| subcommands.iter().any(|s| a == s)) else {
        return args;
    };
    let pos = pos + 2;
    let mut extra: Vec<OsString> = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "false" => {}
            "true" => extra.push(format!("--{k}").into()),
            _ => {
                extra.push(format!("--{k}").into());
                extra.push(v.into());
            }
        }
    }
    let mut out = args[..pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos..]);
    out
}

pub fn load_and_splice(args: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    Ok(splice(args, &parse(&text)?, subcommands))
}
