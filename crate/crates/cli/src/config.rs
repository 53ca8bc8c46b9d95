//! Key-value config files that stand in for command-line flags.
//!
//! One `key = value` pair per line, where `key` is a long flag name without
//! the leading dashes. Blank lines and lines starting with `#` are ignored.
//! A value of `true` turns on a switch and `false` leaves it off. Values may
//! be wrapped in double quotes to keep surrounding spaces.
//!
//! Flags given on the command line override the file.

use std::ffi::OsString;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

/// Parse config text into `(key, value)` pairs in file order.
pub fn parse_kv_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigError {
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if !valid_key(&key) {
            return Err(err(format!("bad key {key:?}")));
        }
        if key == "config" {
            return Err(err("config files cannot include other config files".into()));
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        } else if value.contains('"') {
            return Err(err(format!("unbalanced quote in {value:?}")));
        }
        if value.is_empty() {
            return Err(err(format!("empty value for {key}")));
        }
        pairs.push((key, value.to_string()));
    }
    Ok(pairs)
}

/// Flags taking a value that may appear before the subcommand.
const GLOBAL_VALUE_FLAGS: [&str; 5] = ["--seed", "--out", "--format", "--threads", "--config"];

/// Locate `--config PATH` or `--config=PATH` in `argv`.
pub fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
        if s == "--" {
            break;
        }
    }
    None
}

fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s.starts_with('-') {
            if GLOBAL_VALUE_FLAGS.contains(&s.as_ref()) {
                i += 1;
            }
            i += 1;
            continue;
        }
        return Some(i);
    }
    None
}

/// Rebuild `argv` as `bin SUBCOMMAND <file flags> <user flags>` so that the
/// parser, which keeps the last occurrence of a flag, lets the command line
/// win over the file.
pub fn merge_config(argv: &[OsString], pairs: &[(String, String)]) -> Vec<OsString> {
    let Some(sub) = subcommand_index(argv) else {
        return argv.to_vec();
    };
    let mut out = vec![argv[0].clone(), argv[sub].clone()];
    for (key, value) in pairs {
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    out.extend(argv[1..sub].iter().cloned());
    out.extend(argv[sub + 1..].iter().cloned());
    out
}
