//! Flat key=value configuration files. Every long flag has a same-named key
//! (dashes and underscores are interchangeable); explicit flags override the
//! file.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Keys the loader accepts; anything else is a config error so typos fail
/// loudly instead of silently keeping a default.
const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "structure",
    "magnitude",
    "noise",
    "alpha",
    "decomp",
    "rank",
    "auto_rank",
    "rmax",
    "delta",
    "iters",
    "tol",
    "restarts",
    "norm",
    "stop",
    "const",
    "lambda_t",
    "min_segment",
    "penalty_alpha",
    "subsample",
    "quorum",
    "preaverage",
    "reps",
    "seed",
    "workers",
    "out",
    "input",
    "records",
];

/// Parsed config file: normalized key → raw value string.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config file {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "config file {} line {}: expected key=value, got `{raw}`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = normalize(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "config file {} line {}: unknown key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// `flag` when given, else the parsed file value, else `None`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Config(format!("config key `{key}`: bad value `{raw}`: {e}"))
            }),
        }
    }

    /// Boolean flags: true when the flag was given or the file says so.
    pub fn resolve_flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        match self.values.get(&normalize(key)).map(String::as_str) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(raw) => Err(CliError::Config(format!(
                "config key `{key}`: bad boolean `{raw}`"
            ))),
        }
    }
}
