//! Flat `key = value` configuration files.
//!
//! Recognised keys: `n`, `m`, `pool_sizes`, `speeds`, `beta`, `lambda`,
//! `gammas`, `seed`. Lists are comma separated. `#` starts a comment.
//!
//! ```text
//! n = 100
//! gammas = 0.2, 0.8
//! speeds = 2.5, 0.625
//! beta = 2
//! seed = 7
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{validate_config, RawConfig, SystemConfig};

/// Parsed configuration file: system parameters plus an optional seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub raw: RawConfig,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn system(&self) -> Result<SystemConfig> {
        validate_config(self.raw.clone())
    }
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| scalar(key, s.trim())).collect()
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut out = ConfigFile::default();
    let mut have_speeds = false;
    let mut have_beta = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => out.raw.n = Some(scalar(key, value)?),
            "m" => out.raw.m = Some(scalar(key, value)?),
            "pool_sizes" => out.raw.pool_sizes = Some(list(key, value)?),
            "speeds" => {
                out.raw.speeds = list(key, value)?;
                have_speeds = true;
            }
            "beta" => {
                out.raw.beta = scalar(key, value)?;
                have_beta = true;
            }
            "lambda" => out.raw.lambda = Some(scalar(key, value)?),
            "gammas" => out.raw.gammas = Some(list(key, value)?),
            "seed" => out.seed = Some(scalar(key, value)?),
            other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
        }
    }
    if !have_speeds {
        return Err(Error::Parse("missing key speeds".into()));
    }
    if !have_beta && out.raw.lambda.is_none() {
        return Err(Error::Parse("need beta or lambda".into()));
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    parse_config(&std::fs::read_to_string(path)?)
}
