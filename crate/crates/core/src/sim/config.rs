//! Flat `key = value` config files for `simulate`.
//!
//! Keys match the CLI flag names without the leading dashes. Blank lines and
//! lines starting with `#` are ignored.

use std::path::PathBuf;
use std::str::FromStr;

use super::SimConfig;
use crate::fm::Averaging;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub config: SimConfig,
    pub out: Option<PathBuf>,
}

fn at(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{}bad value {value:?} for {key}", at(line))))
}

impl SimConfig {
    /// Applies one setting by its CLI name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_at(0, key, value)
    }

    fn set_at(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match key {
            "delta" => self.delta = parse(line, key, value)?,
            "rs" => self.r_s = parse(line, key, value)?,
            "epsilon" => self.epsilon = parse(line, key, value)?,
            "delta-prob" => self.delta_prob = parse(line, key, value)?,
            "sketches" => {
                self.sketches = match value {
                    "auto" => None,
                    v => Some(parse(line, key, v)?),
                }
            }
            "width" => self.width = parse(line, key, value)?,
            "arrival-rate" => self.arrival_rate = parse(line, key, value)?,
            "service-rate" => self.service_rate = parse(line, key, value)?,
            "service-start" => self.service_start = parse(line, key, value)?,
            "renewal" => self.renewal_interval = parse(line, key, value)?,
            "ticks" => self.ticks = parse(line, key, value)?,
            "seed" => self.seed = parse(line, key, value)?,
            "n-hint" => self.n_hint = parse(line, key, value)?,
            "query-fraction" => self.query_fraction = parse(line, key, value)?,
            "allow-stale-renewal" => self.allow_stale_renewal = parse(line, key, value)?,
            "averaging" => {
                self.averaging = match value {
                    "mean-index" => Averaging::MeanIndex,
                    "mean-estimate" => Averaging::MeanEstimate,
                    _ => {
                        return Err(Error::Config(format!(
                            "{}unknown averaging {value:?}",
                            at(line)
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("{}unknown key {key:?}", at(line)))),
        }
        Ok(())
    }
}

pub fn parse_config_text(text: &str) -> Result<ConfigFile> {
    let mut file = ConfigFile::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "out" {
            file.out = Some(PathBuf::from(value));
        } else {
            file.config.set_at(i + 1, key, value)?;
        }
    }
    Ok(file)
}
