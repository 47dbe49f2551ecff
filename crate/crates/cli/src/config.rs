//! Flat `key = value` configuration with `#` comments.

use crate::error::{io_err, CliError, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

pub const KEYS: &[&str] = &[
    "seed",
    "signers",
    "samples",
    "forgeries",
    "t",
    "variant",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_epsilon",
    "batch_size",
    "max_epochs",
    "patience",
    "stop_at_perfect_validation",
    "target_loss",
    "focal_length",
    "cx",
    "cy",
    "baseline",
    "image_width",
    "image_height",
    "ball_radius",
    "noise",
    "pen_length",
    "frame_rate",
    "sigma_intra",
    "sigma_forge",
    "occlusion_fraction",
    "time_warp",
    "angles",
    "scale_factors",
    "orange_low",
    "orange_high",
    "green_low",
    "green_high",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if values
                .insert(k.to_string(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(CliError::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => {
                        CliError::Config(format!("cannot read {}: {e}", p.display()))
                    }
                    _ => io_err(p)(e),
                })?;
                Self::parse(&text)
            }
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.values
            .get(key)
            .map(|(line, v)| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("line {line}: bad value {v:?} for {key}")))
            })
            .transpose()
    }

    /// Flag value if given, else the config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.values
            .get(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            CliError::Config(format!("line {line}: bad list entry {s:?} for {key}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let c = Config::parse("# run\nseed = 7  # trailing\n\nangles=-10, 0,10\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(c.list::<f64>("angles").unwrap(), Some(vec![-10.0, 0.0, 10.0]));
        assert_eq!(c.pick(Some(3u64), "seed", 0).unwrap(), 3);
        assert_eq!(c.pick(None, "seed", 0u64).unwrap(), 7);
        assert_eq!(c.pick(None, "t", 512usize).unwrap(), 512);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("nonsense").is_err());
        assert!(Config::parse("colour = red").is_err());
        assert!(Config::parse("seed = 1\nseed = 2").is_err());
        let c = Config::parse("seed = x").unwrap();
        assert!(c.get::<u64>("seed").is_err());
    }
}
