//! Key-value experiment configuration.
//!
//! A config file holds `key = value` lines; `#` starts a comment. Values from
//! the file override the defaults and command-line flags override both.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every recognized key with its default; an empty default means unset.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    // synth
    ("num_train", "60"),
    ("num_test", "20"),
    ("dim", "8"),
    ("separation", "6"),
    ("noise_sigma", "2"),
    ("binary_features", "false"),
    // train
    ("grammar", "monte-carlo"),
    ("grammar_file", ""),
    ("samples", "1000"),
    ("text", ""),
    ("window", "10"),
    ("length_mean", "loss"),
    ("length_kind", "poisson"),
    ("l_min", "50"),
    ("lengths_file", ""),
    ("hidden", "256"),
    ("epochs", "10"),
    ("batch_size", "512"),
    ("learning_rate", "0.01"),
    ("frame_stride", "1"),
    ("supervision", "sets"),
    // infer
    ("mode", "free"),
    ("ablation", "full"),
    ("stride", "30"),
    ("max_len", ""),
    ("beam", ""),
    // eval
    ("metrics", "accuracy,midpoint,jaccard"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("bad value {raw:?} for {key}")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            "" | "auto" | "off" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        Some(self.raw(key)).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            out.push_str(&format!("{k} = {}\n", self.raw(k)));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.txt");
        fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }
}
