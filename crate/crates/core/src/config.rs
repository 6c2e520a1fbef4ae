//! Run configuration: a plain `key = value` file plus per-key overrides.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// LSTM state width and feedforward hidden width.
    pub hidden_dim: usize,
    pub lr: f64,
    /// Neural weights start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a tune-MAP improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clamp_negative_sim: bool,
    pub hinge_epochs: usize,
    pub hinge_lr: f64,
    pub logreg_epochs: usize,
    pub logreg_lr: f64,
    pub n_perm: usize,
    pub bootstrap_samples: usize,
    /// Candidates per post.
    pub k: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            hidden_dim: 100,
            lr: 1e-3,
            init_scale: 0.08,
            batch_size: 32,
            epochs: 50,
            patience: 5,
            seed: 0,
            clamp_negative_sim: true,
            hinge_epochs: 10,
            hinge_lr: 0.1,
            logreg_epochs: 200,
            logreg_lr: 0.1,
            n_perm: 1000,
            bootstrap_samples: 10_000,
            k: 10,
        }
    }
}

impl Config {
    pub const KEYS: [&'static str; 15] = [
        "hidden_dim",
        "lr",
        "init_scale",
        "batch_size",
        "epochs",
        "patience",
        "seed",
        "clamp_negative_sim",
        "hinge_epochs",
        "hinge_lr",
        "logreg_epochs",
        "logreg_lr",
        "n_perm",
        "bootstrap_samples",
        "k",
    ];

    /// Parses a config file over the defaults. Blank lines and `#` comments
    /// are ignored; a repeated key keeps its last value.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("override `{assignment}` is not `key=value`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidInput(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "clamp_negative_sim" => self.clamp_negative_sim = parse(key, value)?,
            "hinge_epochs" => self.hinge_epochs = parse(key, value)?,
            "hinge_lr" => self.hinge_lr = parse(key, value)?,
            "logreg_epochs" => self.logreg_epochs = parse(key, value)?,
            "logreg_lr" => self.logreg_lr = parse(key, value)?,
            "n_perm" => self.n_perm = parse(key, value)?,
            "bootstrap_samples" => self.bootstrap_samples = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown config key `{key}`; valid keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("n_perm", self.n_perm),
            ("bootstrap_samples", self.bootstrap_samples),
            ("k", self.k),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("`{key}` must be positive")));
        }
        for (key, v) in [
            ("lr", self.lr),
            ("init_scale", self.init_scale),
            ("hinge_lr", self.hinge_lr),
            ("logreg_lr", self.logreg_lr),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("`{key}` must be a non-negative number")));
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let values: [String; 15] = [
            self.hidden_dim.to_string(),
            self.lr.to_string(),
            self.init_scale.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.patience.to_string(),
            self.seed.to_string(),
            self.clamp_negative_sim.to_string(),
            self.hinge_epochs.to_string(),
            self.hinge_lr.to_string(),
            self.logreg_epochs.to_string(),
            self.logreg_lr.to_string(),
            self.n_perm.to_string(),
            self.bootstrap_samples.to_string(),
            self.k.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!((c.hidden_dim, c.batch_size, c.patience, c.k), (100, 32, 5, 10));
        assert_eq!(c.lr, 1e-3);
        assert!(c.clamp_negative_sim);
    }

    #[test]
    fn parse_and_override() {
        let mut c =
            Config::parse("# comment\nhidden_dim = 8\n\nlr=0.01  # trailing\nclamp_negative_sim = false\n").unwrap();
        assert_eq!((c.hidden_dim, c.lr, c.clamp_negative_sim), (8, 0.01, false));
        c.apply_override("seed=42").unwrap();
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = Config::parse("hiden_dim = 3").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(err.contains("hidden_dim, lr, init_scale"), "{err}");
        assert!(Config::default().apply_override("nope").is_err());
        assert!(Config::default().apply_override("lr=abc").is_err());
        assert!(Config::default().apply_override("k=0").is_err());
    }

    #[test]
    fn text_round_trip() {
        let c = Config {
            lr: 0.25,
            epochs: 7,
            ..Config::default()
        };
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }
}
