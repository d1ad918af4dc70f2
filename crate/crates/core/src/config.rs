//! Plain-text simulation configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Unknown or repeated
//! keys are rejected with the offending line number. See `docs/config.md`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TrainingHyperparams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Coded,
    Uncoded,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Coded => "coded",
            Scheme::Uncoded => "uncoded",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coded" => Ok(Scheme::Coded),
            "uncoded" => Ok(Scheme::Uncoded),
            other => Err(format!("unknown scheme {other:?}, expected coded or uncoded")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub n_clients: usize,
    pub max_comm_rate_bps: f64,
    pub comm_rate_ratio: f64,
    pub max_mac_rate: f64,
    pub mac_rate_ratio: f64,
    pub p_err: f64,
    pub alpha: f64,
    pub overhead: f64,
    pub bits_per_scalar: u32,
    pub scheme: Scheme,
    /// Fraction of each global batch covered by parity rows.
    pub redundancy: f64,
    pub seed: u64,
    pub kernel_sigma: f64,
    pub kernel_dim: usize,
    pub num_classes: usize,
    pub hyper: TrainingHyperparams,
    pub target_accuracy: f64,
    /// Absolute return tolerance; `None` means `1e-3 * batch size`.
    pub epsilon: Option<f64>,
    /// Use only the first `n` training points (0 keeps all).
    pub train_limit: usize,
    /// Use only the first `n` test points (0 keeps all).
    pub test_limit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dataset: "mnist".into(),
            data_dir: PathBuf::from("data/mnist"),
            n_clients: 30,
            max_comm_rate_bps: 216_000.0,
            comm_rate_ratio: 0.95,
            max_mac_rate: 3.072e6,
            mac_rate_ratio: 0.8,
            p_err: 0.1,
            alpha: 2.0,
            overhead: 0.1,
            bits_per_scalar: 32,
            scheme: Scheme::Coded,
            redundancy: 0.1,
            seed: 1,
            kernel_sigma: 5.0,
            kernel_dim: 2000,
            num_classes: 10,
            hyper: TrainingHyperparams::default(),
            target_accuracy: 0.942,
            epsilon: None,
            train_limit: 0,
            test_limit: 0,
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse {value:?}: {e}"))
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parse configuration text. `origin` labels error messages; relative
    /// `data_dir` values are resolved against `base_dir`.
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = SimConfig::default();
        let mut seen = HashSet::new();
        let mut data_dir_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config {
                path: origin.to_string(),
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value, base_dir, &mut data_dir_set).map_err(err)?;
        }
        if !data_dir_set {
            cfg.data_dir = base_dir.join(&cfg.data_dir);
        }
        cfg.validate().map_err(|e| Error::Config {
            path: origin.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base_dir: &Path, data_dir_set: &mut bool) -> std::result::Result<(), String> {
        match key {
            "dataset" => self.dataset = value.to_string(),
            "data_dir" => {
                self.data_dir = base_dir.join(value);
                *data_dir_set = true;
            }
            "n_clients" => self.n_clients = parse_value(value)?,
            "max_comm_rate_bps" => self.max_comm_rate_bps = parse_value(value)?,
            "comm_rate_ratio" => self.comm_rate_ratio = parse_value(value)?,
            "max_mac_rate" => self.max_mac_rate = parse_value(value)?,
            "mac_rate_ratio" => self.mac_rate_ratio = parse_value(value)?,
            "p_err" => self.p_err = parse_value(value)?,
            "alpha" => self.alpha = parse_value(value)?,
            "overhead" => self.overhead = parse_value(value)?,
            "bits_per_scalar" => self.bits_per_scalar = parse_value(value)?,
            "scheme" => self.scheme = parse_value(value)?,
            "redundancy" => self.redundancy = parse_value(value)?,
            "seed" => self.seed = parse_value(value)?,
            "kernel_sigma" => self.kernel_sigma = parse_value(value)?,
            "kernel_dim" => self.kernel_dim = parse_value(value)?,
            "num_classes" => self.num_classes = parse_value(value)?,
            "lambda" => self.hyper.lambda = parse_value(value)?,
            "lr0" => self.hyper.lr0 = parse_value(value)?,
            "lr_decay" => self.hyper.decay = parse_value(value)?,
            "decay_epochs" => {
                self.hyper.decay_epochs = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse_value(v.trim()))
                        .collect::<std::result::Result<_, _>>()?
                }
            }
            "epochs" => self.hyper.epochs_total = parse_value(value)?,
            "batch_size" => self.hyper.batch_size_global = parse_value(value)?,
            "target_accuracy" => self.target_accuracy = parse_value(value)?,
            "epsilon" => self.epsilon = Some(parse_value(value)?),
            "train_limit" => self.train_limit = parse_value(value)?,
            "test_limit" => self.test_limit = parse_value(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParameter(m));
        if self.n_clients == 0 {
            return fail("n_clients must be at least 1".into());
        }
        for (name, v) in [("comm_rate_ratio", self.comm_rate_ratio), ("mac_rate_ratio", self.mac_rate_ratio)] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("max_comm_rate_bps", self.max_comm_rate_bps),
            ("max_mac_rate", self.max_mac_rate),
            ("alpha", self.alpha),
            ("kernel_sigma", self.kernel_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.p_err) {
            return fail(format!("p_err must lie in [0, 1), got {}", self.p_err));
        }
        if !(self.overhead >= 0.0 && self.overhead.is_finite()) {
            return fail(format!("overhead must be non-negative, got {}", self.overhead));
        }
        if self.bits_per_scalar == 0 || self.kernel_dim == 0 || self.num_classes == 0 {
            return fail("bits_per_scalar, kernel_dim and num_classes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return fail(format!("redundancy must lie in [0, 1], got {}", self.redundancy));
        }
        if !self.hyper.batch_size_global.is_multiple_of(self.n_clients) {
            return fail(format!(
                "batch_size {} is not divisible by n_clients {}",
                self.hyper.batch_size_global, self.n_clients
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return fail(format!("epsilon must be positive, got {eps}"));
            }
        }
        self.hyper.validate()
    }

    /// Points each client contributes to one global batch.
    pub fn local_batch_size(&self) -> usize {
        self.hyper.batch_size_global / self.n_clients
    }

    /// Parity rows per global batch, `round(redundancy * batch size)`.
    pub fn coded_rows(&self) -> usize {
        (self.redundancy * self.hyper.batch_size_global as f64).round() as usize
    }

    /// Bits sent per transmission attempt: `q c b (1 + overhead)`.
    pub fn payload_bits(&self) -> f64 {
        (self.kernel_dim * self.num_classes) as f64 * self.bits_per_scalar as f64 * (1.0 + self.overhead)
    }

    /// Multiply-accumulates per processed point: `2 q c`.
    pub fn macs_per_point(&self) -> f64 {
        2.0 * (self.kernel_dim * self.num_classes) as f64
    }
}
