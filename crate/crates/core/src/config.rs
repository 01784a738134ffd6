//! Run configuration, stored as a sectioned key-value (TOML) file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awp::AwpConfig;
use crate::codec::RoundTo;
use crate::data::SyntheticBlobs;
use crate::nn::SgdConfig;
use crate::transfer::LinkModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

/// Which weights reach the workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    /// Uncompressed 32-bit transfers.
    Baseline,
    /// Codec pinned to one bit width for every layer.
    OracleFixedBits(u32),
    /// Codec driven by the adaptive precision controller.
    A2dtwp,
}

impl Mode {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Mode::A2dtwp)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Baseline => f.write_str("baseline"),
            Mode::OracleFixedBits(b) => write!(f, "oracle_fixed_bits({b})"),
            Mode::A2dtwp => f.write_str("a2dtwp"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "baseline" => return Ok(Mode::Baseline),
            "a2dtwp" => return Ok(Mode::A2dtwp),
            _ => {}
        }
        let bits = s
            .strip_prefix("oracle_fixed_bits(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| {
                format!(
                    "unknown mode {s:?}; expected baseline, a2dtwp or oracle_fixed_bits(<bits>)"
                )
            })?;
        let bits: u32 = bits
            .trim()
            .parse()
            .map_err(|e| format!("bad bit width in {s:?}: {e}"))?;
        RoundTo::from_bits(bits).map_err(|e| e.to_string())?;
        Ok(Mode::OracleFixedBits(bits))
    }
}

impl TryFrom<String> for Mode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset file (`.csv` or flat binary). Empty means generate blobs.
    pub path: Option<PathBuf>,
    pub val_fraction: f64,
    pub synthetic: SyntheticBlobs,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            val_fraction: 0.2,
            synthetic: SyntheticBlobs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    /// Standard deviation of the initial weights.
    pub init_std: f32,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![64, 32],
            init_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write measured pack/unpack times into the ledger and metrics CSVs.
    /// Off by default so that those files are reproducible byte for byte.
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Required before a run; usually supplied on the command line.
    pub seed: Option<u64>,
    pub epochs: usize,
    pub workers: usize,
    pub pack_workers: usize,
    pub data: DataConfig,
    pub net: NetConfig,
    pub sgd: SgdConfig,
    pub awp: AwpConfig,
    pub link: LinkModel,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::A2dtwp,
            seed: None,
            epochs: 10,
            workers: 1,
            pack_workers: 1,
            data: DataConfig::default(),
            net: NetConfig::default(),
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            awp: AwpConfig::default(),
            link: LinkModel::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::Invalid {
            field: "seed",
            msg: "a seed is required".into(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(field: &'static str, msg: impl ToString) -> ConfigError {
            ConfigError::Invalid {
                field,
                msg: msg.to_string(),
            }
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be positive"));
        }
        if self.pack_workers == 0 {
            return Err(invalid("pack_workers", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(invalid("data.val_fraction", "must be in [0, 1)"));
        }
        let syn = &self.data.synthetic;
        if self.data.path.is_none() && (syn.samples == 0 || syn.classes == 0 || syn.features == 0) {
            return Err(invalid(
                "data.synthetic",
                "samples, classes and features must be positive",
            ));
        }
        if self.net.hidden.contains(&0) {
            return Err(invalid("net.hidden", "layer widths must be positive"));
        }
        if !(self.net.init_std.is_finite() && self.net.init_std > 0.0) {
            return Err(invalid("net.init_std", "must be positive"));
        }
        let s = &self.sgd;
        if !(s.learning_rate.is_finite() && s.learning_rate >= 0.0) {
            return Err(invalid("sgd.learning_rate", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(invalid("sgd.momentum", "must be in [0, 1)"));
        }
        if !(s.weight_decay.is_finite() && s.weight_decay >= 0.0) {
            return Err(invalid("sgd.weight_decay", "must be non-negative"));
        }
        if s.batch_size == 0 {
            return Err(invalid("sgd.batch_size", "must be positive"));
        }
        if !(s.lr_decay_factor.is_finite() && s.lr_decay_factor > 0.0) {
            return Err(invalid("sgd.lr_decay_factor", "must be positive"));
        }
        self.awp.validate().map_err(|e| {
            invalid(
                "awp",
                e.to_string().trim_start_matches("invalid awp config: "),
            )
        })?;
        if !(self.link.bandwidth.is_finite() && self.link.bandwidth > 0.0) {
            return Err(invalid("link.bandwidth", "must be positive"));
        }
        if !(self.link.latency.is_finite() && self.link.latency >= 0.0) {
            return Err(invalid("link.latency", "must be non-negative"));
        }
        Ok(())
    }
}
