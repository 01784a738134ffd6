//! End-to-end experiment runner and its on-disk outputs.
//!
//! A run directory holds:
//!
//! - `metrics.csv`: `epoch,batch,loss,val_top1,bytes_sent,codec_ms`
//! - `awp_trace.csv`: `batch,layer,norm,delta,counter,bits`
//! - `ledger.csv`: one row per boundary message
//! - `profile.json`: mode plus measured wall times
//!
//! The three CSVs depend only on the config and seed unless
//! `output.record_timings` is set.

use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awp::{AwpController, TraceRow};
use crate::codec::RoundTo;
use crate::config::{ConfigError, Mode, RunConfig};
use crate::data::{DataError, Dataset};
use crate::nn::{EpochStats, Network, NnError, PrecisionPolicy, Trainer, TrainerOptions};
use crate::transfer::{profile_report, Profile, TransferError, TransferLedger, WallTimes};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACE_FILE: &str = "awp_trace.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const PROFILE_FILE: &str = "profile.json";

pub const METRICS_HEADER: &str = "epoch,batch,loss,val_top1,bytes_sent,codec_ms";
pub const TRACE_HEADER: &str = "batch,layer,norm,delta,counter,bits";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {msg}")]
    BadFile { path: String, msg: String },
}

/// Seeds derived from the run seed, one per random consumer.
struct Seeds {
    data: u64,
    split: u64,
    init: u64,
    shuffle: u64,
}

impl Seeds {
    fn new(seed: u64) -> Self {
        Seeds {
            data: seed,
            split: seed.wrapping_add(1),
            init: seed.wrapping_add(2),
            shuffle: seed.wrapping_add(3),
        }
    }
}

/// Dataset split and initial network for a config. Runs that share a seed
/// share both, whatever their mode.
pub fn prepare(config: &RunConfig) -> Result<(Dataset, Dataset, Network), RunError> {
    config.validate()?;
    let seeds = Seeds::new(config.seed()?);
    let data = match &config.data.path {
        Some(p) => Dataset::load(p)?,
        None => config.data.synthetic.generate(seeds.data)?,
    };
    let (train, val) = data.split(config.data.val_fraction, seeds.split)?;
    let classes = match config.data.path {
        Some(_) => data.classes(),
        None => config.data.synthetic.classes,
    }
    .max(2);
    let mut sizes = vec![data.dim()];
    sizes.extend(&config.net.hidden);
    sizes.push(classes);
    let net = Network::init_normal(
        &sizes,
        config.net.init_std,
        &mut ChaCha8Rng::seed_from_u64(seeds.init),
    )?;
    Ok((train, val, net))
}

pub fn policy_for(config: &RunConfig, layers: usize) -> Result<PrecisionPolicy, RunError> {
    Ok(match config.mode {
        Mode::Baseline => PrecisionPolicy::Baseline,
        Mode::OracleFixedBits(bits) => {
            PrecisionPolicy::Fixed(RoundTo::from_bits(bits).map_err(|e| ConfigError::Invalid {
                field: "mode",
                msg: e.to_string(),
            })?)
        }
        Mode::A2dtwp => PrecisionPolicy::Adaptive(
            AwpController::new(config.awp.clone(), layers).map_err(NnError::from)?,
        ),
    })
}

pub fn trainer_options(config: &RunConfig) -> Result<TrainerOptions, RunError> {
    Ok(TrainerOptions {
        sgd: config.sgd.clone(),
        workers: config.workers,
        pack_workers: config.pack_workers,
        link: config.link,
        seed: Seeds::new(config.seed()?).shuffle,
    })
}

pub struct RunOutput {
    pub config: RunConfig,
    pub metrics: Vec<EpochStats>,
    pub trace: Vec<TraceRow>,
    pub ledger: TransferLedger,
    pub wall: WallTimes,
    pub network: Network,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub mode: Mode,
    pub seed: u64,
    pub final_val_top1: f64,
    pub wall: WallTimes,
}

pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    let (train, val, net) = prepare(config)?;
    let policy = policy_for(config, net.num_layers())?;
    let mut trainer = Trainer::new(net, policy, trainer_options(config)?)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        metrics.push(trainer.train_epoch(&train, &val)?);
    }
    let (network, ledger, trace, wall) = trainer.into_parts();
    Ok(RunOutput {
        config: config.clone(),
        metrics,
        trace,
        ledger,
        wall,
        network,
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl RunOutput {
    pub fn final_val_top1(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.val_top1)
    }

    pub fn profile(&self) -> Result<Profile, RunError> {
        Ok(profile_report(&self.ledger, &self.wall)?)
    }

    pub fn write_metrics<W: Write>(&self, mut out: W) -> io::Result<()> {
        let timings = self.config.output.record_timings;
        writeln!(out, "{METRICS_HEADER}")?;
        for m in &self.metrics {
            let codec_ms = if timings { m.codec_seconds * 1e3 } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                m.epoch, m.batches, m.loss, m.val_top1, m.bytes_sent, codec_ms
            )?;
        }
        Ok(())
    }

    pub fn write_trace<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.trace {
            let delta = r.delta.map(|d| d.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.batch, r.layer, r.norm, delta, r.counter, r.bits
            )?;
        }
        Ok(())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let create = |name: &str| -> Result<io::BufWriter<std::fs::File>, RunError> {
            let p = dir.join(name);
            Ok(io::BufWriter::new(
                std::fs::File::create(&p).map_err(io_err(&p))?,
            ))
        };

        let p = dir.join(METRICS_FILE);
        let mut f = create(METRICS_FILE)?;
        self.write_metrics(&mut f)
            .and_then(|_| f.flush())
            .map_err(io_err(&p))?;

        let p = dir.join(TRACE_FILE);
        let mut f = create(TRACE_FILE)?;
        self.write_trace(&mut f)
            .and_then(|_| f.flush())
            .map_err(io_err(&p))?;

        self.ledger
            .write_csv_file(&dir.join(LEDGER_FILE), self.config.output.record_timings)?;

        let profile = ProfileFile {
            mode: self.config.mode,
            seed: self.config.seed()?,
            final_val_top1: self.final_val_top1(),
            wall: self.wall.clone(),
        };
        let p = dir.join(PROFILE_FILE);
        let mut f = create(PROFILE_FILE)?;
        serde_json::to_writer_pretty(&mut f, &profile)
            .map_err(io::Error::from)
            .and_then(|_| f.flush())
            .map_err(io_err(&p))?;
        Ok(())
    }
}

/// A run directory read back for reporting.
pub struct RunArtifacts {
    pub profile_file: ProfileFile,
    pub ledger: TransferLedger,
}

impl RunArtifacts {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let p = dir.join(PROFILE_FILE);
        let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
        let profile_file: ProfileFile =
            serde_json::from_str(&text).map_err(|e| RunError::BadFile {
                path: p.display().to_string(),
                msg: e.to_string(),
            })?;
        let ledger = TransferLedger::read_csv_file(&dir.join(LEDGER_FILE))?;
        Ok(RunArtifacts {
            profile_file,
            ledger,
        })
    }

    pub fn profile(&self) -> Result<Profile, RunError> {
        Ok(profile_report(&self.ledger, &self.profile_file.wall)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticBlobs;

    fn small(mode: Mode) -> RunConfig {
        let mut cfg = RunConfig {
            mode,
            seed: Some(9),
            epochs: 2,
            ..RunConfig::default()
        };
        cfg.data.synthetic = SyntheticBlobs {
            samples: 200,
            features: 6,
            ..SyntheticBlobs::default()
        };
        cfg.net.hidden = vec![8, 8];
        cfg
    }

    #[test]
    fn seed_is_required() {
        let mut cfg = small(Mode::Baseline);
        cfg.seed = None;
        assert!(matches!(
            run(&cfg),
            Err(RunError::Config(ConfigError::Invalid { field: "seed", .. }))
        ));
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small(Mode::A2dtwp)).unwrap();
        out.write_dir(dir.path()).unwrap();
        for f in [METRICS_FILE, TRACE_FILE, LEDGER_FILE, PROFILE_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(metrics.lines().count(), 3);
        assert!(metrics.starts_with(METRICS_HEADER));

        let back = RunArtifacts::load(dir.path()).unwrap();
        let bytes = |l: &TransferLedger| -> Vec<(u64, u64, u64)> {
            l.records()
                .iter()
                .map(|r| (r.batch, r.raw_bytes, r.wire_bytes))
                .collect()
        };
        assert_eq!(bytes(&back.ledger), bytes(&out.ledger));
        assert_eq!(back.ledger.totals().pack_seconds, 0.0);
        assert_eq!(back.profile_file.wall, out.wall);
        assert_eq!(
            back.profile().unwrap().weight_wire_bytes,
            out.profile().unwrap().weight_wire_bytes
        );
    }

    #[test]
    fn trace_first_delta_is_blank() {
        let out = run(&small(Mode::A2dtwp)).unwrap();
        let mut buf = Vec::new();
        out.write_trace(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = first.split(',').collect();
        assert_eq!(cols[0], "0");
        assert_eq!(cols[3], "");
        assert_eq!(cols[5], "8");
    }
}
