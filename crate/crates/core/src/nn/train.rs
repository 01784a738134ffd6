//! Batch pipeline with a simulated host/worker split.
//!
//! Per batch:
//!
//! 1. every layer's master weights cross the [`TransferBoundary`] into each
//!    worker's copy, packed at the width the precision policy picks (biases
//!    cross uncompressed),
//! 2. the batch is partitioned across the workers, each computing a
//!    gradient contribution on its (possibly truncated) copy,
//! 3. contributions travel back uncompressed and update the full-precision
//!    master weights,
//! 4. the adaptive controller, if any, observes the master-weight norms.
//!
//! Workers run one after another in-process.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{GradientSet, Network};
use super::reduce;
use super::sgd::{Sgd, SgdConfig};
use super::NnError;
use crate::awp::{self, AwpController, TraceRow};
use crate::codec::RoundTo;
use crate::data::Dataset;
use crate::transfer::{
    Direction, LayerRef, LinkModel, TransferBoundary, TransferLedger, WallTimes,
};

/// How master weights are encoded on their way to the workers.
#[derive(Debug, Clone)]
pub enum PrecisionPolicy {
    /// Raw 32-bit copy, no codec.
    Baseline,
    /// Codec at one fixed width for every layer.
    Fixed(RoundTo),
    /// Codec at the width chosen per layer by the controller.
    Adaptive(AwpController),
}

impl PrecisionPolicy {
    fn round_to(&self, layer: usize) -> Result<Option<RoundTo>, NnError> {
        Ok(match self {
            PrecisionPolicy::Baseline => None,
            PrecisionPolicy::Fixed(r) => Some(*r),
            PrecisionPolicy::Adaptive(ctl) => Some(ctl.current_round_to(layer)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Batches processed since the start of training.
    pub batches: u64,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub val_top1: f64,
    /// Wire bytes of every message this epoch, both directions.
    pub bytes_sent: u64,
    /// Measured pack + unpack time this epoch.
    pub codec_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainerOptions {
    pub sgd: SgdConfig,
    /// Simulated workers the batch is split across.
    pub workers: usize,
    /// Threads used by the packing step.
    pub pack_workers: usize,
    pub link: LinkModel,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        TrainerOptions {
            sgd: SgdConfig::default(),
            workers: 1,
            pack_workers: 1,
            link: LinkModel::default(),
            seed: 0,
        }
    }
}

pub struct Trainer {
    master: Network,
    workers: Vec<Network>,
    opt: Sgd,
    policy: PrecisionPolicy,
    boundary: TransferBoundary,
    pack_workers: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    batch: u64,
    epoch: usize,
    trace: Vec<TraceRow>,
    wall: WallTimes,
    batch_x: Vec<f32>,
    batch_y: Vec<u32>,
}

impl Trainer {
    pub fn new(
        master: Network,
        policy: PrecisionPolicy,
        options: TrainerOptions,
    ) -> Result<Self, NnError> {
        if options.workers == 0 {
            return Err(NnError::InvalidConfig("workers must be positive".into()));
        }
        options.link.validate()?;
        if let PrecisionPolicy::Adaptive(ctl) = &policy {
            if ctl.num_layers() != master.num_layers() {
                return Err(NnError::InvalidConfig(format!(
                    "controller tracks {} layers, network has {}",
                    ctl.num_layers(),
                    master.num_layers()
                )));
            }
        }
        let opt = Sgd::new(options.sgd.clone(), &master)?;
        let wall = WallTimes {
            awp_norm_s: matches!(policy, PrecisionPolicy::Adaptive(_)).then_some(0.0),
            pack_s: (!matches!(policy, PrecisionPolicy::Baseline)).then_some(0.0),
            unpack_s: (!matches!(policy, PrecisionPolicy::Baseline)).then_some(0.0),
            ..WallTimes::default()
        };
        Ok(Trainer {
            workers: vec![master.clone(); options.workers],
            master,
            opt,
            policy,
            boundary: TransferBoundary::new(options.link),
            pack_workers: options.pack_workers.max(1),
            batch_size: options.sgd.batch_size,
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            batch: 0,
            epoch: 0,
            trace: Vec::new(),
            wall,
            batch_x: Vec::new(),
            batch_y: Vec::new(),
        })
    }

    pub fn master(&self) -> &Network {
        &self.master
    }

    /// Copy held by worker `d` after the last distribution.
    pub fn worker(&self, d: usize) -> &Network {
        &self.workers[d]
    }

    pub fn policy(&self) -> &PrecisionPolicy {
        &self.policy
    }

    pub fn ledger(&self) -> &TransferLedger {
        self.boundary.ledger()
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn wall_times(&self) -> &WallTimes {
        &self.wall
    }

    pub fn batches_done(&self) -> u64 {
        self.batch
    }

    pub fn into_parts(self) -> (Network, TransferLedger, Vec<TraceRow>, WallTimes) {
        (
            self.master,
            self.boundary.into_ledger(),
            self.trace,
            self.wall,
        )
    }

    /// One shuffled pass over `train`, then top-1 accuracy on `val` using the
    /// master weights.
    pub fn train_epoch(&mut self, train: &Dataset, val: &Dataset) -> Result<EpochStats, NnError> {
        if train.is_empty() {
            return Err(NnError::ShapeMismatch("empty training set".into()));
        }
        let first_batch = self.batch;
        let ledger_start = self.ledger().len();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let mut loss_sum = 0.0;
        let mut x = std::mem::take(&mut self.batch_x);
        let mut y = std::mem::take(&mut self.batch_y);
        for idx in order.chunks(self.batch_size) {
            train.gather(idx, &mut x, &mut y);
            loss_sum += self.step(&x, &y)?;
        }
        self.batch_x = x;
        self.batch_y = y;

        let records = self.ledger().records();
        let epoch_records = &records[ledger_start..];
        debug_assert!(epoch_records.iter().all(|r| r.batch >= first_batch));
        let stats = EpochStats {
            epoch: self.epoch,
            batches: self.batch,
            loss: loss_sum / train.len() as f64,
            val_top1: if val.is_empty() {
                f64::NAN
            } else {
                evaluate(&self.master, val)?
            },
            bytes_sent: epoch_records.iter().map(|r| r.wire_bytes).sum(),
            codec_seconds: epoch_records
                .iter()
                .map(|r| r.pack_seconds + r.unpack_seconds)
                .sum(),
        };
        self.epoch += 1;
        Ok(stats)
    }

    /// Runs one batch through the full pipeline. Returns the summed sample
    /// loss of the batch.
    pub fn step(&mut self, inputs: &[f32], labels: &[u32]) -> Result<f64, NnError> {
        let dim = self.master.input_dim();
        if labels.is_empty() || inputs.len() != labels.len() * dim {
            return Err(NnError::ShapeMismatch(format!(
                "batch of {} labels with {} feature values (width {dim})",
                labels.len(),
                inputs.len()
            )));
        }
        let loop_start = Instant::now();
        let batch = self.batch;

        // 1. distribute
        let mut pack_s = 0.0;
        let mut unpack_s = 0.0;
        for worker in &mut self.workers {
            let mut bias_bytes = 0u64;
            for (l, (ml, wl)) in self
                .master
                .layers()
                .iter()
                .zip(worker.layers_mut())
                .enumerate()
            {
                match self.policy.round_to(l)? {
                    None => {
                        self.boundary.transfer_raw(
                            batch,
                            Direction::ToWorker,
                            LayerRef::Index(l),
                            &ml.weights,
                            &mut wl.weights,
                        );
                    }
                    Some(r) => {
                        let rec = self.boundary.transfer_weights(
                            batch,
                            l,
                            &ml.weights,
                            r,
                            self.pack_workers,
                            &mut wl.weights,
                        )?;
                        pack_s += rec.pack_seconds;
                        unpack_s += rec.unpack_seconds;
                    }
                }
                wl.biases.copy_from_slice(&ml.biases);
                bias_bytes += 4 * ml.biases.len() as u64;
            }
            self.boundary
                .record_raw(batch, Direction::ToWorker, LayerRef::All, bias_bytes);
        }
        if let Some(p) = self.wall.pack_s.as_mut() {
            *p += pack_s;
        }
        if let Some(u) = self.wall.unpack_s.as_mut() {
            *u += unpack_s;
        }

        // 2. per-worker contributions
        let ranges = reduce::partition(labels.len(), self.workers.len());
        let mut contributions: Vec<GradientSet> = Vec::with_capacity(ranges.len());
        for (worker, range) in self.workers.iter().zip(ranges) {
            if range.is_empty() {
                continue;
            }
            let t = Instant::now();
            let pass =
                worker.forward(&inputs[range.start * dim..range.end * dim], &labels[range])?;
            self.wall.forward_s += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let grad = worker.backward(&pass)?;
            self.wall.backward_s += t.elapsed().as_secs_f64();

            self.boundary.record_raw(
                batch,
                Direction::ToHost,
                LayerRef::All,
                grad.byte_len() as u64,
            );
            contributions.push(grad);
        }
        let loss_sum: f64 = {
            let parts: Vec<Option<&GradientSet>> = contributions.iter().map(Some).collect();
            reduce::reduce_partials(&parts).map_or(0.0, |g| g.loss_sum)
        };

        // 3. update master weights
        let t = Instant::now();
        self.opt
            .gather_and_update(&mut self.master, &contributions)?;
        self.wall.update_s += t.elapsed().as_secs_f64();

        // 4. controller
        if let PrecisionPolicy::Adaptive(ctl) = &mut self.policy {
            let t = Instant::now();
            let norms: Vec<f64> = self
                .master
                .layers()
                .iter()
                .map(|l| awp::l2_norm(&l.weights))
                .collect();
            let observations = ctl.observe_layers(&norms)?;
            *self.wall.awp_norm_s.as_mut().unwrap() += t.elapsed().as_secs_f64();
            for layer in 0..norms.len() {
                let g = ctl.group_of(layer)?;
                self.trace
                    .push(TraceRow::new(batch, layer, &observations[g]));
            }
        }

        self.wall.loop_wall_s += loop_start.elapsed().as_secs_f64();
        self.wall.batches += 1;
        self.batch += 1;
        Ok(loss_sum)
    }
}

/// Top-1 accuracy of `net` on `data`.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::ShapeMismatch("empty evaluation set".into()));
    }
    let mut hits = 0usize;
    let chunk = 1024;
    for start in (0..data.len()).step_by(chunk) {
        let end = (start + chunk).min(data.len());
        let preds = net.predict(&data.features()[start * data.dim()..end * data.dim()])?;
        hits += preds
            .iter()
            .zip(&data.labels()[start..end])
            .filter(|(&p, &y)| p == y as usize)
            .count();
    }
    Ok(hits as f64 / data.len() as f64)
}
