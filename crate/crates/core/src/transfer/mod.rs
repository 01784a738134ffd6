//! Simulated host/worker boundary.
//!
//! Every byte that moves between the master parameters and a worker copy
//! goes through [`TransferBoundary`], which appends one [`TransferRecord`] per
//! message to an append-only [`TransferLedger`]. Link time is modeled from a
//! [`LinkModel`]; pack and unpack times are measured wall-clock.

mod profile;

use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, PackedBlock, RoundTo};

pub use profile::{
    profile_report, render_table, Phase, PhaseRow, Profile, ProfileComparison, WallTimes,
};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid link model: {0}")]
    InvalidLink(String),
    #[error("ledger is empty")]
    EmptyLedger,
    #[error("bad ledger row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModel {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Seconds per message.
    pub latency: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        // roughly a PCIe 3.0 x16 link
        LinkModel {
            bandwidth: 12e9,
            latency: 10e-6,
        }
    }
}

impl LinkModel {
    pub fn new(bandwidth: f64, latency: f64) -> Result<Self, TransferError> {
        let link = LinkModel { bandwidth, latency };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(TransferError::InvalidLink(
                "bandwidth must be positive".into(),
            ));
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err(TransferError::InvalidLink(
                "latency must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn seconds(&self, wire_bytes: u64) -> f64 {
        self.latency + wire_bytes as f64 / self.bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Host (master parameters) to worker.
    ToWorker,
    /// Worker to host (gradient contributions).
    ToHost,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::ToWorker => "to_worker",
            Direction::ToHost => "to_host",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "to_worker" => Ok(Direction::ToWorker),
            "to_host" => Ok(Direction::ToHost),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Which parameters a message carries: the weight array of one layer, or a
/// bundle spanning every layer (biases, gradient contributions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerRef {
    Index(usize),
    All,
}

impl fmt::Display for LayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerRef::Index(i) => write!(f, "{i}"),
            LayerRef::All => f.write_str("all"),
        }
    }
}

impl FromStr for LayerRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(LayerRef::All);
        }
        s.parse()
            .map(LayerRef::Index)
            .map_err(|_| format!("bad layer {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub batch: u64,
    pub direction: Direction,
    pub layer: LayerRef,
    pub raw_bytes: u64,
    pub wire_bytes: u64,
    pub pack_seconds: f64,
    pub unpack_seconds: f64,
    pub modeled_link_seconds: f64,
}

impl TransferRecord {
    /// A to-worker message carrying one layer's weight array.
    pub fn is_weight_transfer(&self) -> bool {
        self.direction == Direction::ToWorker && matches!(self.layer, LayerRef::Index(_))
    }
}

/// Aggregated byte and time counts over a set of records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub messages: u64,
    pub raw_bytes: u64,
    pub wire_bytes: u64,
    pub pack_seconds: f64,
    pub unpack_seconds: f64,
    pub link_seconds: f64,
}

impl Totals {
    pub fn add(&mut self, r: &TransferRecord) {
        self.messages += 1;
        self.raw_bytes += r.raw_bytes;
        self.wire_bytes += r.wire_bytes;
        self.pack_seconds += r.pack_seconds;
        self.unpack_seconds += r.unpack_seconds;
        self.link_seconds += r.modeled_link_seconds;
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TransferRecord>) -> Self {
        let mut t = Totals::default();
        for r in records {
            t.add(r);
        }
        t
    }

    /// `raw / wire`, or 1 for an empty set.
    pub fn size_ratio(&self) -> f64 {
        if self.wire_bytes == 0 {
            1.0
        } else {
            self.raw_bytes as f64 / self.wire_bytes as f64
        }
    }
}

/// Append-only record list. Appends take a lock so concurrent workers can
/// share one ledger.
#[derive(Debug, Default)]
pub struct TransferLedger {
    records: Mutex<Vec<TransferRecord>>,
}

pub const LEDGER_HEADER: [&str; 8] = [
    "batch",
    "direction",
    "layer",
    "raw_bytes",
    "wire_bytes",
    "pack_s",
    "unpack_s",
    "link_s",
];

impl TransferLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<TransferRecord>) -> Self {
        TransferLedger {
            records: Mutex::new(records),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Vec<TransferRecord>> {
        self.records.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn append(&self, record: TransferRecord) {
        self.lock().push(record);
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn records(&self) -> Vec<TransferRecord> {
        self.lock().clone()
    }

    pub fn totals(&self) -> Totals {
        Totals::from_records(self.lock().iter())
    }

    pub fn totals_where(&self, pred: impl Fn(&TransferRecord) -> bool) -> Totals {
        Totals::from_records(self.lock().iter().filter(|r| pred(r)))
    }

    pub fn batch_totals(&self, batch: u64) -> Totals {
        self.totals_where(|r| r.batch == batch)
    }

    pub fn weight_totals(&self) -> Totals {
        self.totals_where(TransferRecord::is_weight_transfer)
    }

    pub fn direction_totals(&self, direction: Direction) -> Totals {
        self.totals_where(|r| r.direction == direction)
    }

    /// Writes the ledger CSV. With `with_timings == false` the measured
    /// `pack_s`/`unpack_s` columns are written as 0 so the file depends only
    /// on the run's inputs.
    pub fn write_csv<W: io::Write>(&self, out: W, with_timings: bool) -> Result<(), TransferError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LEDGER_HEADER)?;
        for r in self.lock().iter() {
            let (pack, unpack) = if with_timings {
                (r.pack_seconds, r.unpack_seconds)
            } else {
                (0.0, 0.0)
            };
            w.write_record(&[
                r.batch.to_string(),
                r.direction.to_string(),
                r.layer.to_string(),
                r.raw_bytes.to_string(),
                r.wire_bytes.to_string(),
                pack.to_string(),
                unpack.to_string(),
                r.modeled_link_seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path, with_timings: bool) -> Result<(), TransferError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(io::BufWriter::new(f), with_timings)
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self, TransferError> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers()?.clone();
        if headers.iter().ne(LEDGER_HEADER.iter().copied()) {
            return Err(TransferError::BadRow {
                row: 0,
                msg: format!("expected header {}", LEDGER_HEADER.join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let bad = |msg: String| TransferError::BadRow { row: i + 1, msg };
            let field = |k: usize| row.get(k).ok_or_else(|| bad(format!("missing column {k}")));
            let num = |k: usize| -> Result<f64, TransferError> {
                field(k)?
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{}: {e}", LEDGER_HEADER[k])))
            };
            let int = |k: usize| -> Result<u64, TransferError> {
                field(k)?
                    .parse::<u64>()
                    .map_err(|e| bad(format!("{}: {e}", LEDGER_HEADER[k])))
            };
            records.push(TransferRecord {
                batch: int(0)?,
                direction: field(1)?.parse().map_err(&bad)?,
                layer: field(2)?.parse().map_err(&bad)?,
                raw_bytes: int(3)?,
                wire_bytes: int(4)?,
                pack_seconds: num(5)?,
                unpack_seconds: num(6)?,
                modeled_link_seconds: num(7)?,
            });
        }
        Ok(Self::from_records(records))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self, TransferError> {
        Self::read_csv(io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// The only path between master parameters and worker copies.
#[derive(Debug)]
pub struct TransferBoundary {
    link: LinkModel,
    ledger: TransferLedger,
}

impl TransferBoundary {
    pub fn new(link: LinkModel) -> Self {
        TransferBoundary {
            link,
            ledger: TransferLedger::new(),
        }
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn ledger(&self) -> &TransferLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> TransferLedger {
        self.ledger
    }

    /// Sends an already packed block to a worker. The block is framed, so
    /// `wire_bytes` includes the container header.
    pub fn send_weights(
        &self,
        batch: u64,
        layer: usize,
        block: PackedBlock,
        pack_seconds: f64,
    ) -> (PackedBlock, TransferRecord) {
        let record = self.weight_record(batch, layer, &block, pack_seconds, 0.0);
        self.ledger.append(record.clone());
        (block, record)
    }

    fn weight_record(
        &self,
        batch: u64,
        layer: usize,
        block: &PackedBlock,
        pack_seconds: f64,
        unpack_seconds: f64,
    ) -> TransferRecord {
        let wire = block.framed_bytes() as u64;
        TransferRecord {
            batch,
            direction: Direction::ToWorker,
            layer: LayerRef::Index(layer),
            raw_bytes: block.raw_bytes() as u64,
            wire_bytes: wire,
            pack_seconds,
            unpack_seconds,
            modeled_link_seconds: self.link.seconds(wire),
        }
    }

    /// Packs `master` at `round_to`, crosses the link and unpacks into
    /// `worker`. Pack and unpack are timed and land in the same record.
    pub fn transfer_weights(
        &self,
        batch: u64,
        layer: usize,
        master: &[f32],
        round_to: RoundTo,
        pack_workers: usize,
        worker: &mut [f32],
    ) -> Result<TransferRecord, TransferError> {
        let t = Instant::now();
        let block = codec::pack_parallel(master, round_to, pack_workers.max(1));
        let pack_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        codec::unpack_into(&block, worker)?;
        let unpack_seconds = t.elapsed().as_secs_f64();

        let record = self.weight_record(batch, layer, &block, pack_seconds, unpack_seconds);
        self.ledger.append(record.clone());
        Ok(record)
    }

    /// Uncompressed copy of `src` into `dst` (biases, 32-bit baseline weights,
    /// gradient contributions). No container header.
    pub fn transfer_raw(
        &self,
        batch: u64,
        direction: Direction,
        layer: LayerRef,
        src: &[f32],
        dst: &mut [f32],
    ) -> TransferRecord {
        dst.copy_from_slice(src);
        self.record_raw(batch, direction, layer, std::mem::size_of_val(src) as u64)
    }

    /// Accounts an uncompressed message of `bytes` bytes whose data the caller
    /// moves itself.
    pub fn record_raw(
        &self,
        batch: u64,
        direction: Direction,
        layer: LayerRef,
        bytes: u64,
    ) -> TransferRecord {
        let record = TransferRecord {
            batch,
            direction,
            layer,
            raw_bytes: bytes,
            wire_bytes: bytes,
            pack_seconds: 0.0,
            unpack_seconds: 0.0,
            modeled_link_seconds: self.link.seconds(bytes),
        };
        self.ledger.append(record.clone());
        record
    }
}
