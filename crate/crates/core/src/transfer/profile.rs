//! Per-phase performance profile of a training run, shaped like a
//! "32-bit FP vs adaptive" kernel breakdown: two transfer directions, the
//! three compute phases, the norm computation and the two codec steps.
//!
//! Transfer phases come from the ledger's modeled link time; everything else
//! is measured wall-clock collected by the trainer.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{Direction, TransferError, TransferLedger};

/// Measured wall-clock totals of one run, in seconds. `None` marks a phase
/// the run never executes (no codec in the 32-bit baseline, no norm
/// tracking without the adaptive controller).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub batches: u64,
    /// Measured time of the batch loop bodies (parameter distribution through
    /// controller update).
    pub loop_wall_s: f64,
    pub forward_s: f64,
    pub backward_s: f64,
    pub update_s: f64,
    pub awp_norm_s: Option<f64>,
    pub pack_s: Option<f64>,
    pub unpack_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    TransferToWorker,
    TransferToHost,
    Forward,
    Backward,
    Update,
    AwpNorm,
    AdtPack,
    AdtUnpack,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::TransferToWorker,
        Phase::TransferToHost,
        Phase::Forward,
        Phase::Backward,
        Phase::Update,
        Phase::AwpNorm,
        Phase::AdtPack,
        Phase::AdtUnpack,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::TransferToWorker => "Data transfer host->worker",
            Phase::TransferToHost => "Data transfer worker->host",
            Phase::Forward => "Forward",
            Phase::Backward => "Backward",
            Phase::Update => "Gradient update",
            Phase::AwpNorm => "AWP (l2-norm)",
            Phase::AdtPack => "ADT (pack)",
            Phase::AdtUnpack => "ADT (unpack)",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub phase: Phase,
    pub total_s: Option<f64>,
    pub per_batch_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub batches: u64,
    pub phases: Vec<PhaseRow>,
    /// Sum of all phase totals.
    pub phase_sum_s: f64,
    /// Measured loop time plus modeled link time.
    pub accounted_wall_s: f64,
    pub weight_raw_bytes: u64,
    pub weight_wire_bytes: u64,
    /// `weight_raw_bytes / weight_wire_bytes`.
    pub weight_size_ratio: f64,
    pub to_worker_wire_bytes: u64,
    pub to_host_wire_bytes: u64,
}

impl Profile {
    pub fn phase(&self, phase: Phase) -> Option<f64> {
        self.phases
            .iter()
            .find(|r| r.phase == phase)
            .and_then(|r| r.total_s)
    }

    /// `phase_sum_s / accounted_wall_s`.
    pub fn coverage(&self) -> f64 {
        if self.accounted_wall_s > 0.0 {
            self.phase_sum_s / self.accounted_wall_s
        } else {
            1.0
        }
    }
}

pub fn profile_report(ledger: &TransferLedger, wall: &WallTimes) -> Result<Profile, TransferError> {
    if ledger.is_empty() {
        return Err(TransferError::EmptyLedger);
    }
    let to_worker = ledger.direction_totals(Direction::ToWorker);
    let to_host = ledger.direction_totals(Direction::ToHost);
    let weights = ledger.weight_totals();

    let batches = wall.batches.max(1) as f64;
    let phases: Vec<PhaseRow> = Phase::ALL
        .iter()
        .map(|&phase| {
            let total = match phase {
                Phase::TransferToWorker => Some(to_worker.link_seconds),
                Phase::TransferToHost => Some(to_host.link_seconds),
                Phase::Forward => Some(wall.forward_s),
                Phase::Backward => Some(wall.backward_s),
                Phase::Update => Some(wall.update_s),
                Phase::AwpNorm => wall.awp_norm_s,
                Phase::AdtPack => wall.pack_s,
                Phase::AdtUnpack => wall.unpack_s,
            };
            PhaseRow {
                phase,
                total_s: total,
                per_batch_ms: total.map(|t| t * 1e3 / batches),
            }
        })
        .collect();
    let phase_sum_s = phases.iter().filter_map(|r| r.total_s).sum();

    Ok(Profile {
        batches: wall.batches,
        phases,
        phase_sum_s,
        accounted_wall_s: wall.loop_wall_s + to_worker.link_seconds + to_host.link_seconds,
        weight_raw_bytes: weights.raw_bytes,
        weight_wire_bytes: weights.wire_bytes,
        weight_size_ratio: weights.size_ratio(),
        to_worker_wire_bytes: to_worker.wire_bytes,
        to_host_wire_bytes: to_host.wire_bytes,
    })
}

/// Baseline and adaptive profiles side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub baseline: Profile,
    pub adaptive: Profile,
    /// Baseline weight wire bytes over adaptive weight wire bytes.
    pub weight_stream_ratio: f64,
    /// Baseline over adaptive host->worker link time.
    pub transfer_to_worker_speedup: f64,
}

impl ProfileComparison {
    pub fn new(baseline: Profile, adaptive: Profile) -> Self {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
        ProfileComparison {
            weight_stream_ratio: ratio(
                baseline.weight_wire_bytes as f64,
                adaptive.weight_wire_bytes as f64,
            ),
            transfer_to_worker_speedup: ratio(
                baseline.phase(Phase::TransferToWorker).unwrap_or(0.0),
                adaptive.phase(Phase::TransferToWorker).unwrap_or(0.0),
            ),
            baseline,
            adaptive,
        }
    }
}

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table of one or two profiles, average ms per batch.
pub fn render_table(columns: &[(&str, &Profile)]) -> String {
    let mut out = String::new();
    let width = 28;
    let _ = write!(out, "{:<width$}", "phase (ms per batch)");
    for (name, _) in columns {
        let _ = write!(out, " {name:>16}");
    }
    out.push('\n');
    for phase in Phase::ALL {
        let _ = write!(out, "{:<width$}", phase.label());
        for (_, p) in columns {
            let v = p
                .phases
                .iter()
                .find(|r| r.phase == phase)
                .and_then(|r| r.per_batch_ms);
            let _ = write!(out, " {:>16}", ms(v));
        }
        out.push('\n');
    }
    let mut row = |label: &str, f: &dyn Fn(&Profile) -> String| {
        let _ = write!(out, "{label:<width$}");
        for (_, p) in columns {
            let _ = write!(out, " {:>16}", f(p));
        }
        out.push('\n');
    };
    row("sum of phases (ms/batch)", &|p| {
        format!("{:.4}", p.phase_sum_s * 1e3 / p.batches.max(1) as f64)
    });
    row("accounted wall (ms/batch)", &|p| {
        format!("{:.4}", p.accounted_wall_s * 1e3 / p.batches.max(1) as f64)
    });
    row("phase coverage", &|p| {
        format!("{:.2}%", p.coverage() * 100.0)
    });
    row("batches", &|p| p.batches.to_string());
    row("weight raw bytes", &|p| p.weight_raw_bytes.to_string());
    row("weight wire bytes", &|p| p.weight_wire_bytes.to_string());
    row("weight size ratio", &|p| {
        format!("{:.3}", p.weight_size_ratio)
    });
    out
}
