//! Adaptive per-layer weight precision.
//!
//! After every batch the controller compares each layer's weight l2-norm with
//! the norm it saw on the previous batch. Each time the relative change
//! `delta = (curr - prev) / prev` falls below the threshold, the layer's
//! interval counter goes up by one; when the counter reaches `interval` the
//! layer gains `step_bits` bits of precision (capped at 32) and the counter
//! is cleared.
//!
//! The counter is cumulative by default: a batch at or above the threshold
//! does not clear it. [`CounterMode::Consecutive`] switches to the variant
//! where it does.
//!
//! Layers can be mapped onto shared precision groups (for instance all
//! layers of one residual block); a group observes the l2-norm of the
//! concatenation of its layers' weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::RoundTo;

pub const MAX_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AwpError {
    #[error("unknown layer {layer} (controller tracks {layers} layers)")]
    UnknownLayer { layer: usize, layers: usize },
    #[error("unknown precision group {group} (controller has {groups} groups)")]
    UnknownGroup { group: usize, groups: usize },
    #[error("invalid awp config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} layer norms, got {got}")]
    NormCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CounterMode {
    /// Counter only resets on escalation.
    #[default]
    Cumulative,
    /// An observation at or above the threshold also resets the counter.
    Consecutive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AwpConfig {
    /// Relative-change threshold; usually negative.
    pub threshold: f64,
    /// Below-threshold observations needed before an escalation.
    pub interval: u32,
    /// Bits added per escalation.
    pub step_bits: u32,
    pub initial_bits: u32,
    pub counter_mode: CounterMode,
}

impl Default for AwpConfig {
    fn default() -> Self {
        AwpConfig {
            threshold: -2e-3,
            interval: 50,
            step_bits: 8,
            initial_bits: 8,
            counter_mode: CounterMode::Cumulative,
        }
    }
}

impl AwpConfig {
    pub fn validate(&self) -> Result<(), AwpError> {
        if !self.threshold.is_finite() {
            return Err(AwpError::InvalidConfig("threshold must be finite".into()));
        }
        if self.interval == 0 {
            return Err(AwpError::InvalidConfig("interval must be positive".into()));
        }
        if self.step_bits == 0 {
            return Err(AwpError::InvalidConfig("step_bits must be positive".into()));
        }
        if self.initial_bits == 0 || self.initial_bits > MAX_BITS {
            return Err(AwpError::InvalidConfig(format!(
                "initial_bits must be in 1..={MAX_BITS}, got {}",
                self.initial_bits
            )));
        }
        Ok(())
    }
}

/// Precision state of one layer (or one shared group of layers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPrecisionState {
    pub bits: u32,
    pub interval_counter: u32,
    /// Norm seen on the previous batch, `None` before the first observation.
    pub prev_norm: Option<f64>,
}

impl LayerPrecisionState {
    fn new(initial_bits: u32) -> Self {
        LayerPrecisionState {
            bits: initial_bits,
            interval_counter: 0,
            prev_norm: None,
        }
    }

    pub fn round_to(&self) -> RoundTo {
        RoundTo::from_bits(self.bits).expect("bits kept within 1..=32")
    }
}

/// Outcome of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub norm: f64,
    /// `None` on the first observation, which has no previous norm.
    pub delta: Option<f64>,
    pub counter: u32,
    pub bits: u32,
    pub escalated: bool,
}

/// l2-norm accumulated in `f64`. Empty input gives 0.
pub fn l2_norm(weights: &[f32]) -> f64 {
    weights
        .iter()
        .map(|&w| {
            let w = w as f64;
            w * w
        })
        .sum::<f64>()
        .sqrt()
}

/// Relative change `(curr - prev) / prev`.
///
/// A zero previous norm yields 0 when the current norm is also zero and
/// `+inf` otherwise, so it never counts as below a finite threshold.
pub fn change_rate(curr_norm: f64, prev_norm: f64) -> f64 {
    if prev_norm > 0.0 {
        (curr_norm - prev_norm) / prev_norm
    } else if curr_norm == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub struct AwpController {
    config: AwpConfig,
    group_of_layer: Vec<usize>,
    groups: Vec<LayerPrecisionState>,
}

impl AwpController {
    /// One independent precision state per layer.
    pub fn new(config: AwpConfig, num_layers: usize) -> Result<Self, AwpError> {
        Self::with_groups(config, (0..num_layers).collect())
    }

    /// `group_of_layer[l]` names the shared state used by layer `l`. Group ids
    /// must be dense: every id in `0..=max` has at least one layer.
    pub fn with_groups(config: AwpConfig, group_of_layer: Vec<usize>) -> Result<Self, AwpError> {
        config.validate()?;
        let num_groups = group_of_layer.iter().map(|g| g + 1).max().unwrap_or(0);
        for g in 0..num_groups {
            if !group_of_layer.contains(&g) {
                return Err(AwpError::InvalidConfig(format!(
                    "precision group {g} has no layers"
                )));
            }
        }
        Ok(AwpController {
            groups: vec![LayerPrecisionState::new(config.initial_bits); num_groups],
            config,
            group_of_layer,
        })
    }

    pub fn config(&self) -> &AwpConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.group_of_layer.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, layer: usize) -> Result<usize, AwpError> {
        self.group_of_layer
            .get(layer)
            .copied()
            .ok_or(AwpError::UnknownLayer {
                layer,
                layers: self.group_of_layer.len(),
            })
    }

    pub fn state(&self, layer: usize) -> Result<&LayerPrecisionState, AwpError> {
        let g = self.group_of(layer)?;
        Ok(&self.groups[g])
    }

    pub fn group_state(&self, group: usize) -> Result<&LayerPrecisionState, AwpError> {
        self.groups.get(group).ok_or(AwpError::UnknownGroup {
            group,
            groups: self.groups.len(),
        })
    }

    pub fn bits(&self, layer: usize) -> Result<u32, AwpError> {
        Ok(self.state(layer)?.bits)
    }

    /// Byte width the codec should use for `layer` right now.
    pub fn current_round_to(&self, layer: usize) -> Result<RoundTo, AwpError> {
        Ok(self.state(layer)?.round_to())
    }

    /// Feeds the post-update norm of `layer`. With the default one-group-per-layer
    /// mapping this is exactly one step of the per-layer loop; for shared
    /// groups use [`observe_group`](Self::observe_group) or
    /// [`observe_layers`](Self::observe_layers).
    pub fn observe_batch(&mut self, layer: usize, curr_norm: f64) -> Result<Observation, AwpError> {
        let g = self.group_of(layer)?;
        self.observe_group(g, curr_norm)
    }

    pub fn observe_group(&mut self, group: usize, curr_norm: f64) -> Result<Observation, AwpError> {
        let groups = self.groups.len();
        let cfg = &self.config;
        let state = self
            .groups
            .get_mut(group)
            .ok_or(AwpError::UnknownGroup { group, groups })?;

        let delta = state.prev_norm.map(|prev| change_rate(curr_norm, prev));
        if let Some(d) = delta {
            if d < cfg.threshold {
                state.interval_counter += 1;
            } else if cfg.counter_mode == CounterMode::Consecutive {
                state.interval_counter = 0;
            }
        }
        let mut escalated = false;
        if state.interval_counter >= cfg.interval {
            let before = state.bits;
            state.bits = (state.bits + cfg.step_bits).min(MAX_BITS);
            escalated = state.bits != before;
            state.interval_counter = 0;
        }
        state.prev_norm = Some(curr_norm);

        Ok(Observation {
            norm: curr_norm,
            delta,
            counter: state.interval_counter,
            bits: state.bits,
            escalated,
        })
    }

    /// Observes one batch given per-layer norms, in layer order. Layers that
    /// share a group are combined as `sqrt(sum of squared norms)`. Returns one
    /// observation per group.
    pub fn observe_layers(&mut self, layer_norms: &[f64]) -> Result<Vec<Observation>, AwpError> {
        if layer_norms.len() != self.group_of_layer.len() {
            return Err(AwpError::NormCount {
                expected: self.group_of_layer.len(),
                got: layer_norms.len(),
            });
        }
        let mut sq = vec![0.0f64; self.groups.len()];
        for (&g, &n) in self.group_of_layer.iter().zip(layer_norms) {
            sq[g] += n * n;
        }
        // one-layer groups pass the norm through untouched
        let mut members = vec![0usize; self.groups.len()];
        for &g in &self.group_of_layer {
            members[g] += 1;
        }
        (0..self.groups.len())
            .map(|g| {
                let norm = if members[g] == 1 {
                    let l = self.group_of_layer.iter().position(|&x| x == g).unwrap();
                    layer_norms[l]
                } else {
                    sq[g].sqrt()
                };
                self.observe_group(g, norm)
            })
            .collect()
    }
}

/// One row of the AWP trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub batch: u64,
    pub layer: usize,
    pub norm: f64,
    /// Empty in CSV for the first observation.
    pub delta: Option<f64>,
    pub counter: u32,
    pub bits: u32,
}

impl TraceRow {
    pub fn new(batch: u64, layer: usize, obs: &Observation) -> Self {
        TraceRow {
            batch,
            layer,
            norm: obs.norm,
            delta: obs.delta,
            counter: obs.counter,
            bits: obs.bits,
        }
    }
}
