//! Reference implementations the library is checked against. Nothing here
//! calls the code under test for the quantity being checked.
#![allow(dead_code)]

use a2dtwp_core::data::Dataset;
use a2dtwp_core::nn::{Network, Sgd, SgdConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bits of `x` with everything below the top `r` bytes cleared, by shifting.
pub fn masked(x: u32, r: u8) -> u32 {
    let drop = 32 - 8 * r as u32;
    if drop == 0 {
        x
    } else {
        (x >> drop) << drop
    }
}

/// The big-endian top `r` bytes of each word, concatenated.
pub fn packed_bytes(words: &[f32], r: u8) -> Vec<u8> {
    words
        .iter()
        .flat_map(|w| w.to_bits().to_be_bytes().into_iter().take(r as usize))
        .collect()
}

/// Hand-picked edge patterns: zeros, infinities, NaNs, subnormals, extremes.
pub fn special_patterns() -> Vec<u32> {
    let mut v = vec![
        0x0000_0000,
        0x8000_0000, // +-0
        0x7f80_0000,
        0xff80_0000, // +-inf
        0x7fc0_0000,
        0xffc0_0000,
        0x7f80_0001,
        0x7fff_ffff,
        0xffff_ffff, // NaNs
        0x0000_0001,
        0x8000_0001,
        0x007f_ffff,
        0x807f_ffff,
        0x0040_0000, // subnormals
        0x0080_0000,
        0x7f7f_ffff,
        0xff7f_ffff,
        0x3f80_0000,
        0xbf80_0000,
    ];
    for b in 0..32 {
        v.push(1 << b);
    }
    v
}

pub fn random_patterns(n: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = special_patterns();
    v.extend((0..n).map(|_| rng.random::<u32>()));
    v
}

/// Adaptive precision controller written out directly from the algorithm:
/// flat per-layer arrays, cumulative counter, no shared code with the crate.
pub struct AwpReference {
    pub threshold: f64,
    pub interval: u32,
    pub step: u32,
    pub bits_per_layer: Vec<u32>,
    pub interval_counter: Vec<u32>,
    pub last_norm: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub delta: Option<f64>,
    pub counter: u32,
    pub bits: u32,
}

impl AwpReference {
    pub fn new(layers: usize, threshold: f64, interval: u32, step: u32, initial_bits: u32) -> Self {
        AwpReference {
            threshold,
            interval,
            step,
            bits_per_layer: vec![initial_bits; layers],
            interval_counter: vec![0; layers],
            last_norm: vec![None; layers],
        }
    }

    pub fn observe(&mut self, layer: usize, norm: f64) -> ReferenceRow {
        let mut delta = None;
        if let Some(prev) = self.last_norm[layer] {
            let d = if prev > 0.0 {
                (norm - prev) / prev
            } else if norm == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            delta = Some(d);
            if d < self.threshold {
                self.interval_counter[layer] += 1;
            }
        }
        if self.interval_counter[layer] == self.interval {
            self.bits_per_layer[layer] = (self.bits_per_layer[layer] + self.step).min(32);
            self.interval_counter[layer] = 0;
        }
        self.last_norm[layer] = Some(norm);
        ReferenceRow {
            delta,
            counter: self.interval_counter[layer],
            bits: self.bits_per_layer[layer],
        }
    }

    /// Bytes needed to hold `bits`, rounded up to whole bytes.
    pub fn bytes_for(bits: u32) -> u32 {
        match bits % 8 {
            0 => bits / 8,
            _ => bits / 8 + 1,
        }
    }
}

/// A network copied into f64, evaluated with textbook formulas.
pub struct Shadow {
    /// Per layer: (fan_in, fan_out, weights row-major in x out, biases).
    pub layers: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
}

impl Shadow {
    pub fn of(net: &Network) -> Self {
        Shadow {
            layers: net
                .layers()
                .iter()
                .map(|l| {
                    (
                        l.fan_in,
                        l.fan_out,
                        l.weights.iter().map(|&w| w as f64).collect(),
                        l.biases.iter().map(|&b| b as f64).collect(),
                    )
                })
                .collect(),
        }
    }

    /// Hidden pre-activations of every layer for one sample, plus the logits.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, (fin, fout, w, b)) in self.layers.iter().enumerate() {
            let mut z = b.clone();
            for i in 0..*fin {
                for j in 0..*fout {
                    z[j] += a[i] * w[i * fout + j];
                }
            }
            out.push(z.clone());
            a = if li < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z
            };
        }
        out
    }

    /// Cross-entropy of one sample.
    pub fn sample_loss(&self, x: &[f64], y: usize) -> f64 {
        let zs = self.pre_activations(x);
        let logits = zs.last().unwrap();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[y]
    }

    pub fn total_loss(&self, inputs: &[f32], labels: &[u32]) -> f64 {
        let dim = self.layers[0].0;
        inputs
            .chunks_exact(dim)
            .zip(labels)
            .map(|(row, &y)| {
                let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                self.sample_loss(&x, y as usize)
            })
            .sum()
    }

    /// Sign pattern of every hidden unit over the batch.
    pub fn relu_pattern(&self, inputs: &[f32]) -> Vec<bool> {
        let dim = self.layers[0].0;
        let last = self.layers.len() - 1;
        inputs
            .chunks_exact(dim)
            .flat_map(|row| {
                let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                let zs = self.pre_activations(&x);
                zs[..last]
                    .iter()
                    .flatten()
                    .map(|&z| z > 0.0)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn param_mut(&mut self, layer: usize, index: usize) -> &mut f64 {
        let (_, _, w, b) = &mut self.layers[layer];
        if index < w.len() {
            &mut w[index]
        } else {
            &mut b[index - w.len()]
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: usize,
    pub probes: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    pub worst: (usize, f64, f64),
}

/// Central differences of the summed batch loss on the f64 shadow against
/// the supplied analytic gradients (layer-major `weights ++ biases`).
/// Coordinates whose +-h probe flips a ReLU are redrawn.
pub fn finite_difference_check(
    net: &Network,
    analytic: &[Vec<f64>],
    inputs: &[f32],
    labels: &[u32],
    probes_per_layer: usize,
    h: f64,
    seed: u64,
) -> Vec<LayerCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadow = Shadow::of(net);
    let base_pattern = shadow.relu_pattern(inputs);
    let mut out = Vec::new();
    for (li, grad) in analytic.iter().enumerate() {
        let mut coords: Vec<usize> = (0..grad.len()).collect();
        coords.shuffle(&mut rng);
        let mut check = LayerCheck {
            layer: li,
            probes: 0,
            skipped_kinks: 0,
            max_rel_err: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for &c in &coords {
            if check.probes == probes_per_layer {
                break;
            }
            let orig = *shadow.param_mut(li, c);
            *shadow.param_mut(li, c) = orig + h;
            let plus = shadow.total_loss(inputs, labels);
            let plus_pattern = shadow.relu_pattern(inputs);
            *shadow.param_mut(li, c) = orig - h;
            let minus = shadow.total_loss(inputs, labels);
            let minus_pattern = shadow.relu_pattern(inputs);
            *shadow.param_mut(li, c) = orig;
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad[c];
            let denom = a.abs().max(numeric.abs());
            let rel = if denom == 0.0 {
                0.0
            } else {
                (a - numeric).abs() / denom
            };
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst = (c, a, numeric);
            }
            check.probes += 1;
        }
        out.push(check);
    }
    out
}

/// The training loop with no transfer boundary at all: shuffle, batch,
/// forward/backward on the one network, SGD step. Mirrors the trainer's
/// shuffle seeding so the sample order matches.
pub fn plain_training(
    mut net: Network,
    train: &Dataset,
    sgd: SgdConfig,
    shuffle_seed: u64,
    epochs: usize,
) -> Network {
    let mut opt = Sgd::new(sgd.clone(), &net).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let dim = train.dim();
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for idx in order.chunks(sgd.batch_size) {
            let mut x = Vec::with_capacity(idx.len() * dim);
            let mut y = Vec::with_capacity(idx.len());
            for &i in idx {
                x.extend_from_slice(train.row(i));
                y.push(train.labels()[i]);
            }
            let pass = net.forward(&x, &y).unwrap();
            let g = net.backward(&pass).unwrap();
            opt.gather_and_update(&mut net, &[g]).unwrap();
        }
    }
    net
}

pub fn bits_of(net: &Network) -> Vec<u32> {
    net.layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).map(|v| v.to_bits()))
        .collect()
}
