use serde::{Deserialize, Serialize};

use super::network::{GradientSet, Network};
use super::reduce;
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    /// Multiply the learning rate by `lr_decay_factor` every this many
    /// updates. 0 keeps it constant.
    pub lr_decay_every: u64,
    pub lr_decay_factor: f32,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            lr_decay_every: 0,
            lr_decay_factor: 0.16,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be a non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect for update number `step` (0-based).
    pub fn learning_rate_at(&self, step: u64) -> f32 {
        match step.checked_div(self.lr_decay_every) {
            None => self.learning_rate,
            Some(k) => self.learning_rate * self.lr_decay_factor.powi(k as i32),
        }
    }
}

/// Momentum SGD with L2 weight decay on weights (not biases).
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: GradientSet,
    steps: u64,
}

impl Sgd {
    pub fn new(config: SgdConfig, net: &Network) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: GradientSet::zeros_like(net),
            steps: 0,
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Averages the contributions, then for every parameter
    /// `g = mean + wd * w` (weights only), `v = m * v + g`, `w -= lr * v`.
    ///
    /// Contributions are combined with the same pairwise tree that
    /// partitions a batch across workers.
    pub fn gather_and_update(
        &mut self,
        net: &mut Network,
        contributions: &[GradientSet],
    ) -> Result<(), NnError> {
        if let Some(i) = contributions.iter().position(|c| !c.matches(net)) {
            return Err(NnError::ShapeMismatch(format!(
                "gradient contribution {i} does not match the network"
            )));
        }
        if !self.velocity.matches(net) {
            return Err(NnError::ShapeMismatch(
                "optimizer state belongs to a different network".into(),
            ));
        }
        let parts: Vec<Option<&GradientSet>> = contributions
            .iter()
            .map(|c| (c.sample_count > 0).then_some(c))
            .collect();
        let total = reduce::reduce_partials(&parts).ok_or(NnError::EmptyGradient)?;
        let n = total.sample_count as f32;

        let lr = self.config.learning_rate_at(self.steps);
        let m = self.config.momentum;
        let wd = self.config.weight_decay;
        for (li, ((layer, g), v)) in net
            .layers_mut()
            .iter_mut()
            .zip(&total.layers)
            .zip(&mut self.velocity.layers)
            .enumerate()
        {
            for ((w, &gs), vel) in layer.weights.iter_mut().zip(&g.weights).zip(&mut v.weights) {
                let grad = gs / n + wd * *w;
                *vel = m * *vel + grad;
                *w -= lr * *vel;
            }
            for ((b, &gs), vel) in layer.biases.iter_mut().zip(&g.biases).zip(&mut v.biases) {
                *vel = m * *vel + gs / n;
                *b -= lr * *vel;
            }
            if !layer
                .weights
                .iter()
                .chain(&layer.biases)
                .all(|x| x.is_finite())
            {
                return Err(NnError::NonFinite {
                    layer: li,
                    step: self.steps,
                });
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// One-shot form of [`Sgd::gather_and_update`] for callers that keep the
/// optimizer elsewhere.
pub fn gather_and_update(
    net: &mut Network,
    contributions: &[GradientSet],
    opt: &mut Sgd,
) -> Result<(), NnError> {
    opt.gather_and_update(net, contributions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Dense;

    fn scalar_net(w: f32) -> Network {
        let mut l = Dense::zeros(1, 1);
        l.weights[0] = w;
        Network::from_layers(vec![l]).unwrap()
    }

    fn grad(net: &Network, w: f32, b: f32, n: usize) -> GradientSet {
        let mut g = GradientSet::zeros_like(net);
        g.layers[0].weights[0] = w;
        g.layers[0].biases[0] = b;
        g.sample_count = n;
        g
    }

    fn cfg(lr: f32, momentum: f32, wd: f32) -> SgdConfig {
        SgdConfig {
            learning_rate: lr,
            momentum,
            weight_decay: wd,
            ..SgdConfig::default()
        }
    }

    #[test]
    fn plain_average_step() {
        let mut net = scalar_net(1.0);
        let mut opt = Sgd::new(cfg(0.1, 0.0, 0.0), &net).unwrap();
        let cs = [grad(&net, 0.2, 0.0, 1), grad(&net, 0.4, 0.0, 1)];
        opt.gather_and_update(&mut net, &cs).unwrap();
        assert!((net.layers()[0].weights[0] - 0.97).abs() < 1e-7);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut net = scalar_net(0.123_456_7);
        net.layers_mut()[0].biases[0] = -3.5;
        let before = net.clone();
        let mut opt = Sgd::new(cfg(0.0, 0.9, 5e-4), &net).unwrap();
        for _ in 0..3 {
            let g = grad(&net, 0.7, -1.1, 2);
            opt.gather_and_update(&mut net, &[g]).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn momentum_two_steps() {
        // v1 = g1 = 0.5, w1 = 1 - 0.1*0.5 = 0.95
        // v2 = 0.9*0.5 + 0.25 = 0.7, w2 = 0.95 - 0.1*0.7 = 0.88
        let mut net = scalar_net(1.0);
        let mut opt = Sgd::new(cfg(0.1, 0.9, 0.0), &net).unwrap();
        let g = grad(&net, 0.5, 0.0, 1);
        opt.gather_and_update(&mut net, &[g]).unwrap();
        assert!((net.layers()[0].weights[0] - 0.95).abs() < 1e-7);
        let g = grad(&net, 0.25, 0.0, 1);
        opt.gather_and_update(&mut net, &[g]).unwrap();
        assert!((net.layers()[0].weights[0] - 0.88).abs() < 1e-6);
    }

    #[test]
    fn decay_applies_to_weights_only() {
        let mut net = scalar_net(2.0);
        net.layers_mut()[0].biases[0] = 2.0;
        let mut opt = Sgd::new(cfg(0.5, 0.0, 0.1), &net).unwrap();
        let g = grad(&net, 0.0, 0.0, 1);
        opt.gather_and_update(&mut net, &[g]).unwrap();
        assert!((net.layers()[0].weights[0] - 1.9).abs() < 1e-6);
        assert_eq!(net.layers()[0].biases[0], 2.0);
    }

    #[test]
    fn mismatched_and_empty_contributions() {
        let mut net = scalar_net(1.0);
        let mut opt = Sgd::new(cfg(0.1, 0.0, 0.0), &net).unwrap();
        let other = Network::zeros(&[2, 1]).unwrap();
        let g = GradientSet::zeros_like(&other);
        assert!(matches!(
            opt.gather_and_update(&mut net, &[g]),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            opt.gather_and_update(&mut net, &[]),
            Err(NnError::EmptyGradient)
        ));
    }

    #[test]
    fn non_finite_update_is_reported() {
        let mut net = scalar_net(1.0);
        let mut opt = Sgd::new(cfg(1.0, 0.0, 0.0), &net).unwrap();
        let g = grad(&net, f32::INFINITY, 0.0, 1);
        assert!(matches!(
            opt.gather_and_update(&mut net, &[g]),
            Err(NnError::NonFinite { layer: 0, step: 0 })
        ));
    }

    #[test]
    fn lr_schedule() {
        let mut c = cfg(1.0, 0.0, 0.0);
        assert_eq!(c.learning_rate_at(1000), 1.0);
        c.lr_decay_every = 30;
        c.lr_decay_factor = 0.5;
        assert_eq!(c.learning_rate_at(29), 1.0);
        assert_eq!(c.learning_rate_at(30), 0.5);
        assert_eq!(c.learning_rate_at(65), 0.25);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.1, 1.0, 0.0).validate().is_err());
        assert!(cfg(-0.1, 0.0, 0.0).validate().is_err());
        assert!(cfg(0.1, 0.0, -1.0).validate().is_err());
        let mut c = cfg(0.1, 0.5, 0.0);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
