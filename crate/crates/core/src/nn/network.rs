use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::reduce::{self, Accumulate};
use super::NnError;

/// Fully-connected layer. `weights` is row-major `fan_in x fan_out`, so the
/// weight from input `i` to unit `j` sits at `i * fan_out + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// ReLU on every hidden layer, softmax on the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

/// Per-layer activations of one forward pass plus per-sample losses.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    batch: usize,
    /// `activations[0]` is the input, `activations[l + 1]` the output of
    /// layer `l` (post-ReLU for hidden layers, softmax probabilities last).
    activations: Vec<Vec<f32>>,
    labels: Vec<u32>,
    sample_losses: Vec<f64>,
}

impl ForwardPass {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn activations(&self) -> &[Vec<f32>] {
        &self.activations
    }

    pub fn probabilities(&self) -> &[f32] {
        self.activations.last().unwrap()
    }

    pub fn sample_losses(&self) -> &[f64] {
        &self.sample_losses
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self) -> f64 {
        self.sample_losses.iter().sum::<f64>() / self.batch as f64
    }

    /// Fraction of samples whose arg-max class equals the label.
    pub fn top1(&self) -> f64 {
        let probs = self.probabilities();
        let classes = probs.len() / self.batch;
        let hits = probs
            .chunks_exact(classes)
            .zip(&self.labels)
            .filter(|(row, &y)| argmax(row) == y as usize)
            .count();
        hits as f64 / self.batch as f64
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the loss summed over `sample_count` samples. Dividing by the
/// count happens once, at gather time.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
    pub sample_count: usize,
    pub loss_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
            sample_count: 0,
            loss_sum: 0.0,
        }
    }

    pub fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }

    /// Bytes of this set as an uncompressed `f32` stream.
    pub fn byte_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 4 * (l.weights.len() + l.biases.len()))
            .sum()
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.sample_count as f64
    }
}

impl Accumulate for GradientSet {
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += *y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += *y;
            }
        }
        self.sample_count += other.sample_count;
        self.loss_sum += other.loss_sum;
    }
}

impl Network {
    /// `sizes = [input, hidden..., classes]`, all zero parameters.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::InvalidShape(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Network {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// Weights drawn from N(0, std^2), biases zero.
    pub fn init_normal<R: Rng + ?Sized>(
        sizes: &[usize],
        std: f32,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes)?;
        let normal = Normal::new(0.0f32, std)
            .map_err(|e| NnError::InvalidShape(format!("bad init std {std}: {e}")))?;
        for layer in &mut net.layers {
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidShape(
                "network needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.fan_in * l.fan_out || l.biases.len() != l.fan_out {
                return Err(NnError::InvalidShape(format!(
                    "layer {i} buffers do not match its shape"
                )));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out != w[1].fan_in {
                return Err(NnError::InvalidShape(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    w[0].fan_out,
                    i + 1,
                    w[1].fan_in
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn same_shape(&self, other: &Network) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Forward pass over a row-major `batch x input_dim` matrix.
    pub fn forward(&self, inputs: &[f32], labels: &[u32]) -> Result<ForwardPass, NnError> {
        let dim = self.input_dim();
        let batch = labels.len();
        if batch == 0 {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        if inputs.len() != batch * dim {
            return Err(NnError::ShapeMismatch(format!(
                "{} input values for {batch} samples of width {dim}",
                inputs.len()
            )));
        }
        let classes = self.classes();
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(NnError::ShapeMismatch(format!(
                "label {y} out of range for {classes} classes"
            )));
        }

        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, activations.last().unwrap(), batch);
            if li < last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            activations.push(z);
        }

        // logits -> probabilities in place, losses in f64 via log-sum-exp
        let logits = activations.last_mut().unwrap();
        let mut sample_losses = Vec::with_capacity(batch);
        for (row, &y) in logits.chunks_exact_mut(classes).zip(labels) {
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
            let lse = (max as f64)
                + row
                    .iter()
                    .map(|&v| ((v - max) as f64).exp())
                    .sum::<f64>()
                    .ln();
            sample_losses.push(lse - row[y as usize] as f64);

            let mut sum = 0.0f32;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }

        Ok(ForwardPass {
            batch,
            activations,
            labels: labels.to_vec(),
            sample_losses,
        })
    }

    /// Class scores without loss bookkeeping, for evaluation.
    pub fn predict(&self, inputs: &[f32]) -> Result<Vec<usize>, NnError> {
        let dim = self.input_dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(dim) {
            return Err(NnError::ShapeMismatch(format!(
                "{} input values is not a positive multiple of width {dim}",
                inputs.len()
            )));
        }
        let batch = inputs.len() / dim;
        let mut a = inputs.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            a = affine(layer, &a, batch);
            if li < last {
                for v in &mut a {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(a.chunks_exact(self.classes()).map(argmax).collect())
    }

    /// Gradient of the summed loss over the samples of `pass`, reduced with
    /// the fixed pairwise tree.
    pub fn backward(&self, pass: &ForwardPass) -> Result<GradientSet, NnError> {
        if pass.activations.len() != self.layers.len() + 1 {
            return Err(NnError::ShapeMismatch(
                "forward pass from a different network".into(),
            ));
        }
        for (layer, a) in self.layers.iter().zip(&pass.activations) {
            if a.len() != pass.batch * layer.fan_in {
                return Err(NnError::ShapeMismatch(
                    "forward pass from a different network".into(),
                ));
            }
        }
        let batch = pass.batch;
        let classes = self.classes();

        // deltas[l] = dLoss_s / dz_l for every sample, row-major batch x fan_out
        let mut deltas: Vec<Vec<f32>> = vec![Vec::new(); self.layers.len()];
        let mut top = pass.probabilities().to_vec();
        for (row, &y) in top.chunks_exact_mut(classes).zip(&pass.labels) {
            row[y as usize] -= 1.0;
        }
        deltas[self.layers.len() - 1] = top;
        for li in (1..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let below = &pass.activations[li];
            let d = &deltas[li];
            let mut prev = vec![0.0f32; batch * layer.fan_in];
            for s in 0..batch {
                let drow = &d[s * layer.fan_out..(s + 1) * layer.fan_out];
                let arow = &below[s * layer.fan_in..(s + 1) * layer.fan_in];
                let prow = &mut prev[s * layer.fan_in..(s + 1) * layer.fan_in];
                for i in 0..layer.fan_in {
                    if arow[i] > 0.0 {
                        let wrow = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                        let mut acc = 0.0f32;
                        for (w, g) in wrow.iter().zip(drow) {
                            acc += w * g;
                        }
                        prow[i] = acc;
                    }
                }
            }
            deltas[li - 1] = prev;
        }

        let mut out = GradientSet::zeros_like(self);
        let mut scratch = vec![GradientSet::zeros_like(self); reduce::scratch_depth(batch)];
        let mut leaf = |s: usize, g: &mut GradientSet| {
            for (li, (layer, lg)) in self.layers.iter().zip(g.layers.iter_mut()).enumerate() {
                let a = &pass.activations[li][s * layer.fan_in..(s + 1) * layer.fan_in];
                let d = &deltas[li][s * layer.fan_out..(s + 1) * layer.fan_out];
                for (i, &ai) in a.iter().enumerate() {
                    let row = &mut lg.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                    for (w, &dj) in row.iter_mut().zip(d) {
                        *w = ai * dj;
                    }
                }
                lg.biases.copy_from_slice(d);
            }
            g.sample_count = 1;
            g.loss_sum = pass.sample_losses[s];
        };
        reduce::reduce_range(0..batch, &mut out, &mut scratch, &mut leaf);
        Ok(out)
    }
}

/// `z = a W + b` for `batch` rows; each output row depends only on its input
/// row, accumulated in a fixed order.
fn affine(layer: &Dense, a: &[f32], batch: usize) -> Vec<f32> {
    let mut z = Vec::with_capacity(batch * layer.fan_out);
    for s in 0..batch {
        let arow = &a[s * layer.fan_in..(s + 1) * layer.fan_in];
        let start = z.len();
        z.extend_from_slice(&layer.biases);
        let zrow = &mut z[start..];
        for (i, &ai) in arow.iter().enumerate() {
            let wrow = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
            for (zj, &w) in zrow.iter_mut().zip(wrow) {
                *zj += ai * w;
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_net(n: usize) -> Network {
        let mut l = Dense::zeros(n, n);
        for i in 0..n {
            l.weights[i * n + i] = 1.0;
        }
        Network::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn identity_net_gives_softmax_of_input() {
        let net = identity_net(3);
        let pass = net.forward(&[0.0, 1.0, 0.0], &[1]).unwrap();
        let e = std::f64::consts::E;
        let expect = [1.0 / (2.0 + e), e / (2.0 + e), 1.0 / (2.0 + e)];
        for (p, q) in pass.probabilities().iter().zip(expect) {
            assert!((*p as f64 - q).abs() < 1e-6);
        }
        assert!((pass.loss() - (-(e / (2.0 + e)).ln())).abs() < 1e-9);
    }

    #[test]
    fn empty_and_mismatched_batches() {
        let net = identity_net(3);
        assert!(matches!(
            net.forward(&[], &[]),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            net.forward(&[1.0, 2.0], &[0]),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            net.forward(&[1.0, 2.0, 3.0], &[3]),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(net.predict(&[1.0]).is_err());
    }

    #[test]
    fn shapes_must_compose() {
        assert!(Network::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(4, 2)]).is_err());
        assert!(Network::zeros(&[4]).is_err());
        assert!(Network::zeros(&[4, 0, 2]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init_normal(&[5, 7, 4], 1.0, &mut rng).unwrap();
        let x: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin() * 3.0).collect();
        let pass = net.forward(&x, &[0, 1, 2, 3, 0, 1]).unwrap();
        for row in pass.probabilities().chunks(4) {
            let s: f64 = row.iter().map(|&p| p as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!(pass.loss() >= 0.0);
    }

    #[test]
    fn zero_net_bias_gradient_closed_form() {
        // zero weights, zero input: probabilities are uniform, so the summed
        // bias gradient of the output layer is n/C - count(label == c)
        let net = Network::zeros(&[3, 4, 3]).unwrap();
        let labels = [0u32, 0, 2, 1];
        let pass = net.forward(&[0.0; 12], &labels).unwrap();
        let g = net.backward(&pass).unwrap();
        let mean: Vec<f32> = g.layers[1].biases.iter().map(|b| b / 4.0).collect();
        let expect = [1.0 / 3.0 - 0.5, 1.0 / 3.0 - 0.25, 1.0 / 3.0 - 0.25];
        for (m, e) in mean.iter().zip(expect) {
            assert!((m - e).abs() < 1e-6, "{mean:?}");
        }
        // hidden units never fire, so nothing flows below them
        assert!(g.layers[0].biases.iter().all(|&b| b == 0.0));
        assert!(g.layers[0].weights.iter().all(|&w| w == 0.0));
        assert_eq!(g.sample_count, 4);
    }

    #[test]
    fn dead_unit_has_zero_incoming_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Network::init_normal(&[4, 3, 2], 0.5, &mut rng).unwrap();
        // unit 1 of the hidden layer can never activate
        let h = &mut net.layers_mut()[0];
        for i in 0..4 {
            h.weights[i * 3 + 1] = 0.0;
        }
        h.biases[1] = -1.0;
        let x = [0.5, -1.0, 2.0, 0.1, 1.0, 1.0, -0.3, 0.2];
        let g = net.backward(&net.forward(&x, &[0, 1]).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(g.layers[0].weights[i * 3 + 1], 0.0);
        }
        assert_eq!(g.layers[0].biases[1], 0.0);
    }

    #[test]
    fn predict_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::init_normal(&[3, 5, 4], 1.0, &mut rng).unwrap();
        let x: Vec<f32> = (0..15).map(|i| i as f32 * 0.1 - 0.7).collect();
        let pass = net.forward(&x, &[0; 5]).unwrap();
        let from_pass: Vec<usize> = pass.probabilities().chunks(4).map(argmax).collect();
        assert_eq!(net.predict(&x).unwrap(), from_pass);
    }
}
