//! Small fully connected network: rectified hidden layers and either a
//! softmax head (label distribution) or a scaled sigmoid head (regression).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embed::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Softmax,
    /// `scale * sigmoid(z)` on a single output.
    SigmoidScaled { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// `out = W x + b`. Zero inputs are skipped; the remaining terms are
    /// summed in index order, so the result equals the dense product.
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        let active: Vec<(usize, f64)> = x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            active.iter().map(|&(i, v)| row[i] * v).sum::<f64>() + b
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
    pub head: Head,
}

/// Probability vector over labels `1..=m` (index 0 is label 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(pub Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("not a probability vector: {probs:?}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn one_hot(m: usize, label: usize) -> Self {
        let mut p = vec![0.0; m];
        p[label - 1] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Label (1-based) with the largest probability; ties go to the lowest label.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Supervision for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// 1-based class label for a softmax head.
    Label(usize),
    Value(f64),
}

/// Per-parameter gradients, shaped like [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<DenseLayer>,
}

impl Gradient {
    pub fn zeros_like(model: &MlpParams) -> Self {
        Self { layers: model.layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(a, b)| *a += scale * b);
            a.bias.iter_mut().zip(&b.bias).for_each(|(a, b)| *a += scale * b);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Activations kept from a forward pass.
struct Trace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the raw head output.
    inputs: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases. `sizes` runs input to output.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(sizes, head)?;
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {sizes:?}")));
        }
        if let Head::SigmoidScaled { scale } = head {
            if *sizes.last().unwrap() != 1 || !(scale > 0.0) {
                return Err(Error::Config("sigmoid head needs one output and a positive scale".into()));
            }
        }
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, head })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    /// Checks that layer shapes chain and every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Config(format!("layer {i} has inconsistent parameter counts")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(Error::Config(format!("layer {i} input does not match previous output")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("layer {i} has non-finite parameters")));
            }
        }
        Self::zeros(&self.layer_sizes(), self.head).map(|_| ())
    }

    fn check_input(&self, e: &Embedding) -> Result<()> {
        if e.dim() != self.input_dim() {
            return Err(Error::Config(format!(
                "embedding has dimension {}, network expects {}",
                e.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        inputs.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(inputs.last().unwrap(), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(out);
        }
        Trace { inputs }
    }

    /// Raw head input (logits, or the pre-sigmoid scalar).
    pub fn logits(&self, e: &Embedding) -> Result<Vec<f64>> {
        self.check_input(e)?;
        Ok(self.trace(&e.0).inputs.pop().unwrap())
    }

    /// Loss of one sample: cross-entropy for softmax, squared error for the sigmoid head.
    pub fn loss(&self, e: &Embedding, target: Target) -> Result<f64> {
        let z = self.logits(e)?;
        self.loss_from_logits(&z, target)
    }

    pub(crate) fn loss_from_logits(&self, z: &[f64], target: Target) -> Result<f64> {
        match (self.head, target) {
            (Head::Softmax, Target::Label(l)) if (1..=z.len()).contains(&l) => Ok(log_sum_exp(z) - z[l - 1]),
            (Head::SigmoidScaled { scale }, Target::Value(y)) => {
                let d = scale * sigmoid(z[0]) - y;
                Ok(d * d)
            }
            (head, target) => Err(Error::Config(format!("target {target:?} does not fit head {head:?}"))),
        }
    }

    /// Loss and exact reverse-mode gradient for one sample.
    pub fn backward(&self, e: &Embedding, target: Target) -> Result<(f64, Gradient)> {
        let mut grad = Gradient::zeros_like(self);
        let loss = self.accumulate_gradient(e, target, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale` times the sample gradient into `grad` and returns the sample loss.
    /// Zero inputs and inactive units are skipped, which matters for sparse embeddings.
    pub fn accumulate_gradient(&self, e: &Embedding, target: Target, scale: f64, grad: &mut Gradient) -> Result<f64> {
        self.check_input(e)?;
        let trace = self.trace(&e.0);
        let z = trace.inputs.last().unwrap();
        let loss = self.loss_from_logits(z, target)?;

        // d loss / d head input.
        let mut delta: Vec<f64> = match (self.head, target) {
            (Head::Softmax, Target::Label(l)) => {
                let mut p = softmax(z);
                p[l - 1] -= 1.0;
                p
            }
            (Head::SigmoidScaled { scale }, Target::Value(y)) => {
                let s = sigmoid(z[0]);
                vec![2.0 * (scale * s - y) * scale * s * (1.0 - s)]
            }
            _ => unreachable!("checked by loss_from_logits"),
        };

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let active: Vec<usize> = (0..layer.inputs).filter(|&i| input[i] != 0.0).collect();
            let g = &mut grad.layers[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let d = d * scale;
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for &i in &active {
                    row[i] += d * input[i];
                }
            }
            if l == 0 {
                break;
            }
            // Rectifier derivative: the stored input is post-activation, so
            // only units with a positive output (the active ones) pass the error back.
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for &i in &active {
                    prev[i] += d * row[i];
                }
            }
            delta = prev;
        }
        Ok(loss)
    }

    /// Parameter slices paired with the matching gradient slices, weights
    /// before bias, layer by layer. The concatenation order is fixed.
    pub fn param_slices_mut<'a>(&'a mut self, grad: &'a Gradient) -> Vec<(&'a mut [f64], &'a [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            out.push((&mut layer.weights[..], &g.weights[..]));
            out.push((&mut layer.bias[..], &g.bias[..]));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Label distribution from a softmax-head network.
pub fn classify(model: &MlpParams, e: &Embedding) -> Result<LabelDistribution> {
    if model.head != Head::Softmax {
        return Err(Error::Config("classify needs a softmax head".into()));
    }
    Ok(LabelDistribution(softmax(&model.logits(e)?)))
}

/// Scalar prediction in `[0, scale]` from a sigmoid-head network.
pub fn regress(model: &MlpParams, e: &Embedding) -> Result<f64> {
    let Head::SigmoidScaled { scale } = model.head else {
        return Err(Error::Config("regress needs a sigmoid head".into()));
    };
    let z = model.logits(e)?;
    Ok((scale * sigmoid(z[0])).clamp(0.0, scale))
}

pub fn backward(model: &MlpParams, e: &Embedding, target: Target) -> Result<Gradient> {
    model.backward(e, target).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::stream;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpParams::zeros(&[4, 3, 2, 5], Head::Softmax).unwrap();
        let p = classify(&m, &Embedding(vec![0.3, -1.0, 2.0, 0.1])).unwrap();
        for v in p.probs() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logit_saturates() {
        let p = softmax(&[800.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|v| *v < 1e-300));
    }

    #[test]
    fn zero_regressor_predicts_midpoint() {
        let m = MlpParams::zeros(&[4, 3, 2, 1], Head::SigmoidScaled { scale: 5.0 }).unwrap();
        assert_eq!(regress(&m, &Embedding(vec![1.0; 4])).unwrap(), 2.5);
        assert_eq!(5.0 * sigmoid(1000.0), 5.0);
        assert_eq!(5.0 * sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let m = MlpParams::zeros(&[4, 3, 5], Head::Softmax).unwrap();
        assert!(matches!(classify(&m, &Embedding(vec![0.0; 3])), Err(Error::Config(_))));
        assert!(regress(&m, &Embedding(vec![0.0; 4])).is_err());
        assert!(MlpParams::zeros(&[4, 3, 2], Head::SigmoidScaled { scale: 5.0 }).is_err());
    }

    #[test]
    fn output_error_term_is_probs_minus_onehot() {
        // Only the head has weights: a single linear layer with zero parameters.
        let m = MlpParams::zeros(&[3, 5], Head::Softmax).unwrap();
        let e = Embedding(vec![0.0; 3]);
        let g = backward(&m, &e, Target::Label(2)).unwrap();
        let want = [0.2, -0.8, 0.2, 0.2, 0.2];
        for (b, w) in g.layers[0].bias.iter().zip(want) {
            assert!((b - w).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_correct_logit_has_vanishing_gradient() {
        let mut m = MlpParams::zeros(&[2, 3], Head::Softmax).unwrap();
        m.layers[0].bias = vec![60.0, 0.0, 0.0];
        let (loss, g) = m.backward(&Embedding(vec![0.5, -0.5]), Target::Label(1)).unwrap();
        assert!(loss < 1e-20);
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn random_regressor_stays_in_range() {
        let mut rng = stream(1, 0);
        for seed in 0..50 {
            let mut r = stream(seed, 1);
            let mut m = MlpParams::init(&[6, 5, 4, 1], Head::SigmoidScaled { scale: 5.0 }, &mut r).unwrap();
            m.layers.iter_mut().for_each(|l| l.weights.iter_mut().for_each(|w| *w *= 40.0));
            for _ in 0..20 {
                let e = Embedding((0..6).map(|_| rng.random_range(-100.0..100.0)).collect());
                let y = regress(&m, &e).unwrap();
                assert!((0.0..=5.0).contains(&y));
            }
        }
    }

    #[test]
    fn label_distribution_helpers() {
        let d = LabelDistribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(d.argmax(), 2);
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!((LabelDistribution::uniform(4).entropy() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(LabelDistribution::one_hot(3, 3).entropy(), 0.0);
    }
}
