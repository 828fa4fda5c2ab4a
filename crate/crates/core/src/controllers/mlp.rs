//! Dense tanh network with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
            out.push(self.activation.apply(z));
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Feed-forward network; every layer (the output included) squashes with
/// tanh, so scalar outputs stay in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    seed: u64,
}

/// Parameter gradient, flattened in the same order as [`Mlp::params`].
pub type Gradient = Vec<f64>;

impl Mlp {
    /// Glorot-uniform initialization from `seed`.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {layer_sizes:?} need at least two non-zero entries"
            )));
        }
        let mut rng = seed::rng(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; outputs],
                    activation: Activation::Tanh,
                }
            })
            .collect();
        Ok(Self { layers, seed })
    }

    pub fn from_params(layer_sizes: &[usize], seed: u64, params: &[f64]) -> Result<Self> {
        let mut net = Self::new(layer_sizes, seed)?;
        if params.len() != net.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                net.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        net.set_params(params);
        Ok(net)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
    }

    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for l in &self.layers {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward(acts.last().unwrap(), &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_len(), "input length");
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// First output, the steering prediction.
    pub fn predict_scalar(&self, input: &[f64]) -> f64 {
        self.forward(input)[0]
    }

    /// Mean squared error over `(input, target)` pairs on the first output,
    /// and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], f64)]) -> (f64, Gradient) {
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &(input, target) in batch {
            let acts = self.forward_all(input);
            let out = acts.last().unwrap();
            let err = out[0] - target;
            loss += err * err * scale;
            // dL/da of the output layer.
            let mut delta_a = vec![0.0; out.len()];
            delta_a[0] = 2.0 * err * scale;
            let mut offset = self.param_count();
            for (li, l) in self.layers.iter().enumerate().rev() {
                let a_out = &acts[li + 1];
                let a_in = &acts[li];
                let delta_z: Vec<f64> = delta_a
                    .iter()
                    .zip(a_out)
                    .map(|(d, &a)| d * l.activation.derivative_from_output(a))
                    .collect();
                offset -= l.param_count();
                let (gw, gb) = grad[offset..offset + l.param_count()].split_at_mut(l.weights.len());
                for (o, &dz) in delta_z.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    gb[o] += dz;
                    for (g, &x) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(a_in) {
                        *g += dz * x;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (row, &dz) in l.weights.chunks_exact(l.inputs).zip(&delta_z) {
                        for (p, &w) in prev.iter_mut().zip(row) {
                            *p += dz * w;
                        }
                    }
                    delta_a = prev;
                }
            }
        }
        (loss, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(net: &Mlp, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-0.5..0.5)).collect();
                (x, rng.random_range(-0.4..0.4))
            })
            .collect()
    }

    fn loss(net: &Mlp, data: &[(Vec<f64>, f64)]) -> f64 {
        let refs: Vec<(&[f64], f64)> = data.iter().map(|(x, t)| (x.as_slice(), *t)).collect();
        net.loss_and_gradient(&refs).0
    }

    /// Central differences on randomly chosen parameters of every layer.
    fn gradient_check(sizes: &[usize]) {
        let mut net = Mlp::new(sizes, 3).unwrap();
        // Non-zero biases so their gradient path is exercised.
        let mut p = net.params();
        let mut rng = seed::rng(17);
        for v in &mut p {
            *v += rng.random_range(-0.05..0.05);
        }
        net.set_params(&p);
        let data = batch(&net, 4, 5);
        let refs: Vec<(&[f64], f64)> = data.iter().map(|(x, t)| (x.as_slice(), *t)).collect();
        let (_, grad) = net.loss_and_gradient(&refs);

        let mut offset = 0;
        for w in sizes.windows(2) {
            let (nw, nb) = (w[0] * w[1], w[1]);
            let probes: Vec<usize> = (0..10)
                .map(|i| {
                    if i % 2 == 0 {
                        offset + rng.random_range(0..nw)
                    } else {
                        offset + nw + rng.random_range(0..nb)
                    }
                })
                .collect();
            for idx in probes {
                let h = 1e-5;
                let mut plus = net.clone();
                let mut q = p.clone();
                q[idx] += h;
                plus.set_params(&q);
                let mut minus = net.clone();
                q[idx] -= 2.0 * h;
                minus.set_params(&q);
                let fd = (loss(&plus, &data) - loss(&minus, &data)) / (2.0 * h);
                let denom = fd.abs().max(grad[idx].abs()).max(1e-8);
                let rel = (fd - grad[idx]).abs() / denom;
                assert!(rel < 1e-4, "param {idx}: analytic {} vs fd {fd} (rel {rel})", grad[idx]);
            }
            offset += nw + nb;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        gradient_check(&[12, 7, 1]);
        gradient_check(&[6, 5, 4, 1]);
    }

    #[test]
    fn outputs_are_squashed() {
        let net = Mlp::new(&[8, 4, 1], 1).unwrap();
        let mut p = net.params();
        for v in &mut p {
            *v *= 100.0;
        }
        let net = Mlp::from_params(&[8, 4, 1], 1, &p).unwrap();
        let y = net.predict_scalar(&[1.0; 8]);
        assert!((-1.0..=1.0).contains(&y));
    }

    #[test]
    fn params_round_trip() {
        let net = Mlp::new(&[5, 3, 1], 9).unwrap();
        let again = Mlp::from_params(&[5, 3, 1], 9, &net.params()).unwrap();
        assert_eq!(net, again);
        assert!(Mlp::from_params(&[5, 3, 1], 9, &[0.0; 3]).is_err());
        assert!(Mlp::new(&[5], 0).is_err());
    }
}
