//! Small fully connected network: tanh hidden layers, linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Tape {
    /// Input, then the post-activation output of every layer.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape is never empty")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` includes input and output.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let lim = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    w: (0..n_in * n_out).map(|_| rng.gen_range(-lim..lim)).collect(),
                    b: vec![0.0; n_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out)
    }

    pub fn forward_tape(&self, x: &[f64]) -> Tape {
        assert_eq!(x.len(), self.n_inputs());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&acts[k], &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Tape { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_tape(x).acts.pop().unwrap()
    }

    /// Accumulate `d loss / d params` into `grad` (flat, [`Mlp::params`] order)
    /// given `d loss / d output`.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.n_params());
        let mut delta = d_out.to_vec();
        let mut end = grad.len();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &tape.acts[k];
            let start = end - layer.w.len() - layer.b.len();
            let (gw, gb) = grad[start..end].split_at_mut(layer.w.len());
            for o in 0..layer.n_out {
                gb[o] += delta[o];
                for i in 0..layer.n_in {
                    gw[o * layer.n_in + i] += delta[o] * input[i];
                }
            }
            end = start;
            if k > 0 {
                let mut prev = vec![0.0; layer.n_in];
                for o in 0..layer.n_out {
                    for i in 0..layer.n_in {
                        prev[i] += layer.w[o * layer.n_in + i] * delta[o];
                    }
                }
                // The input to this layer is tanh(z); d tanh = 1 - tanh^2.
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend(&l.w);
            p.extend(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    /// `params -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut().chain(l.b.iter_mut()) {
                *w -= lr * grad[k];
                k += 1;
            }
        }
    }
}
