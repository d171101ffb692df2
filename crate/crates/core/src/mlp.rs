//! Minimal dense MLP with hand-written backprop, shared by the color fields
//! and the trajectory ODE.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output_activation: OutputActivation,
}

/// Cached pre-activations and layer inputs from a forward pass.
pub struct MlpCache {
    /// inputs[i] is the input to layer i; inputs.len() == layers.len().
    inputs: Vec<DVector<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<DVector<f64>>,
    output: DVector<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &DVector<f64> {
        &self.output
    }
}

/// Per-layer gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.norm_squared() + l.bias.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Mlp {
    /// `dims` lists layer sizes input-first, e.g. `[57, 64, 64, 3]`.
    /// Hidden activations are ReLU. Weights use uniform Xavier init.
    pub fn new(dims: &[usize], output_activation: OutputActivation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weight: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                        rng.gen_range(-bound..bound)
                    }),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Mlp {
            layers,
            output_activation,
        }
    }

    pub fn zeros(dims: &[usize], output_activation: OutputActivation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
            })
            .collect();
        Mlp {
            layers,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().bias.len()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &DVector<f64>) -> MlpCache {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = &layer.weight * &h + &layer.bias;
            if i + 1 < n {
                h = z.map(relu);
            } else {
                h = match self.output_activation {
                    OutputActivation::Linear => z.clone(),
                    OutputActivation::Sigmoid => z.map(sigmoid),
                };
            }
            pre.push(z);
        }
        MlpCache {
            inputs,
            pre,
            output: h,
        }
    }

    /// Vector-Jacobian product: given dL/d(output), accumulates parameter
    /// gradients into `grads` and returns dL/d(input).
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_output: &DVector<f64>,
        grads: &mut MlpGrads,
    ) -> DVector<f64> {
        let n = self.layers.len();
        let mut delta = match self.output_activation {
            OutputActivation::Linear => grad_output.clone(),
            OutputActivation::Sigmoid => {
                let y = &cache.output;
                DVector::from_fn(y.len(), |i, _| grad_output[i] * y[i] * (1.0 - y[i]))
            }
        };
        for i in (0..n).rev() {
            if i + 1 < n {
                // Chain through the ReLU of layer i.
                let z = &cache.pre[i];
                for (d, &zv) in delta.iter_mut().zip(z.iter()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads.layers[i].weight += &delta * cache.inputs[i].transpose();
            grads.layers[i].bias += &delta;
            delta = self.layers[i].weight.transpose() * delta;
        }
        delta
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> crate::error::Result<()> {
        if flat.len() != self.param_count() {
            return Err(crate::error::SplatError::LengthMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for v in l.weight.iter_mut() {
                *v = *it.next().unwrap();
            }
            for v in l.bias.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn apply_step(&mut self, grads: &MlpGrads, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weight -= lr * &g.weight;
            l.bias -= lr * &g.bias;
        }
    }
}
