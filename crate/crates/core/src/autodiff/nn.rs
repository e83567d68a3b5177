use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "isl-generator";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Self::Tanh => x.tanh(),
            Self::Relu => x.max(0.0),
        }
    }

    fn on_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Self::Elu => tape.elu(x),
            Self::Tanh => tape.tanh(x),
            Self::Relu => tape.relu(x),
        }
    }
}

/// Dense layer `y = W x + b` with `W` stored row-major (`rows = outputs`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Fully connected network; every hidden layer uses `activation`, the last
/// layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Tape handles for every parameter of a generator, in flat order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    activation: Activation,
    layers: Vec<Layer>,
}

impl Generator {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let limit = (6.0 / (cols + rows) as f64).sqrt();
                Layer {
                    rows,
                    cols,
                    weights: (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect(),
                    bias: vec![0.0; rows],
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("generator needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(Error::DimensionMismatch {
                    expected: l.rows * l.cols,
                    got: l.weights.len(),
                });
            }
            if i > 0 && layers[i - 1].rows != l.cols {
                return Err(Error::DimensionMismatch {
                    expected: layers[i - 1].rows,
                    got: l.cols,
                });
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite parameter".into()));
            }
        }
        Ok(Self { layers, activation })
    }

    /// The 7–13–7–1 ELU network used for 1D targets (latent dimension 1).
    pub fn mlp_1d<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(&[1, 7, 13, 7, 1], Activation::Elu, rng).expect("valid sizes")
    }

    /// Three tanh hidden layers of 32 units mapping ℝ² to ℝ².
    pub fn mlp_2d<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(&[2, 32, 32, 32, 2], Activation::Tanh, rng).expect("valid sizes")
    }

    /// Five ELU hidden layers of widths 16, 16, 32, 32, 16 for transport maps.
    pub fn mlp_ot<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(&[1, 16, 16, 32, 32, 16, 1], Activation::Elu, rng).expect("valid sizes")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").rows
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter vector: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
        Ok(())
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Plain forward pass without a tape.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let mut x = z.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut y = l.bias.clone();
            for (r, yr) in y.iter_mut().enumerate() {
                let row = &l.weights[r * l.cols..(r + 1) * l.cols];
                *yr += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                if li != last {
                    *yr = self.activation.apply(*yr);
                }
            }
            x = y;
        }
        Ok(x)
    }

    /// Forward pass for a batch of scalar latents (1D input and output).
    pub fn eval_scalar_batch(&self, zs: &[f64]) -> Result<Vec<f64>> {
        zs.iter().map(|&z| Ok(self.eval(&[z])?[0])).collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.params().into_iter().map(|v| tape.var(v)).collect(),
        }
    }

    /// Records the forward pass on `tape`. Each neuron is one fused node whose
    /// partials are those of `b + Σ wᵢxᵢ`.
    pub fn forward(&self, bound: &BoundParams, z: &[f64], tape: &mut Tape) -> Result<Vec<Var>> {
        self.check_input(z)?;
        if bound.vars.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: bound.vars.len(),
            });
        }
        // First layer inputs are constants; keep them as plain values.
        let mut inputs: Vec<Option<Var>> = vec![None; z.len()];
        let mut input_values = z.to_vec();
        let mut offset = 0;
        let last = self.layers.len() - 1;
        let mut edges: Vec<(Var, f64)> = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            let w_vars = &bound.vars[offset..offset + l.weights.len()];
            let b_vars = &bound.vars[offset + l.weights.len()..offset + l.weights.len() + l.rows];
            offset += l.weights.len() + l.rows;
            let mut outs = Vec::with_capacity(l.rows);
            let mut out_values = Vec::with_capacity(l.rows);
            for r in 0..l.rows {
                edges.clear();
                let mut acc = l.bias[r];
                edges.push((b_vars[r], 1.0));
                for c in 0..l.cols {
                    let w = l.weights[r * l.cols + c];
                    let x = input_values[c];
                    acc += w * x;
                    edges.push((w_vars[r * l.cols + c], x));
                    if let Some(xv) = inputs[c] {
                        edges.push((xv, w));
                    }
                }
                let pre = tape.custom(acc, &edges);
                let post = if li != last {
                    self.activation.on_tape(tape, pre)
                } else {
                    pre
                };
                out_values.push(tape.value(post));
                outs.push(Some(post));
            }
            inputs = outs;
            input_values = out_values;
        }
        Ok(inputs.into_iter().map(|v| v.expect("every layer has outputs")).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            activation: self.activation,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Self::from_layers(ckpt.layers, ckpt.activation)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
