//! Small binary networks with hand-written backpropagation.
//!
//! Every layer owns full-precision proxy weights. The forward pass reads only
//! their quantized image `α ⊙ sign(w)` (one `α` per layer, held constant on the
//! backward path) and gradients reach the proxies through the STE.

use crate::binarize::{compute_scale, sign, ScaleMode};
use crate::error::{check_dims, Error, Result};
use crate::numerics::{FeasibleBox, Vector};

mod data;
mod io;
mod loss;
mod train;

pub use data::{make_synthetic_data, sparse_binary, DataKind, Dataset};
pub use io::{load_weights, save_weights};
pub use loss::{cross_entropy_loss, mse_loss, LossKind};
pub use train::{train, TrainLog, TrainOptions, TrainRow, TRAIN_LOG_CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    /// `sign(z)` forward; backward passes the gradient where `|z| ≤ clip`.
    Sign {
        clip: f64,
    },
    /// `clamp(z, −1, 1)`, the full-precision counterpart of `Sign { clip: 1 }`.
    HardTanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sign { .. } => sign(z),
            Activation::HardTanh => z.clamp(-1.0, 1.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sign { clip } => f64::from(u8::from(z.abs() <= clip)),
            Activation::HardTanh => f64::from(u8::from(z.abs() <= 1.0)),
        }
    }
}

/// Affine map `y = act(Ŵ x + b)` with `Ŵ = α ⊙ sign(W)` when quantized.
/// `W` is stored row-major, `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryLinear {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
    quantize_weights: bool,
    activation: Activation,
}

impl BinaryLinear {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
        quantize_weights: bool,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        check_dims(in_dim * out_dim, weights.len())?;
        if let Some(b) = &bias {
            check_dims(out_dim, b.len())?;
        }
        let layer = Self {
            in_dim,
            out_dim,
            weights,
            bias,
            quantize_weights,
            activation,
        };
        if layer.params_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer parameters must be finite".into()));
        }
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn quantize_weights(&self) -> bool {
        self.quantize_weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn params_iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter().flatten())
    }

    /// Scale of the quantized weights (`1` for a full-precision layer).
    pub fn alpha(&self, mode: ScaleMode) -> Result<f64> {
        if !self.quantize_weights {
            return Ok(1.0);
        }
        compute_scale(&Vector::from_slice(&self.weights)?, mode)
    }

    /// The weights the forward pass uses.
    pub fn effective_weights(&self, mode: ScaleMode) -> Result<(f64, Vec<f64>)> {
        let alpha = self.alpha(mode)?;
        let w = if self.quantize_weights {
            self.weights.iter().map(|&x| alpha * sign(x)).collect()
        } else {
            self.weights.clone()
        };
        Ok((alpha, w))
    }
}

/// A chain of layers sharing one scale rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    layers: Vec<BinaryLinear>,
    scale: ScaleMode,
    version: u64,
    /// `(α, Ŵ)` per layer for the current parameters.
    effective: Vec<(f64, Vec<f64>)>,
}

#[derive(Clone, Debug)]
struct LayerRecord {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
}

/// Intermediates of one forward pass, valid until the parameters change.
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    records: Vec<LayerRecord>,
}

impl Model {
    pub fn new(layers: Vec<BinaryLinear>, scale: ScaleMode) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dims(pair[0].out_dim, pair[1].in_dim)?;
        }
        let effective = layers
            .iter()
            .map(|l| l.effective_weights(scale))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            scale,
            version: 0,
            effective,
        })
    }

    pub fn layers(&self) -> &[BinaryLinear] {
        &self.layers
    }

    pub fn scale(&self) -> ScaleMode {
        self.scale
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(BinaryLinear::num_params).sum()
    }

    /// Incremented whenever the parameters change.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// All proxies, layer by layer: weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params_iter().copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dims(self.num_params(), params.len())?;
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameters must be finite".into()));
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            rest = tail;
            if let Some(b) = &mut layer.bias {
                let (bv, tail) = rest.split_at(b.len());
                b.copy_from_slice(bv);
                rest = tail;
            }
        }
        self.effective = self
            .layers
            .iter()
            .map(|l| l.effective_weights(self.scale))
            .collect::<Result<_>>()?;
        self.version += 1;
        Ok(())
    }

    /// Every parameter of a quantized layer paired with whether it is quantized.
    pub fn quantized_mask(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| {
                std::iter::repeat_n(l.quantize_weights, l.weights.len()).chain(std::iter::repeat_n(
                    false,
                    l.bias.as_ref().map_or(0, Vec::len),
                ))
            })
            .collect()
    }

    /// The same architecture with full-precision weights and `HardTanh` in
    /// place of every sign activation.
    pub fn full_precision_twin(&self) -> Self {
        let layers: Vec<BinaryLinear> = self
            .layers
            .iter()
            .map(|l| BinaryLinear {
                quantize_weights: false,
                activation: match l.activation {
                    Activation::Sign { .. } => Activation::HardTanh,
                    a => a,
                },
                ..l.clone()
            })
            .collect();
        Self::new(layers, self.scale).expect("same shapes as a valid model")
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_dims(self.input_dim(), x.len())?;
        let mut records = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (layer, (_, effective)) in self.layers.iter().zip(&self.effective) {
            let mut z = match &layer.bias {
                Some(b) => b.clone(),
                None => vec![0.0; layer.out_dim],
            };
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &effective[o * layer.in_dim..(o + 1) * layer.in_dim];
                *zo += row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
            }
            let out = z.iter().map(|&v| layer.activation.apply(v)).collect();
            records.push(LayerRecord {
                input: std::mem::replace(&mut h, out),
                pre_activation: z,
            });
        }
        Ok((
            h,
            Tape {
                version: self.version,
                records,
            },
        ))
    }

    /// Inference without a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Gradient of the loss with respect to every proxy, in `params()` order.
    pub fn backward(&self, tape: &Tape, loss_grad: &[f64]) -> Result<Vec<f64>> {
        if tape.version != self.version {
            return Err(Error::StaleTape {
                tape: tape.version,
                model: self.version,
            });
        }
        check_dims(self.output_dim(), loss_grad.len())?;
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut upstream = loss_grad.to_vec();
        for ((layer, rec), (alpha, effective)) in self
            .layers
            .iter()
            .zip(&tape.records)
            .zip(&self.effective)
            .rev()
        {
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&rec.pre_activation)
                .map(|(g, &z)| g * layer.activation.derivative(z))
                .collect();
            // dL/dW = dz xᵀ, then through the STE: ×α, identity on sign
            let scale = if layer.quantize_weights { *alpha } else { 1.0 };
            let mut g = Vec::with_capacity(layer.num_params());
            for &d in &dz {
                g.extend(rec.input.iter().map(|x| scale * d * x));
            }
            if layer.bias.is_some() {
                g.extend_from_slice(&dz);
            }
            let mut dx = vec![0.0; layer.in_dim];
            for (o, &d) in dz.iter().enumerate() {
                let row = &effective[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, w) in dx.iter_mut().zip(row) {
                    *acc += w * d;
                }
            }
            grads.push(g);
            upstream = dx;
        }
        Ok(grads.into_iter().rev().flatten().collect())
    }
}

/// Weights uniform in `±1/√in`, zero biases.
fn init_layer(
    in_dim: usize,
    out_dim: usize,
    quantize: bool,
    activation: Activation,
    rng: &mut impl rand::Rng,
) -> Result<BinaryLinear> {
    let r = 1.0 / (in_dim as f64).sqrt();
    let weights = (0..in_dim * out_dim)
        .map(|_| rng.random_range(-r..r))
        .collect();
    BinaryLinear::new(
        in_dim,
        out_dim,
        weights,
        Some(vec![0.0; out_dim]),
        quantize,
        activation,
    )
}

/// Binary-weight MLP: sign activations on hidden layers, identity on the output.
pub fn make_mlp(dims: &[usize], seed: u64) -> Result<Model> {
    use rand::SeedableRng;
    if dims.len() < 2 {
        return Err(Error::Config("an MLP needs input and output sizes".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let last = dims.len() - 2;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            let act = if i == last {
                Activation::Identity
            } else {
                Activation::Sign { clip: 1.0 }
            };
            init_layer(d[0], d[1], true, act, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Model::new(layers, ScaleMode::MeanAbs)
}

/// Binary encoder with sign activations and a binary-weight linear decoder.
pub fn make_autoencoder(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Model> {
    make_mlp(&[input_dim, hidden_dim, input_dim], seed)
}

/// Box every proxy is kept in during training.
pub fn parameter_box(model: &Model, bound: f64) -> Result<FeasibleBox> {
    FeasibleBox::cube(model.num_params(), -bound, bound)
}
