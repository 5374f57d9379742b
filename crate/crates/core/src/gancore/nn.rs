//! Layer sequences and their parameters.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::{ConvGeom, Scalar, Tensor};
use crate::rng;

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
    Sigmoid,
    /// `[N, C·H·W] → [N, C, H, W]`
    Reshape { channels: usize, height: usize, width: usize },
    /// `[N, ...] → [N, prod(...)]`
    Flatten,
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    ConvTranspose2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    BatchNorm { channels: usize },
    Dropout { rate: f64 },
}

impl Layer {
    /// Display name as used in architecture tables.
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "Dense",
            Layer::LeakyRelu { .. } => "Leaky ReLU",
            Layer::Relu => "ReLU",
            Layer::Tanh => "Tanh",
            Layer::Sigmoid => "Sigmoid",
            Layer::Reshape { .. } => "Reshape",
            Layer::Flatten => "Flatten",
            Layer::Conv2d { .. } => "Conv2D",
            Layer::ConvTranspose2d { .. } => "Transposed Conv2D",
            Layer::BatchNorm { .. } => "Batch Norm",
            Layer::Dropout { .. } => "Dropout",
        }
    }

    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => vec![("weight", vec![inputs, outputs]), ("bias", vec![outputs])],
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels * kernel * kernel]),
                ("bias", vec![out_channels]),
            ],
            Layer::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![in_channels, out_channels * kernel * kernel]),
                ("bias", vec![out_channels]),
            ],
            Layer::BatchNorm { channels } => vec![("gamma", vec![channels]), ("beta", vec![channels])],
            _ => vec![],
        }
    }

    fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::BatchNorm { channels } => vec![("running_mean", vec![channels]), ("running_var", vec![channels])],
            _ => vec![],
        }
    }

    /// Per-sample output shape for a per-sample input shape, if compatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        let numel: usize = input.iter().product();
        match *self {
            Layer::Dense { inputs, outputs } => (input.len() == 1 && input[0] == inputs).then(|| vec![outputs]),
            Layer::Reshape {
                channels,
                height,
                width,
            } => (numel == channels * height * width).then(|| vec![channels, height, width]),
            Layer::Flatten => Some(vec![numel]),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                if input.len() != 3 || input[0] != in_channels || input[1] + 2 * pad < kernel || input[2] + 2 * pad < kernel {
                    return None;
                }
                Some(vec![
                    out_channels,
                    (input[1] + 2 * pad - kernel) / stride + 1,
                    (input[2] + 2 * pad - kernel) / stride + 1,
                ])
            }
            Layer::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return None;
                }
                let h = (input[1] - 1) * stride + kernel;
                let w = (input[2] - 1) * stride + kernel;
                (h > 2 * pad && w > 2 * pad).then(|| vec![out_channels, h - 2 * pad, w - 2 * pad])
            }
            Layer::BatchNorm { channels } => (input.first() == Some(&channels)).then(|| input.to_vec()),
            _ => Some(input.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// How a forward pass treats batch norm and dropout.
pub struct Phase<'a> {
    pub training: bool,
    /// Update batch-norm running statistics (training only).
    pub update_stats: bool,
    /// Source of dropout masks; required when training with dropout.
    pub rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Phase<'a> {
    pub fn train(rng: &'a mut dyn RngCore) -> Self {
        Phase {
            training: true,
            update_stats: true,
            rng: Some(rng),
        }
    }

    pub fn eval() -> Self {
        Phase {
            training: false,
            update_stats: false,
            rng: None,
        }
    }
}

/// A feed-forward network: a layer sequence with its parameters and
/// batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<T> {
    pub layers: Vec<Layer>,
    /// Per-sample input shape.
    pub input_shape: Vec<usize>,
    pub params: Vec<NamedTensor<T>>,
    pub buffers: Vec<NamedTensor<T>>,
}

impl<T: Scalar> Net<T> {
    /// Allocates and initialises parameters for `layers`.
    ///
    /// Dense weights are uniform in `±1/√fan_in`, convolution weights
    /// `N(0, 0.02²)`, biases and batch-norm shifts zero, batch-norm scales one.
    /// Parameter `i` draws from stream `(init_seed, Init, stream_base + i)`.
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>, init_seed: u64, stream_base: u64) -> Self {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for (li, layer) in layers.iter().enumerate() {
            for (pname, shape) in layer.param_shapes() {
                let mut r = rng::stream(init_seed, rng::Domain::Init, stream_base + params.len() as u64);
                let numel: usize = shape.iter().product();
                let data: Vec<T> = match (layer, pname) {
                    (Layer::Dense { inputs, .. }, "weight") => {
                        let b = 1.0 / libm::sqrt(*inputs as f64);
                        (0..numel).map(|_| T::of(rng::uniform_range(&mut r, -b, b))).collect()
                    }
                    (Layer::Conv2d { .. } | Layer::ConvTranspose2d { .. }, "weight") => {
                        (0..numel).map(|_| T::of(0.02 * rng::normal(&mut r))).collect()
                    }
                    (Layer::BatchNorm { .. }, "gamma") => vec![T::one(); numel],
                    _ => vec![T::zero(); numel],
                };
                params.push(NamedTensor {
                    name: format!("{li}.{pname}"),
                    tensor: Tensor::new(shape, data),
                });
            }
            for (bname, shape) in layer.buffer_shapes() {
                let fill = if bname == "running_var" { T::one() } else { T::zero() };
                buffers.push(NamedTensor {
                    name: format!("{li}.{bname}"),
                    tensor: Tensor::full(&shape, fill),
                });
            }
        }
        Net {
            layers,
            input_shape,
            params,
            buffers,
        }
    }

    pub fn layer_names(&self) -> Vec<&'static str> {
        self.layers.iter().map(Layer::name).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Option<Vec<usize>> {
        let mut s = self.input_shape.clone();
        for l in &self.layers {
            s = l.output_shape(&s)?;
        }
        Some(s)
    }

    /// Puts every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.tensor.clone())).collect()
    }

    pub fn param_tensors(&self) -> Vec<&Tensor<T>> {
        self.params.iter().map(|p| &p.tensor).collect()
    }

    /// Runs the network on a batch `x` of shape `[N, input_shape...]`.
    pub fn forward(&mut self, tape: &mut Tape<T>, params: &[Var], x: Var, phase: &mut Phase<'_>) -> Var {
        assert_eq!(params.len(), self.params.len(), "parameter binding mismatch");
        let mut h = x;
        let mut pi = 0;
        let mut bi = 0;
        for li in 0..self.layers.len() {
            let layer = self.layers[li].clone();
            let n = tape.shape(h)[0];
            h = match layer {
                Layer::Dense { .. } => {
                    let (w, b) = (params[pi], params[pi + 1]);
                    pi += 2;
                    let y = tape.matmul(h, w, false, false);
                    let bb = tape.broadcast_rows(b, n);
                    tape.add(y, bb)
                }
                Layer::LeakyRelu { slope } => tape.leaky_relu(h, T::of(slope)),
                Layer::Relu => tape.relu(h),
                Layer::Tanh => tape.tanh(h),
                Layer::Sigmoid => tape.sigmoid(h),
                Layer::Reshape {
                    channels,
                    height,
                    width,
                } => tape.reshape(h, &[n, channels, height, width]),
                Layer::Flatten => {
                    let numel = tape.value(h).len() / n.max(1);
                    tape.reshape(h, &[n, numel])
                }
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let (w, b) = (params[pi], params[pi + 1]);
                    pi += 2;
                    let s = tape.shape(h).to_vec();
                    let geom = ConvGeom {
                        batch: n,
                        channels: s[1],
                        height: s[2],
                        width: s[3],
                        kernel,
                        stride,
                        pad,
                    };
                    let (ho, wo) = geom.out_hw();
                    let cols = tape.unfold(h, geom);
                    let y = tape.matmul(w, cols, false, false);
                    let y = tape.reshape(y, &[out_channels, n, ho * wo]);
                    let y = tape.swap01(y);
                    let y = tape.reshape(y, &[n, out_channels, ho, wo]);
                    let bb = tape.channel_broadcast(b, &[n, out_channels, ho, wo]);
                    tape.add(y, bb)
                }
                Layer::ConvTranspose2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    let (w, b) = (params[pi], params[pi + 1]);
                    pi += 2;
                    let s = tape.shape(h).to_vec();
                    let (hi, wi) = (s[2], s[3]);
                    let ho = (hi - 1) * stride + kernel - 2 * pad;
                    let wo = (wi - 1) * stride + kernel - 2 * pad;
                    let geom = ConvGeom {
                        batch: n,
                        channels: out_channels,
                        height: ho,
                        width: wo,
                        kernel,
                        stride,
                        pad,
                    };
                    debug_assert_eq!(geom.out_hw(), (hi, wi));
                    let xr = tape.reshape(h, &[n, in_channels, hi * wi]);
                    let xr = tape.swap01(xr);
                    let xr = tape.reshape(xr, &[in_channels, n * hi * wi]);
                    let cols = tape.matmul(w, xr, true, false);
                    let y = tape.fold(cols, geom);
                    let bb = tape.channel_broadcast(b, &[n, out_channels, ho, wo]);
                    tape.add(y, bb)
                }
                Layer::BatchNorm { .. } => {
                    let (gamma, beta) = (params[pi], params[pi + 1]);
                    pi += 2;
                    let out = self.batch_norm(tape, h, gamma, beta, bi, phase);
                    bi += 2;
                    out
                }
                Layer::Dropout { rate } => {
                    if phase.training && rate > 0.0 {
                        let rng = phase.rng.as_deref_mut().expect("dropout in training needs an rng");
                        let keep = 1.0 - rate;
                        let scale = T::of(1.0 / keep);
                        let mask: Vec<T> = (0..tape.value(h).len())
                            .map(|_| if rng::uniform(rng) < keep { scale } else { T::zero() })
                            .collect();
                        tape.mask_mul(h, Rc::new(mask))
                    } else {
                        h
                    }
                }
            };
        }
        h
    }

    fn batch_norm(&mut self, tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var, bi: usize, phase: &Phase<'_>) -> Var {
        let shape = tape.shape(x).to_vec();
        let (n, c) = (shape[0], shape[1]);
        let m = tape.value(x).len() / c;
        let eps = T::of(BATCH_NORM_EPS);
        let (centered, inv_std) = if phase.training {
            let inv_m = T::one() / T::of(m as f64);
            let s = tape.channel_sum(x);
            let mean = tape.scale(s, inv_m);
            let mb = tape.channel_broadcast(mean, &shape);
            let xc = tape.sub(x, mb);
            let sq = tape.square(xc);
            let ss = tape.channel_sum(sq);
            let var = tape.scale(ss, inv_m);
            if phase.update_stats {
                let mom = T::of(BATCH_NORM_MOMENTUM);
                let unbias = if m > 1 { T::of(m as f64 / (m as f64 - 1.0)) } else { T::one() };
                let mean_v = tape.value(mean).data.clone();
                let var_v = tape.value(var).data.clone();
                let rm = &mut self.buffers[bi].tensor.data;
                for (r, v) in rm.iter_mut().zip(&mean_v) {
                    *r = (T::one() - mom) * *r + mom * *v;
                }
                let rv = &mut self.buffers[bi + 1].tensor.data;
                for (r, v) in rv.iter_mut().zip(&var_v) {
                    *r = (T::one() - mom) * *r + mom * *v * unbias;
                }
            }
            let ve = tape.shift(var, eps);
            let sd = tape.sqrt(ve);
            let one = tape.leaf(Tensor::full(&[c], T::one()));
            let inv = tape.div(one, sd);
            (xc, inv)
        } else {
            let rm = self.buffers[bi].tensor.clone();
            let inv = self.buffers[bi + 1].tensor.map(|v| T::one() / (v + eps).sqrt());
            let rmv = tape.leaf(rm);
            let mb = tape.channel_broadcast(rmv, &shape);
            let xc = tape.sub(x, mb);
            (xc, tape.leaf(inv))
        };
        let ib = tape.channel_broadcast(inv_std, &shape);
        let xn = tape.mul(centered, ib);
        let gb = tape.channel_broadcast(gamma, &shape);
        let bb = tape.channel_broadcast(beta, &shape);
        let y = tape.mul(xn, gb);
        debug_assert_eq!(tape.shape(y)[0], n);
        tape.add(y, bb)
    }

    /// Forward pass on plain values (no gradient bookkeeping kept).
    pub fn run(&mut self, x: Tensor<T>, phase: &mut Phase<'_>) -> Tensor<T> {
        let mut tape = Tape::new();
        let pv = self.bind(&mut tape);
        let xv = tape.leaf(x);
        let y = self.forward(&mut tape, &pv, xv, phase);
        tape.value(y).clone()
    }
}
