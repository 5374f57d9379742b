//! The four model families and their construction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::nn::{Layer, Net};
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MlpGan,
    MlpWganGp,
    Dcgan,
    ConvWganGp,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::MlpGan, Family::MlpWganGp, Family::Dcgan, Family::ConvWganGp];

    pub fn is_wasserstein(self) -> bool {
        matches!(self, Family::MlpWganGp | Family::ConvWganGp)
    }

    pub fn is_conv(self) -> bool {
        matches!(self, Family::Dcgan | Family::ConvWganGp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::MlpGan => "mlp_gan",
            Family::MlpWganGp => "mlp_wgan_gp",
            Family::Dcgan => "dcgan",
            Family::ConvWganGp => "conv_wgan_gp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputShape {
    Points { dim: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl OutputShape {
    /// Per-sample tensor shape (`[d]` or `[C, H, W]`).
    pub fn sample_shape(&self) -> Vec<usize> {
        match *self {
            OutputShape::Points { dim } => vec![dim],
            OutputShape::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
        }
    }

    pub fn numel(&self) -> usize {
        self.sample_shape().iter().product()
    }
}

/// Architecture description. Widths and the convolution plan are free
/// parameters; the layer order follows each family's fixed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub latent_dim: usize,
    pub output: OutputShape,
    /// Hidden widths of the three MLP hidden layers.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Generator channels: after the dense projection, after the first and
    /// second transposed convolutions.
    #[serde(default = "default_gen_channels")]
    pub gen_channels: [usize; 3],
    /// Critic channels of the four convolution blocks.
    #[serde(default = "default_critic_channels")]
    pub critic_channels: [usize; 4],
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_lambda")]
    pub gp_lambda: f64,
    /// Keep batch norm in the image critic.
    #[serde(default = "default_true")]
    pub critic_batchnorm: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![128; 3]
}
fn default_gen_channels() -> [usize; 3] {
    [128, 64, 32]
}
fn default_critic_channels() -> [usize; 4] {
    [32, 64, 128, 128]
}
fn default_slope() -> f64 {
    0.2
}
fn default_dropout() -> f64 {
    0.3
}
fn default_lambda() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}

impl ModelSpec {
    /// MLP model for `dim`-dimensional points; latent size equals `dim`.
    pub fn points(family: Family, dim: usize) -> Self {
        ModelSpec {
            family,
            latent_dim: dim,
            output: OutputShape::Points { dim },
            hidden: default_hidden(),
            gen_channels: default_gen_channels(),
            critic_channels: default_critic_channels(),
            leaky_slope: default_slope(),
            dropout: default_dropout(),
            gp_lambda: default_lambda(),
            critic_batchnorm: true,
        }
    }

    /// Convolutional model for 28×28 images with 100 latent dimensions.
    pub fn images(family: Family, channels: usize) -> Self {
        ModelSpec {
            latent_dim: 100,
            output: OutputShape::Image {
                channels,
                height: 28,
                width: 28,
            },
            ..Self::points(family, 2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidSpec(m));
        if self.latent_dim == 0 {
            return bad(format!("latent_dim must be positive"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.gp_lambda >= 0.0 && self.gp_lambda.is_finite()) {
            return bad(format!("gp_lambda must be finite and nonnegative"));
        }
        match (self.family.is_conv(), self.output) {
            (false, OutputShape::Points { dim }) => {
                if dim == 0 {
                    return bad(format!("point dimension must be positive"));
                }
                if self.hidden.len() != 3 || self.hidden.contains(&0) {
                    return bad(format!("MLP families need three positive hidden widths, got {:?}", self.hidden));
                }
            }
            (
                true,
                OutputShape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                if channels == 0 || height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0 {
                    return bad(format!("image output {channels}x{height}x{width} needs H, W divisible by 4"));
                }
                if self.gen_channels.contains(&0) || self.critic_channels.contains(&0) {
                    return bad(format!("channel plan entries must be positive"));
                }
            }
            (true, OutputShape::Points { .. }) => {
                return bad(format!("{} emits images, not points", self.family.as_str()));
            }
            (false, OutputShape::Image { .. }) => {
                return bad(format!("{} emits points, not images", self.family.as_str()));
            }
        }
        Ok(())
    }

    pub fn generator_layers(&self) -> Vec<Layer> {
        let lrelu = Layer::LeakyRelu { slope: self.leaky_slope };
        match self.output {
            OutputShape::Points { dim } => {
                let h = &self.hidden;
                vec![
                    Layer::Dense { inputs: self.latent_dim, outputs: h[0] },
                    lrelu.clone(),
                    Layer::Dense { inputs: h[0], outputs: h[1] },
                    lrelu.clone(),
                    Layer::Dense { inputs: h[1], outputs: h[2] },
                    lrelu,
                    Layer::Dense { inputs: h[2], outputs: dim },
                    Layer::Tanh,
                ]
            }
            OutputShape::Image {
                channels,
                height,
                width,
            } => {
                let [g0, g1, g2] = self.gen_channels;
                let (h4, w4) = (height / 4, width / 4);
                // WGAN-GP generator uses ReLU in the first two blocks
                let (a0, a1) = if self.family == Family::ConvWganGp {
                    (Layer::Relu, Layer::Relu)
                } else {
                    (lrelu.clone(), lrelu.clone())
                };
                vec![
                    Layer::Dense { inputs: self.latent_dim, outputs: g0 * h4 * w4 },
                    a0,
                    Layer::Reshape { channels: g0, height: h4, width: w4 },
                    Layer::ConvTranspose2d { in_channels: g0, out_channels: g1, kernel: 3, stride: 1, pad: 1 },
                    Layer::BatchNorm { channels: g1 },
                    a1,
                    Layer::ConvTranspose2d { in_channels: g1, out_channels: g2, kernel: 4, stride: 2, pad: 1 },
                    Layer::BatchNorm { channels: g2 },
                    lrelu,
                    Layer::ConvTranspose2d { in_channels: g2, out_channels: channels, kernel: 4, stride: 2, pad: 1 },
                    Layer::Tanh,
                ]
            }
        }
    }

    pub fn critic_layers(&self) -> Vec<Layer> {
        let lrelu = Layer::LeakyRelu { slope: self.leaky_slope };
        let mut layers = match self.output {
            OutputShape::Points { dim } => {
                let h = &self.hidden;
                vec![
                    Layer::Dense { inputs: dim, outputs: h[0] },
                    lrelu.clone(),
                    Layer::Dense { inputs: h[0], outputs: h[1] },
                    lrelu.clone(),
                    Layer::Dense { inputs: h[1], outputs: h[2] },
                    lrelu,
                    Layer::Dense { inputs: h[2], outputs: 1 },
                ]
            }
            OutputShape::Image {
                channels,
                height,
                width,
            } => {
                let [d0, d1, d2, d3] = self.critic_channels;
                let drop = Layer::Dropout { rate: self.dropout };
                // (in, out, kernel, stride): 28 → 14 → 7 → 4 → 4
                let plan = [(channels, d0, 4, 2), (d0, d1, 4, 2), (d1, d2, 3, 2), (d2, d3, 3, 1)];
                let mut layers = Vec::new();
                let mut shape = vec![channels, height, width];
                for (i, &(cin, cout, k, s)) in plan.iter().enumerate() {
                    let conv = Layer::Conv2d { in_channels: cin, out_channels: cout, kernel: k, stride: s, pad: 1 };
                    shape = conv.output_shape(&shape).expect("critic plan fits the image");
                    layers.push(conv);
                    if i > 0 && self.critic_batchnorm {
                        layers.push(Layer::BatchNorm { channels: cout });
                    }
                    layers.push(lrelu.clone());
                    layers.push(drop.clone());
                }
                layers.push(Layer::Flatten);
                layers.push(Layer::Dense { inputs: shape.iter().product(), outputs: 1 });
                layers
            }
        };
        if !self.family.is_wasserstein() {
            layers.push(Layer::Sigmoid);
        }
        layers
    }
}

/// Critic parameters start at this stream offset so they never share
/// streams with the generator.
pub const CRITIC_STREAM_BASE: u64 = 1 << 20;

/// A generator and its critic (or discriminator).
#[derive(Debug, Clone, PartialEq)]
pub struct GanPair<T> {
    pub spec: ModelSpec,
    pub generator: Net<T>,
    pub critic: Net<T>,
}

impl<T> GanPair<T> {
    /// GAN discriminators end in a sigmoid; Wasserstein critics do not.
    pub fn has_output_sigmoid(&self) -> bool {
        !self.spec.family.is_wasserstein()
    }
}

pub fn build_model<T: Scalar>(spec: &ModelSpec, init_seed: u64) -> Result<GanPair<T>> {
    spec.validate()?;
    let generator = Net::new(spec.generator_layers(), vec![spec.latent_dim], init_seed, 0);
    let critic = Net::new(spec.critic_layers(), spec.output.sample_shape(), init_seed, CRITIC_STREAM_BASE);
    let g_out = generator.output_shape();
    if g_out.as_deref() != Some(&spec.output.sample_shape()[..]) {
        return Err(Error::InvalidSpec(format!(
            "generator emits {g_out:?}, expected {:?}",
            spec.output.sample_shape()
        )));
    }
    if critic.output_shape().as_deref() != Some(&[1][..]) {
        return Err(Error::InvalidSpec(format!("critic does not reduce to a scalar")));
    }
    Ok(GanPair {
        spec: spec.clone(),
        generator,
        critic,
    })
}

impl core::fmt::Display for Family {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}
