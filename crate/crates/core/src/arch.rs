//! Architecture specs and the two reference presets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, NetworkDescriptor, PoolLayer, Shape};
use crate::tensor::Tensor;

/// One layer of an architecture, without weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Hidden dense layers use ReLU; the last dense layer becomes the softmax output.
    Dense {
        units: usize,
    },
    Conv {
        maps: usize,
        kernel: usize,
    },
    Pool,
}

/// Weightless network description, loadable from a JSON "custom spec file".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// 784 × 600 × 600 × 10 perceptron.
    pub fn mlp_ref() -> Self {
        Self {
            input_shape: vec![784],
            layers: vec![
                LayerSpec::Dense { units: 600 },
                LayerSpec::Dense { units: 600 },
                LayerSpec::Dense { units: 10 },
            ],
        }
    }

    /// conv20(5×5) / pool / conv80(5×5) / pool / fc400 / fc10 on 28×28 inputs.
    pub fn cnn_ref() -> Self {
        Self {
            input_shape: vec![1, 28, 28],
            layers: vec![
                LayerSpec::Conv { maps: 20, kernel: 5 },
                LayerSpec::Pool,
                LayerSpec::Conv { maps: 80, kernel: 5 },
                LayerSpec::Pool,
                LayerSpec::Dense { units: 400 },
                LayerSpec::Dense { units: 10 },
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("architecture spec: {e}")))
    }

    /// Instantiates the architecture with Glorot-uniform weights, zero biases.
    ///
    /// Weights are drawn from `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`, layer by
    /// layer in storage order from a ChaCha8 stream seeded with `seed`.
    pub fn build(&self, seed: u64) -> Result<NetworkDescriptor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = match *self.input_shape.as_slice() {
            [n] => Shape::Flat(n),
            [maps, h, w] => Shape::Maps { maps, h, w },
            _ => {
                return Err(Error::Dimension(format!(
                    "input shape {:?} must be [features] or [maps, h, w]",
                    self.input_shape
                )))
            }
        };
        let last_dense = self
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .ok_or_else(|| Error::Structure("architecture has no dense output layer".into()))?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (idx, spec) in self.layers.iter().enumerate() {
            match *spec {
                LayerSpec::Dense { units } => {
                    let fan_in = shape.len();
                    let values = glorot(&mut rng, fan_in * units, fan_in, units);
                    let activation = if idx == last_dense { Activation::Softmax } else { Activation::Relu };
                    layers.push(Layer::Dense(DenseLayer::new(
                        Tensor::new(vec![fan_in, units], values)?,
                        vec![0.0; units],
                        activation,
                    )?));
                    shape = Shape::Flat(units);
                }
                LayerSpec::Conv { maps, kernel } => {
                    let Shape::Maps { maps: in_maps, h, w } = shape else {
                        return Err(Error::Structure(format!("layer {idx}: convolution after a flat layer")));
                    };
                    if h < kernel || w < kernel {
                        return Err(Error::Dimension(format!("layer {idx}: kernel larger than input")));
                    }
                    let area = kernel * kernel;
                    let values = glorot(&mut rng, maps * in_maps * area, in_maps * area, maps * area);
                    layers.push(Layer::Conv(ConvLayer::new(
                        Tensor::new(vec![maps, in_maps, kernel, kernel], values)?,
                        vec![0.0; maps],
                    )?));
                    shape = Shape::Maps { maps, h: h - kernel + 1, w: w - kernel + 1 };
                }
                LayerSpec::Pool => {
                    let Shape::Maps { maps, h, w } = shape else {
                        return Err(Error::Structure(format!("layer {idx}: pooling after a flat layer")));
                    };
                    layers.push(Layer::Pool(PoolLayer));
                    shape = Shape::Maps { maps, h: h / 2, w: w / 2 };
                }
            }
        }
        NetworkDescriptor::new(self.input_shape.clone(), layers, shape.len())
    }
}

fn glorot(rng: &mut ChaCha8Rng, count: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..limit)).collect()
}
