//! Versioned JSON model files.
//!
//! Weights are written as plain decimal arrays using the shortest representation
//! that parses back to the same `f64`, so a round-trip is bit-exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, NetworkDescriptor, PoolLayer};
use crate::tensor::Tensor;

pub const MODEL_FORMAT: &str = "flowpath-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    input_shape: Vec<usize>,
    class_count: usize,
    /// Free-form provenance (seed, config); ignored when loading.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerDoc {
    Dense { fan_in: usize, fan_out: usize, activation: String, weights: Vec<f64>, biases: Vec<f64> },
    Conv { out_maps: usize, in_maps: usize, kernel_h: usize, kernel_w: usize, kernels: Vec<f64>, biases: Vec<f64> },
    Pool { window: usize, stride: usize },
}

pub fn persist_model(net: &NetworkDescriptor) -> Vec<u8> {
    persist_model_with(net, &BTreeMap::new())
}

/// Like [`persist_model`], recording `metadata` in the document.
pub fn persist_model_with(net: &NetworkDescriptor, metadata: &BTreeMap<String, String>) -> Vec<u8> {
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerDoc::Dense {
                fan_in: d.fan_in(),
                fan_out: d.fan_out(),
                activation: d.activation().as_str().to_string(),
                weights: d.weights().values().to_vec(),
                biases: d.biases().to_vec(),
            },
            Layer::Conv(c) => LayerDoc::Conv {
                out_maps: c.out_maps(),
                in_maps: c.in_maps(),
                kernel_h: c.kernel_h(),
                kernel_w: c.kernel_w(),
                kernels: c.kernels().values().to_vec(),
                biases: c.biases().to_vec(),
            },
            Layer::Pool(_) => LayerDoc::Pool { window: PoolLayer::WINDOW, stride: PoolLayer::STRIDE },
        })
        .collect();
    let doc = ModelDoc {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        input_shape: net.input_shape().to_vec(),
        class_count: net.class_count(),
        metadata: metadata.clone(),
        layers,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("model document always serializes");
    bytes.push(b'\n');
    bytes
}

pub fn restore_model(bytes: &[u8]) -> Result<NetworkDescriptor> {
    // the version is checked before the body so that newer layouts fail cleanly
    let header: Header = serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("model header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Parse(format!("not a model file (format tag {:?})", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Version { found: header.version, expected: MODEL_VERSION });
    }
    let doc: ModelDoc = serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("model body: {e}")))?;
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(idx, l)| layer_from_doc(l).map_err(|e| Error::Parse(format!("layer {idx}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    NetworkDescriptor::new(doc.input_shape, layers, doc.class_count)
}

fn layer_from_doc(doc: LayerDoc) -> Result<Layer> {
    Ok(match doc {
        LayerDoc::Dense { fan_in, fan_out, activation, weights, biases } => Layer::Dense(DenseLayer::new(
            Tensor::new(vec![fan_in, fan_out], weights)?,
            biases,
            Activation::parse(&activation)?,
        )?),
        LayerDoc::Conv { out_maps, in_maps, kernel_h, kernel_w, kernels, biases } => {
            Layer::Conv(ConvLayer::new(Tensor::new(vec![out_maps, in_maps, kernel_h, kernel_w], kernels)?, biases)?)
        }
        LayerDoc::Pool { window, stride } => {
            if window != PoolLayer::WINDOW || stride != PoolLayer::STRIDE {
                return Err(Error::Parse(format!("unsupported pooling {window}x{window}/{stride}")));
            }
            Layer::Pool(PoolLayer)
        }
    })
}
