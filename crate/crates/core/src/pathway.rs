//! Class-pathway extraction.
//!
//! A class-pathway is a weight-only quantity: starting from the output unit of
//! class `j`, node-values are back-projected layer by layer,
//!
//! ```text
//! last hidden:   v[i]      = max(0, W_out[i][j])
//! earlier layer: v_prev[i] = max(0, Σ_j v[j] · W[i][j])
//! ```
//!
//! with biases ignored. Convolutional networks are first reduced to a graph with
//! one node per feature map and one scalar weight (the kernel mean) per kernel.
//! The flattened units feeding the dense tail are averaged per map to give the
//! last pooling layer's node-values, scaled by the pool coefficient for the
//! last convolution, and back-projected through the reduced kernel weights for
//! earlier convolutions.

use std::io::{Read, Write};

use crate::error::{domain, structure, Error, Result};
use crate::nn::{Activation, DenseLayer, Layer, NetworkDescriptor, Shape};
use crate::tensor::{relu, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Each layer vector divided by its Euclidean norm (all-zero layers stay zero).
    PerLayerL2,
}

impl Normalization {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "per_layer_l2" | "per-layer-l2" | "l2" => Ok(Normalization::PerLayerL2),
            other => Err(Error::Config(format!("unknown normalization '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::PerLayerL2 => "per_layer_l2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwayConfig {
    /// Coefficient relating last-pooling node-values to last-convolution node-values, in (0, 1].
    pub pool_coefficient: f64,
    pub normalization: Normalization,
    /// Also record node-values for the input layer.
    pub include_input: bool,
    /// Pathway layers used by [`pathway_vector`]; `None` selects all.
    pub layers: Option<Vec<usize>>,
}

impl Default for PathwayConfig {
    fn default() -> Self {
        Self { pool_coefficient: 1.0, normalization: Normalization::None, include_input: false, layers: None }
    }
}

impl PathwayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pool_coefficient > 0.0 && self.pool_coefficient <= 1.0) {
            return Err(Error::Config(format!("pool coefficient must be in (0, 1], got {}", self.pool_coefficient)));
        }
        Ok(())
    }
}

/// Where a pathway layer's nodes live in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSource {
    Input,
    /// Output units (dense) or output maps (conv) of this network layer.
    Layer(usize),
    /// Loaded from a standalone pathway file.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathwayLayer {
    pub source: NodeSource,
    pub width: usize,
}

impl PathwayLayer {
    pub fn unknown(width: usize) -> Self {
        Self { source: NodeSource::Unknown, width }
    }
}

/// Per-layer non-negative node-values for one class, input side first.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPathway {
    class_id: usize,
    layers: Vec<Vec<f64>>,
}

impl ClassPathway {
    pub fn new(class_id: usize, layers: Vec<Vec<f64>>) -> Self {
        Self { class_id, layers }
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// One pathway per class, all sharing the same layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwaySet {
    pathways: Vec<ClassPathway>,
    layout: Vec<PathwayLayer>,
}

impl PathwaySet {
    pub fn new(pathways: Vec<ClassPathway>, layout: Vec<PathwayLayer>) -> Result<Self> {
        if pathways.is_empty() {
            return Err(domain("pathway set is empty"));
        }
        for (idx, p) in pathways.iter().enumerate() {
            if p.class_id != idx {
                return Err(structure(format!("pathway {idx} carries class id {}", p.class_id)));
            }
            if p.layers.len() != layout.len() || p.layers.iter().zip(&layout).any(|(l, s)| l.len() != s.width) {
                return Err(Error::Dimension(format!("pathway {idx} does not match the layer layout")));
            }
            if p.layers.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(domain(format!("pathway {idx} has a negative or non-finite node-value")));
            }
        }
        Ok(Self { pathways, layout })
    }

    pub fn pathways(&self) -> &[ClassPathway] {
        &self.pathways
    }

    pub fn get(&self, class: usize) -> &ClassPathway {
        &self.pathways[class]
    }

    pub fn class_count(&self) -> usize {
        self.pathways.len()
    }

    pub fn layout(&self) -> &[PathwayLayer] {
        &self.layout
    }

    /// CSV rows `class,layer,node_index,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "layer", "node_index", "value"])?;
        for p in &self.pathways {
            for (layer, values) in p.layers.iter().enumerate() {
                for (node, v) in values.iter().enumerate() {
                    w.write_record(&[p.class_id.to_string(), layer.to_string(), node.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut cells: Vec<Vec<Vec<Option<f64>>>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Parse(format!("pathway row needs 4 fields, got {}", rec.len())));
            }
            let idx = |k: usize| -> Result<usize> {
                rec[k].trim().parse().map_err(|_| Error::Parse(format!("bad index '{}'", &rec[k])))
            };
            let (class, layer, node) = (idx(0)?, idx(1)?, idx(2)?);
            let value: f64 =
                rec[3].trim().parse().map_err(|_| Error::Parse(format!("bad node-value '{}'", &rec[3])))?;
            if cells.len() <= class {
                cells.resize(class + 1, Vec::new());
            }
            let layers = &mut cells[class];
            if layers.len() <= layer {
                layers.resize(layer + 1, Vec::new());
            }
            let nodes = &mut layers[layer];
            if nodes.len() <= node {
                nodes.resize(node + 1, None);
            }
            if nodes[node].replace(value).is_some() {
                return Err(Error::Parse(format!("duplicate entry for class {class} layer {layer} node {node}")));
            }
        }
        let mut pathways = Vec::with_capacity(cells.len());
        for (class, layers) in cells.into_iter().enumerate() {
            let layers = layers
                .into_iter()
                .enumerate()
                .map(|(l, nodes)| {
                    nodes
                        .into_iter()
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(|| Error::Parse(format!("class {class} layer {l} has missing nodes")))
                })
                .collect::<Result<Vec<_>>>()?;
            pathways.push(ClassPathway::new(class, layers));
        }
        let layout = pathways
            .first()
            .map(|p| p.layers.iter().map(|l| PathwayLayer::unknown(l.len())).collect())
            .unwrap_or_default();
        Self::new(pathways, layout)
    }
}

fn normalize(layers: &mut [Vec<f64>], mode: Normalization) {
    if mode == Normalization::PerLayerL2 {
        for layer in layers {
            let norm = layer.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                layer.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// `out[i] = max(0, Σ_j v[j] · W[i][j])` for a `[rows × v.len()]` weight matrix.
fn back_project(weights: &Tensor, v: &[f64]) -> Vec<f64> {
    let cols = weights.shape()[1];
    debug_assert_eq!(cols, v.len());
    weights.values().chunks(cols).map(|row| relu(row.iter().zip(v).map(|(w, x)| w * x).sum())).collect()
}

/// Back-projects class `class` through a dense stack.
///
/// Returns the hidden-layer node-values in network order and the input-side values
/// of the first dense layer.
fn back_project_dense(dense: &[&DenseLayer], class: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let out = dense[dense.len() - 1];
    let mut v: Vec<f64> = (0..out.fan_in()).map(|i| relu(out.weight(i, class))).collect();
    let mut hidden = Vec::with_capacity(dense.len() - 1);
    for layer in dense[..dense.len() - 1].iter().rev() {
        let prev = back_project(layer.weights(), &v);
        hidden.push(v);
        v = prev;
    }
    hidden.reverse();
    (hidden, v)
}

/// Pathways of a dense-only network with ReLU hidden layers and a softmax output.
pub fn extract_mlp_pathways(net: &NetworkDescriptor, cfg: &PathwayConfig) -> Result<PathwaySet> {
    cfg.validate()?;
    let dense = dense_layers(net.layers(), 0)?;
    if dense.len() < 2 && !cfg.include_input {
        return Err(structure("network has no hidden layer to extract"));
    }
    let mut layout = Vec::new();
    if cfg.include_input {
        layout.push(PathwayLayer { source: NodeSource::Input, width: net.input_len() });
    }
    for (idx, d) in dense[..dense.len() - 1].iter().enumerate() {
        layout.push(PathwayLayer { source: NodeSource::Layer(idx), width: d.fan_out() });
    }
    let pathways = (0..net.class_count())
        .map(|class| {
            let (hidden, input) = back_project_dense(&dense, class);
            let mut layers = Vec::with_capacity(layout.len());
            if cfg.include_input {
                layers.push(input);
            }
            layers.extend(hidden);
            normalize(&mut layers, cfg.normalization);
            ClassPathway::new(class, layers)
        })
        .collect();
    PathwaySet::new(pathways, layout)
}

fn dense_layers(layers: &[Layer], offset: usize) -> Result<Vec<&DenseLayer>> {
    let last = layers.len() - 1;
    layers
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            Layer::Dense(d) => {
                let ok =
                    if i == last { d.activation() == Activation::Softmax } else { d.activation() == Activation::Relu };
                if ok {
                    Ok(d)
                } else {
                    Err(structure(format!(
                        "layer {}: pathways need ReLU hidden layers and a softmax output",
                        i + offset
                    )))
                }
            }
            other => Err(structure(format!("layer {}: expected a dense layer, found {}", i + offset, other.kind()))),
        })
        .collect()
}

/// A CNN collapsed to one node per feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCnn {
    /// Map-to-map connections, one per convolution: weights `[in_maps × out_maps]`
    /// holding kernel means. Stage 0 connects the input channels to the first maps.
    pub stages: Vec<DenseLayer>,
    /// Network layer index of each convolution.
    pub conv_layers: Vec<usize>,
    /// The dense tail, copied unchanged.
    pub tail: Vec<DenseLayer>,
    /// Network layer index of the first tail layer.
    pub tail_offset: usize,
    /// Spatial size (h, w) of the last pooling layer's maps.
    pub final_map_size: (usize, usize),
}

impl ReducedCnn {
    /// Node count of each reduced map layer (the convolutions' output maps).
    pub fn map_widths(&self) -> Vec<usize> {
        self.stages.iter().map(DenseLayer::fan_out).collect()
    }

    /// Side length of the final square maps.
    pub fn n4(&self) -> usize {
        self.final_map_size.0
    }
}

/// Mean of a kernel's entries.
pub fn kernel_mean(kernel: &[f64]) -> f64 {
    kernel.iter().sum::<f64>() / kernel.len() as f64
}

/// Collapses `(conv, pool)+ dense+` into map-level connections plus the dense tail.
pub fn reduce_cnn_to_mlp(cnn: &NetworkDescriptor) -> Result<ReducedCnn> {
    let layers = cnn.layers();
    let mut idx = 0;
    let mut stages = Vec::new();
    let mut conv_layers = Vec::new();
    while let Some(Layer::Conv(conv)) = layers.get(idx) {
        if !matches!(layers.get(idx + 1), Some(Layer::Pool(_))) {
            return Err(structure(format!("layer {idx}: convolution must be followed by pooling")));
        }
        let (in_maps, out_maps) = (conv.in_maps(), conv.out_maps());
        let mut weights = vec![0.0; in_maps * out_maps];
        for i in 0..in_maps {
            for o in 0..out_maps {
                weights[i * out_maps + o] = kernel_mean(conv.kernel(o, i));
            }
        }
        stages.push(DenseLayer::new(
            Tensor::new(vec![in_maps, out_maps], weights)?,
            vec![0.0; out_maps],
            Activation::Relu,
        )?);
        conv_layers.push(idx);
        idx += 2;
    }
    if stages.is_empty() {
        return Err(structure("network does not start with a convolution"));
    }
    let tail_offset = idx;
    let tail = dense_layers(&layers[idx..], idx)?.into_iter().cloned().collect();
    let Shape::Maps { h, w, .. } = cnn.output_shape(tail_offset - 1) else {
        unreachable!("pool output is always a map shape")
    };
    Ok(ReducedCnn { stages, conv_layers, tail, tail_offset, final_map_size: (h, w) })
}

/// Pathways of a `(conv, pool)+ dense+` network: convolution maps first, then dense hidden units.
pub fn extract_cnn_pathways(cnn: &NetworkDescriptor, cfg: &PathwayConfig) -> Result<PathwaySet> {
    cfg.validate()?;
    let reduced = reduce_cnn_to_mlp(cnn)?;
    let tail: Vec<&DenseLayer> = reduced.tail.iter().collect();
    let block = reduced.final_map_size.0 * reduced.final_map_size.1;

    let mut layout = Vec::new();
    if cfg.include_input {
        layout.push(PathwayLayer { source: NodeSource::Input, width: reduced.stages[0].fan_in() });
    }
    for (stage, &layer) in reduced.stages.iter().zip(&reduced.conv_layers) {
        layout.push(PathwayLayer { source: NodeSource::Layer(layer), width: stage.fan_out() });
    }
    for (i, d) in tail[..tail.len() - 1].iter().enumerate() {
        layout.push(PathwayLayer { source: NodeSource::Layer(reduced.tail_offset + i), width: d.fan_out() });
    }

    let pathways = (0..cnn.class_count())
        .map(|class| {
            let (hidden, flattened) = back_project_dense(&tail, class);
            // each map owns `block` consecutive flattened units
            let pooled: Vec<f64> = flattened.chunks(block).map(|c| c.iter().sum::<f64>() / block as f64).collect();
            let mut maps = vec![pooled.iter().map(|v| cfg.pool_coefficient * v).collect::<Vec<_>>()];
            for stage in reduced.stages.iter().rev() {
                let earlier = back_project(stage.weights(), maps.last().unwrap());
                maps.push(earlier);
            }
            // maps: [last conv, .., first conv, input channels]
            let input = maps.pop().unwrap();
            maps.reverse();
            let mut layers = Vec::with_capacity(layout.len());
            if cfg.include_input {
                layers.push(input);
            }
            layers.extend(maps);
            layers.extend(hidden);
            normalize(&mut layers, cfg.normalization);
            ClassPathway::new(class, layers)
        })
        .collect();
    PathwaySet::new(pathways, layout)
}

/// Dispatches on architecture: dense-only networks use the MLP rule, others the CNN rule.
pub fn extract_pathways(net: &NetworkDescriptor, cfg: &PathwayConfig) -> Result<PathwaySet> {
    if net.is_dense_only() {
        extract_mlp_pathways(net, cfg)
    } else {
        extract_cnn_pathways(net, cfg)
    }
}

/// Concatenation of the selected pathway layers in layer order.
pub fn pathway_vector(p: &ClassPathway, cfg: &PathwayConfig) -> Result<Vec<f64>> {
    match &cfg.layers {
        None => {
            if p.layers.is_empty() {
                return Err(domain("pathway has no layers"));
            }
            Ok(p.layers.iter().flatten().copied().collect())
        }
        Some(sel) => {
            if sel.is_empty() {
                return Err(domain("layer selection is empty"));
            }
            let mut sorted = sel.clone();
            sorted.sort_unstable();
            sorted.dedup();
            let mut out = Vec::new();
            for l in sorted {
                let layer = p.layers.get(l).ok_or_else(|| domain(format!("selected layer {l} does not exist")))?;
                out.extend_from_slice(layer);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConvLayer, PoolLayer};

    fn dense(rows: &[Vec<f64>], act: Activation) -> Layer {
        Layer::Dense(DenseLayer::from_rows(rows, vec![0.0; rows[0].len()], act).unwrap())
    }

    /// Input 2, hidden 2, output 2.
    fn fixture_222() -> NetworkDescriptor {
        NetworkDescriptor::new(
            vec![2],
            vec![
                dense(&[vec![1.0, 2.0], vec![-1.0, 0.4]], Activation::Relu),
                dense(&[vec![0.5, 0.1], vec![-0.3, 0.7]], Activation::Softmax),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn back_projection_hand_example() {
        let cfg = PathwayConfig { include_input: true, ..Default::default() };
        let set = extract_mlp_pathways(&fixture_222(), &cfg).unwrap();
        let p0 = set.get(0);
        // hidden = clamp([0.5, -0.3]); input = clamp([0.5·1, 0.5·(-1)])
        assert_eq!(p0.layers()[1], vec![0.5, 0.0]);
        assert_eq!(p0.layers()[0], vec![0.5, 0.0]);
        let p1 = set.get(1);
        assert_eq!(p1.layers()[1], vec![0.1, 0.7]);
        // input = clamp([0.1·1 + 0.7·2, 0.1·(-1) + 0.7·0.4])
        assert_eq!(p1.layers()[0], vec![0.1 * 1.0 + 0.7 * 2.0, relu(-0.1 + 0.7 * 0.4)]);
    }

    #[test]
    fn negative_output_weights_clamp_everything() {
        let net = NetworkDescriptor::new(
            vec![2],
            vec![
                dense(&[vec![1.0, 2.0], vec![-1.0, 0.4]], Activation::Relu),
                dense(&[vec![-0.5, 0.1], vec![-0.3, 0.7]], Activation::Softmax),
            ],
            2,
        )
        .unwrap();
        let cfg = PathwayConfig { include_input: true, ..Default::default() };
        let set = extract_mlp_pathways(&net, &cfg).unwrap();
        assert!(set.get(0).layers().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn default_excludes_input() {
        let set = extract_mlp_pathways(&fixture_222(), &PathwayConfig::default()).unwrap();
        assert_eq!(set.layout().len(), 1);
        assert_eq!(set.layout()[0].source, NodeSource::Layer(0));
        let v = pathway_vector(set.get(0), &PathwayConfig { layers: Some(vec![0]), ..Default::default() }).unwrap();
        assert_eq!(v, set.get(0).layers()[0]);
    }

    #[test]
    fn non_dense_network_rejected_by_mlp_rule() {
        let cnn = crate::arch::ArchSpec::cnn_ref().build(0).unwrap();
        assert!(matches!(extract_mlp_pathways(&cnn, &PathwayConfig::default()), Err(Error::Structure(_))));
    }

    #[test]
    fn kernel_mean_examples() {
        assert_eq!(kernel_mean(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(kernel_mean(&[0.0; 25]), 0.0);
    }

    #[test]
    fn reduce_requires_alternating_structure() {
        let conv = ConvLayer::new(Tensor::zeros(vec![2, 1, 3, 3]).unwrap(), vec![0.0; 2]).unwrap();
        let net = NetworkDescriptor::new(
            vec![1, 6, 6],
            vec![
                Layer::Conv(conv),
                Layer::Dense(
                    DenseLayer::new(Tensor::zeros(vec![32, 3]).unwrap(), vec![0.0; 3], Activation::Softmax).unwrap(),
                ),
            ],
            3,
        )
        .unwrap();
        assert!(matches!(reduce_cnn_to_mlp(&net), Err(Error::Structure(_))));
    }

    /// conv(1→2, 2×2) on 5×5 -> 4×4 -> pool 2×2; dense 8 -> 2.
    fn tiny_cnn(k_out: [f64; 16]) -> NetworkDescriptor {
        let conv = ConvLayer::new(
            Tensor::new(vec![2, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0, -1.0, -1.0, 0.0, 0.0]).unwrap(),
            vec![0.0; 2],
        )
        .unwrap();
        let out = DenseLayer::new(Tensor::new(vec![8, 2], k_out.to_vec()).unwrap(), vec![0.0; 2], Activation::Softmax)
            .unwrap();
        NetworkDescriptor::new(vec![1, 5, 5], vec![Layer::Conv(conv), Layer::Pool(PoolLayer), Layer::Dense(out)], 2)
            .unwrap()
    }

    #[test]
    fn cnn_pool_average_and_coefficient() {
        // Class 0 weights into the flattened maps: map 0 units [1,2,3,4], map 1 units [0,0,0,-8].
        let mut w = [0.0; 16];
        for (unit, v) in [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, -8.0].iter().enumerate() {
            w[unit * 2] = *v;
        }
        let net = tiny_cnn(w);
        let reduced = reduce_cnn_to_mlp(&net).unwrap();
        assert_eq!(reduced.map_widths(), vec![2]);
        assert_eq!(reduced.n4(), 2);
        assert_eq!(reduced.stages[0].weight(0, 0), 2.5);
        assert_eq!(reduced.stages[0].weight(0, 1), -0.5);

        let set = extract_cnn_pathways(&net, &PathwayConfig::default()).unwrap();
        // no dense hidden layer: pathway is just the conv maps
        assert_eq!(set.get(0).layers(), &[vec![2.5, 0.0]]);

        let half = PathwayConfig { pool_coefficient: 0.5, include_input: true, ..Default::default() };
        let set = extract_cnn_pathways(&net, &half).unwrap();
        assert_eq!(set.get(0).layers()[1], vec![1.25, 0.0]);
        // input channel: clamp(1.25·2.5 + 0·(-0.5))
        assert_eq!(set.get(0).layers()[0], vec![1.25 * 2.5]);
    }

    #[test]
    fn cnn_ref_pathway_widths() {
        let net = crate::arch::ArchSpec::cnn_ref().build(3).unwrap();
        let reduced = reduce_cnn_to_mlp(&net).unwrap();
        assert_eq!(reduced.map_widths(), vec![20, 80]);
        assert_eq!(reduced.n4(), 4);
        let set = extract_cnn_pathways(&net, &PathwayConfig::default()).unwrap();
        let widths: Vec<usize> = set.layout().iter().map(|l| l.width).collect();
        assert_eq!(widths, vec![20, 80, 400]);
        assert_eq!(pathway_vector(set.get(0), &PathwayConfig::default()).unwrap().len(), 500);
    }

    #[test]
    fn mlp_ref_pathway_width() {
        let net = crate::arch::ArchSpec::mlp_ref().build(3).unwrap();
        let set = extract_mlp_pathways(&net, &PathwayConfig::default()).unwrap();
        assert_eq!(set.class_count(), 10);
        assert!(set.pathways().iter().all(|p| p.node_count() == 1200));
    }

    #[test]
    fn per_layer_l2_normalization() {
        let cfg = PathwayConfig { normalization: Normalization::PerLayerL2, include_input: true, ..Default::default() };
        let set = extract_mlp_pathways(&fixture_222(), &cfg).unwrap();
        for p in set.pathways() {
            for layer in p.layers() {
                let norm = layer.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_selection_is_domain_error() {
        let set = extract_mlp_pathways(&fixture_222(), &PathwayConfig::default()).unwrap();
        let cfg = PathwayConfig { layers: Some(vec![]), ..Default::default() };
        assert!(matches!(pathway_vector(set.get(0), &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_pool_coefficient() {
        for k in [0.0, 1.5, f64::NAN] {
            let cfg = PathwayConfig { pool_coefficient: k, ..Default::default() };
            assert!(extract_pathways(&fixture_222(), &cfg).is_err());
        }
    }

    #[test]
    fn csv_roundtrip() {
        let cfg = PathwayConfig { include_input: true, ..Default::default() };
        let set = extract_mlp_pathways(&fixture_222(), &cfg).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = PathwaySet::read_csv(&buf[..]).unwrap();
        assert_eq!(back.pathways(), set.pathways());
    }
}
