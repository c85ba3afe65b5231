//! Node importance from class-pathways, and pruning by it.
//!
//! A node's importance is the sum of its node-values over all class-pathways.
//! Pruning removes the least important nodes of a layer outright: a dense unit
//! loses its weight column, bias and the matching rows downstream; a feature map
//! loses its kernels, bias, every kernel that reads it and, when it feeds the dense
//! tail, its block of flattened rows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{domain, structure, Error, Result};
use crate::nn::{ConvLayer, DenseLayer, Layer, NetworkDescriptor, Shape};
use crate::pathway::{NodeSource, PathwayLayer, PathwaySet};
use crate::tensor::Tensor;
use crate::train::evaluate;

/// Per-layer importances aligned with the pathway layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    layers: Vec<Vec<f64>>,
    layout: Vec<PathwayLayer>,
}

impl ImportanceVector {
    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn layer(&self, idx: usize) -> &[f64] {
        &self.layers[idx]
    }

    pub fn layout(&self) -> &[PathwayLayer] {
        &self.layout
    }

    /// Node indices of one layer from least to most important, ties by lower index.
    pub fn ascending_order(&self, layer: usize) -> Vec<usize> {
        let values = &self.layers[layer];
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        order
    }
}

/// Elementwise sum of all class-pathways.
pub fn node_importance(set: &PathwaySet) -> Result<ImportanceVector> {
    let first = set.pathways().first().ok_or_else(|| domain("pathway set is empty"))?;
    let mut layers: Vec<Vec<f64>> = first.layers().iter().map(|l| vec![0.0; l.len()]).collect();
    for p in set.pathways() {
        for (acc, values) in layers.iter_mut().zip(p.layers()) {
            acc.iter_mut().zip(values).for_each(|(a, v)| *a += v);
        }
    }
    Ok(ImportanceVector { layers, layout: set.layout().to_vec() })
}

/// Nodes to remove, keyed by network layer index (dense units or conv output maps).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneMask {
    removed: BTreeMap<usize, BTreeSet<usize>>,
}

impl PruneMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.values().all(BTreeSet::is_empty)
    }

    pub fn insert(&mut self, network_layer: usize, nodes: impl IntoIterator<Item = usize>) {
        self.removed.entry(network_layer).or_default().extend(nodes);
    }

    pub fn merge(mut self, other: &PruneMask) -> Self {
        for (&layer, nodes) in &other.removed {
            self.insert(layer, nodes.iter().copied());
        }
        self
    }

    pub fn removed(&self, network_layer: usize) -> Option<&BTreeSet<usize>> {
        self.removed.get(&network_layer).filter(|s| !s.is_empty())
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.removed.iter().filter(|(_, s)| !s.is_empty()).map(|(&l, s)| (l, s))
    }

    pub fn count(&self) -> usize {
        self.removed.values().map(BTreeSet::len).sum()
    }
}

fn prunable_layer(imp: &ImportanceVector, pathway_layer: usize, count: usize) -> Result<usize> {
    let layout =
        imp.layout.get(pathway_layer).ok_or_else(|| domain(format!("pathway layer {pathway_layer} does not exist")))?;
    let NodeSource::Layer(network_layer) = layout.source else {
        return Err(structure(format!("pathway layer {pathway_layer} is not tied to a prunable network layer")));
    };
    if count >= layout.width {
        return Err(Error::DegenerateNetwork(format!(
            "cutting {count} of {} nodes would empty pathway layer {pathway_layer}",
            layout.width
        )));
    }
    Ok(network_layer)
}

/// The `count` least important nodes of one pathway layer.
pub fn prune_mask(imp: &ImportanceVector, pathway_layer: usize, count: usize) -> Result<PruneMask> {
    let network_layer = prunable_layer(imp, pathway_layer, count)?;
    let mut mask = PruneMask::empty();
    if count > 0 {
        mask.insert(network_layer, imp.ascending_order(pathway_layer).into_iter().take(count));
    }
    Ok(mask)
}

/// `count` nodes of one pathway layer drawn uniformly without replacement. Control for [`prune_mask`].
pub fn random_prune_mask(imp: &ImportanceVector, pathway_layer: usize, count: usize, seed: u64) -> Result<PruneMask> {
    let network_layer = prunable_layer(imp, pathway_layer, count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = PruneMask::empty();
    if count > 0 {
        mask.insert(network_layer, index::sample(&mut rng, imp.layout[pathway_layer].width, count).into_vec());
    }
    Ok(mask)
}

fn validate_mask(net: &NetworkDescriptor, mask: &PruneMask) -> Result<()> {
    let last = net.layers().len() - 1;
    for (idx, nodes) in mask.layers() {
        let width = match net.layers().get(idx) {
            Some(Layer::Dense(d)) if idx != last => d.fan_out(),
            Some(Layer::Conv(c)) => c.out_maps(),
            Some(other) if idx != last => {
                return Err(structure(format!("layer {idx} is {} and has no prunable nodes", other.kind())))
            }
            Some(_) => return Err(structure("the output layer cannot be pruned")),
            None => return Err(structure(format!("mask names layer {idx}, network has {}", last + 1))),
        };
        if let Some(&bad) = nodes.iter().find(|&&n| n >= width) {
            return Err(structure(format!("layer {idx}: node {bad} out of range (width {width})")));
        }
        if nodes.len() >= width {
            return Err(Error::DegenerateNetwork(format!("mask removes every node of layer {idx}")));
        }
    }
    Ok(())
}

fn kept(width: usize, removed: Option<&BTreeSet<usize>>) -> Vec<usize> {
    (0..width).filter(|i| removed.is_none_or(|r| !r.contains(i))).collect()
}

/// Structurally deletes the masked nodes; the result is a smaller, valid network.
pub fn apply_prune(net: &NetworkDescriptor, mask: &PruneMask) -> Result<NetworkDescriptor> {
    validate_mask(net, mask)?;
    let mut layers = Vec::with_capacity(net.layers().len());
    // indices (units or maps) of the current layer input that survive
    let mut live_inputs: Option<Vec<usize>> = None;
    for (idx, layer) in net.layers().iter().enumerate() {
        let in_shape = net.input_shape_of(idx);
        match layer {
            Layer::Dense(d) => {
                let rows = match (&live_inputs, in_shape) {
                    (None, _) => (0..d.fan_in()).collect(),
                    (Some(maps), Shape::Maps { h, w, .. }) => {
                        maps.iter().flat_map(|&m| m * h * w..(m + 1) * h * w).collect()
                    }
                    (Some(units), Shape::Flat(_)) => units.clone(),
                };
                let cols = kept(d.fan_out(), mask.removed(idx));
                let mut values = Vec::with_capacity(rows.len() * cols.len());
                for &r in &rows {
                    values.extend(cols.iter().map(|&c| d.weight(r, c)));
                }
                let biases = cols.iter().map(|&c| d.biases()[c]).collect();
                layers.push(Layer::Dense(DenseLayer::new(
                    Tensor::new(vec![rows.len(), cols.len()], values)?,
                    biases,
                    d.activation(),
                )?));
                live_inputs = mask.removed(idx).map(|_| cols);
            }
            Layer::Conv(c) => {
                let ins = live_inputs.clone().unwrap_or_else(|| (0..c.in_maps()).collect());
                let outs = kept(c.out_maps(), mask.removed(idx));
                let area = c.kernel_h() * c.kernel_w();
                let mut values = Vec::with_capacity(outs.len() * ins.len() * area);
                for &o in &outs {
                    for &i in &ins {
                        values.extend_from_slice(c.kernel(o, i));
                    }
                }
                let biases = outs.iter().map(|&o| c.biases()[o]).collect();
                layers.push(Layer::Conv(ConvLayer::new(
                    Tensor::new(vec![outs.len(), ins.len(), c.kernel_h(), c.kernel_w()], values)?,
                    biases,
                )?));
                live_inputs = mask.removed(idx).map(|_| outs);
            }
            // pooling keeps the map selection of the convolution before it
            Layer::Pool(p) => layers.push(Layer::Pool(*p)),
        }
    }
    NetworkDescriptor::new(net.input_shape().to_vec(), layers, net.class_count())
}

/// Same effect as [`apply_prune`] without changing shapes: masked nodes get zero
/// incoming weights and bias, so they output exactly zero, and zero outgoing weights.
pub fn apply_prune_masked(net: &NetworkDescriptor, mask: &PruneMask) -> Result<NetworkDescriptor> {
    validate_mask(net, mask)?;
    let mut out = net.clone();
    let shapes: Vec<Shape> = (0..net.layers().len()).map(|i| net.output_shape(i)).collect();
    let mut pending: Option<&BTreeSet<usize>> = None;
    for (idx, layer) in out.layers_mut().iter_mut().enumerate() {
        let in_shape = if idx == 0 { None } else { Some(shapes[idx - 1]) };
        match layer {
            Layer::Dense(d) => {
                let (fan_in, fan_out) = (d.fan_in(), d.fan_out());
                let (w, b) = d.params_mut();
                if let Some(dead) = pending.take() {
                    let block = match in_shape {
                        Some(Shape::Maps { h, w, .. }) => h * w,
                        _ => 1,
                    };
                    for &n in dead {
                        for r in n * block..(n + 1) * block {
                            w[r * fan_out..(r + 1) * fan_out].fill(0.0);
                        }
                    }
                }
                if let Some(dead) = mask.removed(idx) {
                    for &c in dead {
                        (0..fan_in).for_each(|r| w[r * fan_out + c] = 0.0);
                        b[c] = 0.0;
                    }
                    pending = Some(dead);
                }
            }
            Layer::Conv(c) => {
                let (in_maps, area) = (c.in_maps(), c.kernel_h() * c.kernel_w());
                let (k, b) = c.params_mut();
                if let Some(dead) = pending.take() {
                    for o in 0..k.len() / (in_maps * area) {
                        for &i in dead {
                            let start = (o * in_maps + i) * area;
                            k[start..start + area].fill(0.0);
                        }
                    }
                }
                if let Some(dead) = mask.removed(idx) {
                    for &o in dead {
                        k[o * in_maps * area..(o + 1) * in_maps * area].fill(0.0);
                        b[o] = 0.0;
                    }
                    pending = Some(dead);
                }
            }
            Layer::Pool(_) => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneMode {
    #[default]
    Delete,
    Mask,
}

/// One sweep point: the nodes cut per pathway layer, all applied to a fresh copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    /// `(pathway layer, cut count)` pairs. More than one pair is a joint cut.
    pub cuts: Vec<(usize, usize)>,
}

impl SweepPoint {
    pub fn single(pathway_layer: usize, count: usize) -> Self {
        Self { cuts: vec![(pathway_layer, count)] }
    }
}

/// Independent per-layer sweep: every count on every listed layer, others untouched.
pub fn per_layer_schedule(layers: &[usize], counts: &[usize]) -> Vec<SweepPoint> {
    layers.iter().flat_map(|&l| counts.iter().map(move |&c| SweepPoint::single(l, c))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub point: SweepPoint,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepCurve {
    pub records: Vec<SweepRecord>,
}

impl SweepCurve {
    /// Plot-ready CSV `layer,cut_count,error_rate`; joint cuts join entries with `+`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer", "cut_count", "error_rate"])?;
        for r in &self.records {
            let join = |f: fn(&(usize, usize)) -> usize| {
                r.point.cuts.iter().map(|c| f(c).to_string()).collect::<Vec<_>>().join("+")
            };
            w.write_record(&[join(|c| c.0), join(|c| c.1), r.error_rate.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mask for one sweep point, built from importance order.
pub fn point_mask(imp: &ImportanceVector, point: &SweepPoint) -> Result<PruneMask> {
    point
        .cuts
        .iter()
        .try_fold(PruneMask::empty(), |acc, &(layer, count)| Ok(acc.merge(&prune_mask(imp, layer, count)?)))
}

pub fn prune_with(net: &NetworkDescriptor, mask: &PruneMask, mode: PruneMode) -> Result<NetworkDescriptor> {
    match mode {
        PruneMode::Delete => apply_prune(net, mask),
        PruneMode::Mask => apply_prune_masked(net, mask),
    }
}

/// Error rate on `eval` for each schedule point, each pruned from the full network.
pub fn prune_sweep(
    net: &NetworkDescriptor,
    imp: &ImportanceVector,
    schedule: &[SweepPoint],
    eval: &Dataset,
    mode: PruneMode,
) -> Result<SweepCurve> {
    let mut curve = SweepCurve::default();
    for point in schedule {
        let mask = point_mask(imp, point)?;
        let pruned = prune_with(net, &mask, mode)?;
        let error_rate = evaluate(&pruned, eval)?.error_rate();
        curve.records.push(SweepRecord { point: point.clone(), error_rate });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ArchSpec;
    use crate::nn::{forward_batch, Activation};
    use crate::pathway::{extract_pathways, ClassPathway, PathwayConfig};

    fn set(layers: Vec<Vec<Vec<f64>>>) -> PathwaySet {
        let layout = layers[0]
            .iter()
            .enumerate()
            .map(|(i, l)| PathwayLayer { source: NodeSource::Layer(i), width: l.len() })
            .collect();
        let pathways = layers.into_iter().enumerate().map(|(c, l)| ClassPathway::new(c, l)).collect();
        PathwaySet::new(pathways, layout).unwrap()
    }

    fn probe(net: &NetworkDescriptor, count: usize) -> Vec<f64> {
        (0..count * net.input_len()).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect()
    }

    #[test]
    fn importance_is_elementwise_sum() {
        let imp = node_importance(&set(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 2.0]]])).unwrap();
        assert_eq!(imp.layers(), &[vec![1.0, 2.0]]);
        let single = node_importance(&set(vec![vec![vec![0.3, 0.7]]])).unwrap();
        assert_eq!(single.layers(), &[vec![0.3, 0.7]]);
    }

    #[test]
    fn mask_takes_smallest_with_low_index_ties() {
        let imp = node_importance(&set(vec![vec![vec![3.0, 1.0, 2.0]]])).unwrap();
        let mask = prune_mask(&imp, 0, 2).unwrap();
        assert_eq!(mask.removed(0).unwrap().iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert!(prune_mask(&imp, 0, 0).unwrap().is_empty());
        assert!(matches!(prune_mask(&imp, 0, 3), Err(Error::DegenerateNetwork(_))));

        let tied = node_importance(&set(vec![vec![vec![1.0, 1.0, 1.0, 0.5]]])).unwrap();
        assert_eq!(tied.ascending_order(0), vec![3, 0, 1, 2]);
    }

    #[test]
    fn empty_mask_is_bit_identical() {
        for spec in [ArchSpec::mlp_ref(), ArchSpec::cnn_ref()] {
            let net = spec.build(4).unwrap();
            let pruned = apply_prune(&net, &PruneMask::empty()).unwrap();
            assert_eq!(pruned, net);
            let x = probe(&net, 100);
            assert_eq!(forward_batch(&pruned, &x, 100).unwrap(), forward_batch(&net, &x, 100).unwrap());
        }
    }

    #[test]
    fn deletion_shrinks_and_matches_masking() {
        let net = ArchSpec::cnn_ref().build(6).unwrap();
        let mut mask = PruneMask::empty();
        mask.insert(0, [3, 7]);
        mask.insert(2, [0, 10, 79]);
        mask.insert(4, 0..50);
        let deleted = apply_prune(&net, &mask).unwrap();
        assert_eq!(deleted.output_shape(0), Shape::Maps { maps: 18, h: 24, w: 24 });
        assert_eq!(deleted.output_shape(2), Shape::Maps { maps: 77, h: 8, w: 8 });
        assert_eq!(deleted.output_shape(4), Shape::Flat(350));
        let masked = apply_prune_masked(&net, &mask).unwrap();
        let x = probe(&net, 20);
        let a = forward_batch(&deleted, &x, 20).unwrap();
        let b = forward_batch(&masked, &x, 20).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn pruning_a_silent_node_changes_nothing() {
        // hidden unit 1 has zero outgoing weights
        let h =
            DenseLayer::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, -0.3, 0.8]], vec![0.1, 0.2, 0.0], Activation::Relu)
                .unwrap();
        let o = DenseLayer::from_rows(
            &[vec![0.4, -0.2], vec![0.0, 0.0], vec![-0.7, 0.9]],
            vec![0.0; 2],
            Activation::Softmax,
        )
        .unwrap();
        let net = NetworkDescriptor::new(vec![2], vec![Layer::Dense(h), Layer::Dense(o)], 2).unwrap();
        let mut mask = PruneMask::empty();
        mask.insert(0, [1]);
        let pruned = apply_prune(&net, &mask).unwrap();
        let x = probe(&net, 50);
        assert_eq!(forward_batch(&pruned, &x, 50).unwrap(), forward_batch(&net, &x, 50).unwrap());
    }

    #[test]
    fn invalid_masks_rejected() {
        let net = ArchSpec::mlp_ref().build(0).unwrap();
        let mut out_of_range = PruneMask::empty();
        out_of_range.insert(0, [600]);
        assert!(matches!(apply_prune(&net, &out_of_range), Err(Error::Structure(_))));
        let mut output = PruneMask::empty();
        output.insert(2, [0]);
        assert!(matches!(apply_prune(&net, &output), Err(Error::Structure(_))));
        let mut all = PruneMask::empty();
        all.insert(1, 0..600);
        assert!(matches!(apply_prune(&net, &all), Err(Error::DegenerateNetwork(_))));
    }

    #[test]
    fn cnn_importance_maps_to_network_layers() {
        let net = ArchSpec::cnn_ref().build(2).unwrap();
        let imp = node_importance(&extract_pathways(&net, &PathwayConfig::default()).unwrap()).unwrap();
        let m = prune_mask(&imp, 1, 10).unwrap();
        assert_eq!(m.removed(2).unwrap().len(), 10);
        let pruned = apply_prune(&net, &m.merge(&prune_mask(&imp, 2, 150).unwrap())).unwrap();
        assert_eq!(pruned.output_shape(2), Shape::Maps { maps: 70, h: 8, w: 8 });
        assert_eq!(pruned.output_shape(4), Shape::Flat(250));
    }

    #[test]
    fn random_mask_is_seeded() {
        let imp = node_importance(&set(vec![vec![vec![1.0; 20]]])).unwrap();
        let a = random_prune_mask(&imp, 0, 5, 1).unwrap();
        assert_eq!(a, random_prune_mask(&imp, 0, 5, 1).unwrap());
        assert_eq!(a.count(), 5);
    }

    #[test]
    fn sweep_zero_point_is_baseline() {
        let net = ArchSpec {
            input_shape: vec![4],
            layers: vec![crate::arch::LayerSpec::Dense { units: 5 }, crate::arch::LayerSpec::Dense { units: 3 }],
        }
        .build(1)
        .unwrap();
        let pixels = probe(&net, 30);
        let labels = (0..30).map(|i| i % 3).collect();
        let ds = Dataset::new(pixels, labels, 4, 3).unwrap();
        let imp = node_importance(&extract_pathways(&net, &PathwayConfig::default()).unwrap()).unwrap();
        let curve = prune_sweep(&net, &imp, &per_layer_schedule(&[0], &[0, 2]), &ds, PruneMode::Delete).unwrap();
        assert_eq!(curve.records[0].error_rate, evaluate(&net, &ds).unwrap().error_rate());
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("layer,cut_count,error_rate\n0,0,"));
    }
}
