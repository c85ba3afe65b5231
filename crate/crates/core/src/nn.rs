//! Layers, network descriptors and forward inference.

use crate::error::{dim, structure, Error, Result};
use crate::linalg;
use crate::tensor::{argmax, relu, softmax_in_place, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }

    fn apply_rows(self, values: &mut [f64], width: usize) {
        match self {
            Activation::Relu => values.iter_mut().for_each(|v| *v = relu(*v)),
            Activation::Softmax => values.chunks_mut(width).for_each(softmax_in_place),
            Activation::Identity => {}
        }
    }
}

/// Fully connected layer with weights stored `[fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(dim(format!("dense weights must be 2-D, got shape {:?}", weights.shape())));
        }
        let fan_out = weights.shape()[1];
        if biases.len() != fan_out {
            return Err(dim(format!("dense layer has {fan_out} outputs but {} biases", biases.len())));
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("non-finite bias".into()));
        }
        Ok(Self { weights, biases, activation })
    }

    /// Builds a layer from nested rows, `rows[i][j]` connecting input `i` to output `j`.
    pub fn from_rows(rows: &[Vec<f64>], biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let fan_in = rows.len();
        let fan_out = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != fan_out) {
            return Err(dim("ragged weight rows"));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(Tensor::new(vec![fan_in, fan_out], flat)?, biases, activation)
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Weight from input `i` to output `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.values()[i * self.fan_out() + j]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.values_mut(), &mut self.biases)
    }
}

/// Valid (unpadded, stride 1) convolution followed by ReLU.
///
/// Kernels are stored `[out_maps × in_maps × kh × kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kernels: Tensor,
    biases: Vec<f64>,
}

impl ConvLayer {
    pub fn new(kernels: Tensor, biases: Vec<f64>) -> Result<Self> {
        if kernels.shape().len() != 4 {
            return Err(dim(format!("conv kernels must be 4-D, got shape {:?}", kernels.shape())));
        }
        if biases.len() != kernels.shape()[0] {
            return Err(dim(format!("conv layer has {} output maps but {} biases", kernels.shape()[0], biases.len())));
        }
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("non-finite bias".into()));
        }
        Ok(Self { kernels, biases })
    }

    pub fn out_maps(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_h(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn kernel_w(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    /// The `kh × kw` kernel connecting input map `input` to output map `output`.
    pub fn kernel(&self, output: usize, input: usize) -> &[f64] {
        let size = self.kernel_h() * self.kernel_w();
        let start = (output * self.in_maps() + input) * size;
        &self.kernels.values()[start..start + size]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.kernels.values_mut(), &mut self.biases)
    }
}

/// 2×2 max pooling with stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PoolLayer;

impl PoolLayer {
    pub const WINDOW: usize = 2;
    pub const STRIDE: usize = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Pool(PoolLayer),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::Pool(_) => "pool",
        }
    }
}

/// Shape of the activations flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Maps { maps: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Maps { maps, h, w } => maps * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node count: units for flat shapes, feature maps otherwise.
    pub fn nodes(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Maps { maps, .. } => maps,
        }
    }

    fn from_input(input_shape: &[usize]) -> Result<Self> {
        match *input_shape {
            [n] if n > 0 => Ok(Shape::Flat(n)),
            [maps, h, w] if maps > 0 && h > 0 && w > 0 => Ok(Shape::Maps { maps, h, w }),
            _ => Err(dim(format!("input shape {input_shape:?} must be [features] or [maps, h, w]"))),
        }
    }
}

/// An ordered, shape-checked stack of layers ending in a softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDescriptor {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    class_count: usize,
    // shapes[0] is the input, shapes[i + 1] the output of layer i
    shapes: Vec<Shape>,
}

impl NetworkDescriptor {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, class_count: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(structure("network has no layers"));
        }
        let mut shapes = vec![Shape::from_input(&input_shape)?];
        let last = layers.len() - 1;
        for (idx, layer) in layers.iter().enumerate() {
            let current = shapes[idx];
            let next = match layer {
                Layer::Dense(d) => {
                    if d.fan_in() != current.len() {
                        return Err(dim(format!(
                            "layer {idx}: dense fan_in {} does not match upstream width {}",
                            d.fan_in(),
                            current.len()
                        )));
                    }
                    if d.activation() == Activation::Softmax && idx != last {
                        return Err(structure(format!("layer {idx}: softmax is only allowed on the output layer")));
                    }
                    Shape::Flat(d.fan_out())
                }
                Layer::Conv(c) => match current {
                    Shape::Maps { maps, h, w } => {
                        if maps != c.in_maps() {
                            return Err(dim(format!(
                                "layer {idx}: conv expects {} input maps, got {maps}",
                                c.in_maps()
                            )));
                        }
                        if h < c.kernel_h() || w < c.kernel_w() {
                            return Err(dim(format!(
                                "layer {idx}: {h}x{w} maps are smaller than the {}x{} kernel",
                                c.kernel_h(),
                                c.kernel_w()
                            )));
                        }
                        Shape::Maps { maps: c.out_maps(), h: h - c.kernel_h() + 1, w: w - c.kernel_w() + 1 }
                    }
                    Shape::Flat(_) => {
                        return Err(structure(format!("layer {idx}: convolution cannot follow a flat layer")))
                    }
                },
                Layer::Pool(_) => match current {
                    Shape::Maps { maps, h, w } => {
                        if h % 2 != 0 || w % 2 != 0 {
                            return Err(dim(format!("layer {idx}: pooling needs even spatial size, got {h}x{w}")));
                        }
                        Shape::Maps { maps, h: h / 2, w: w / 2 }
                    }
                    Shape::Flat(_) => {
                        return Err(structure(format!("layer {idx}: pooling cannot follow a flat layer")))
                    }
                },
            };
            shapes.push(next);
        }
        match &layers[last] {
            Layer::Dense(d) if d.activation() == Activation::Softmax => {
                if d.fan_out() != class_count {
                    return Err(dim(format!(
                        "output layer has {} units but class_count is {class_count}",
                        d.fan_out()
                    )));
                }
            }
            _ => return Err(structure("final layer must be dense with softmax activation")),
        }
        Ok(Self { input_shape, layers, class_count, shapes })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Output shape of layer `idx`.
    pub fn output_shape(&self, idx: usize) -> Shape {
        self.shapes[idx + 1]
    }

    /// Input shape of layer `idx`.
    pub fn input_shape_of(&self, idx: usize) -> Shape {
        self.shapes[idx]
    }

    pub fn is_dense_only(&self) -> bool {
        self.layers.iter().all(|l| matches!(l, Layer::Dense(_)))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.weights().len() + d.biases().len(),
                Layer::Conv(c) => c.kernels().len() + c.biases().len(),
                Layer::Pool(_) => 0,
            })
            .sum()
    }

    /// All trainable parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights().values());
                    out.extend_from_slice(d.biases());
                }
                Layer::Conv(c) => {
                    out.extend_from_slice(c.kernels().values());
                    out.extend_from_slice(c.biases());
                }
                Layer::Pool(_) => {}
            }
        }
        out
    }

    /// Copy of this network with parameters replaced, in [`parameters`](Self::parameters) order.
    pub fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.parameter_count() {
            return Err(dim(format!("expected {} parameters, got {}", self.parameter_count(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        let mut net = self.clone();
        let mut offset = 0;
        for layer in &mut net.layers {
            let (w, b) = match layer {
                Layer::Dense(d) => d.params_mut(),
                Layer::Conv(c) => c.params_mut(),
                Layer::Pool(_) => continue,
            };
            w.copy_from_slice(&params[offset..offset + w.len()]);
            offset += w.len();
            b.copy_from_slice(&params[offset..offset + b.len()]);
            offset += b.len();
        }
        Ok(net)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }
}

/// `out[j] = activation(bias[j] + Σ_i input[i] · W[i][j])`.
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != layer.fan_in() {
        return Err(dim(format!("dense layer expects {} inputs, got {}", layer.fan_in(), input.len())));
    }
    let mut out = vec![0.0; layer.fan_out()];
    dense_rows(layer, input, 1, &mut out);
    Ok(out)
}

fn dense_rows(layer: &DenseLayer, input: &[f64], rows: usize, out: &mut [f64]) {
    let fan_out = layer.fan_out();
    for row in out.chunks_mut(fan_out) {
        row.copy_from_slice(layer.biases());
    }
    linalg::matmul(rows, layer.fan_in(), fan_out, input, layer.weights().values(), 1.0, out);
    layer.activation().apply_rows(out, fan_out);
}

/// Unrolls one `[c × h × w]` sample into `[(c·kh·kw) × (oh·ow)]` patch columns.
pub(crate) fn im2col(input: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<f64> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let positions = oh * ow;
    let mut cols = vec![0.0; c * kh * kw * positions];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for y in 0..oh {
                    let src = &plane[(y + ki) * w + kj..(y + ki) * w + kj + ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch-column gradients back onto the input.
pub(crate) fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, out: &mut [f64]) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let positions = oh * ow;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for y in 0..oh {
                    let base = ch * h * w + (y + ki) * w + kj;
                    for x in 0..ow {
                        out[base + x] += src[y * ow + x];
                    }
                }
            }
        }
    }
}

/// Convolves one sample; returns ReLU activations `[out_maps × oh × ow]` and the patch matrix.
pub(crate) fn conv_sample(conv: &ConvLayer, input: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let (kh, kw) = (conv.kernel_h(), conv.kernel_w());
    let cols = im2col(input, conv.in_maps(), h, w, kh, kw);
    let positions = (h - kh + 1) * (w - kw + 1);
    let m = conv.out_maps();
    let mut out = vec![0.0; m * positions];
    for (map, bias) in out.chunks_mut(positions).zip(conv.biases()) {
        map.fill(*bias);
    }
    linalg::matmul(m, conv.in_maps() * kh * kw, positions, conv.kernels().values(), &cols, 1.0, &mut out);
    out.iter_mut().for_each(|v| *v = relu(*v));
    (out, cols)
}

/// 2×2/2 max pooling of one sample; also returns the winning flat input index per output
/// (first maximum in row-major window order).
pub(crate) fn max_pool_sample(input: &[f64], maps: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(maps * ph * pw);
    let mut winners = Vec::with_capacity(maps * ph * pw);
    for m in 0..maps {
        let base = m * h * w;
        for y in 0..ph {
            for x in 0..pw {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                winners.push(best);
            }
        }
    }
    (out, winners)
}

/// ReLU-activated valid convolution followed by 2×2 max pooling.
pub fn conv_pool_forward(conv: &ConvLayer, _pool: &PoolLayer, maps: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match *maps.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(dim(format!("expected [maps, h, w] input, got {:?}", maps.shape()))),
    };
    if c != conv.in_maps() {
        return Err(dim(format!("conv expects {} input maps, got {c}", conv.in_maps())));
    }
    if h < conv.kernel_h() || w < conv.kernel_w() {
        return Err(dim(format!("{h}x{w} input is smaller than the {}x{} kernel", conv.kernel_h(), conv.kernel_w())));
    }
    let (oh, ow) = (h - conv.kernel_h() + 1, w - conv.kernel_w() + 1);
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(dim(format!("post-convolution size {oh}x{ow} is not even")));
    }
    let (activated, _) = conv_sample(conv, maps.values(), h, w);
    let (pooled, _) = max_pool_sample(&activated, conv.out_maps(), oh, ow);
    Tensor::new(vec![conv.out_maps(), oh / 2, ow / 2], pooled)
}

/// Runs `count` images (concatenated row-major) through the network and returns
/// `count × class_count` probabilities.
pub fn forward_batch(net: &NetworkDescriptor, images: &[f64], count: usize) -> Result<Vec<f64>> {
    if images.len() != count * net.input_len() {
        return Err(dim(format!("expected {count} images of {} values, got {} values", net.input_len(), images.len())));
    }
    let mut current = images.to_vec();
    for (idx, layer) in net.layers().iter().enumerate() {
        let in_shape = net.input_shape_of(idx);
        let out_shape = net.output_shape(idx);
        current = match layer {
            Layer::Dense(d) => {
                let mut out = vec![0.0; count * d.fan_out()];
                dense_rows(d, &current, count, &mut out);
                out
            }
            Layer::Conv(c) => {
                let Shape::Maps { h, w, .. } = in_shape else { unreachable!() };
                let mut out = Vec::with_capacity(count * out_shape.len());
                for sample in current.chunks(in_shape.len()) {
                    out.extend(conv_sample(c, sample, h, w).0);
                }
                out
            }
            Layer::Pool(_) => {
                let Shape::Maps { maps, h, w } = in_shape else { unreachable!() };
                let mut out = Vec::with_capacity(count * out_shape.len());
                for sample in current.chunks(in_shape.len()) {
                    out.extend(max_pool_sample(sample, maps, h, w).0);
                }
                out
            }
        };
    }
    Ok(current)
}

/// Class probabilities for one flat image.
pub fn network_forward(net: &NetworkDescriptor, image: &[f64]) -> Result<Vec<f64>> {
    forward_batch(net, image, 1)
}

/// Most probable class, lowest index on ties.
pub fn predict(net: &NetworkDescriptor, image: &[f64]) -> Result<usize> {
    Ok(argmax(&network_forward(net, image)?))
}

/// Predictions for many images, evaluated in fixed-size chunks.
pub fn predict_batch(net: &NetworkDescriptor, images: &[f64], count: usize) -> Result<Vec<usize>> {
    const CHUNK: usize = 256;
    if images.len() != count * net.input_len() {
        return Err(dim(format!("expected {count} images of {} values, got {} values", net.input_len(), images.len())));
    }
    let n = net.class_count();
    let mut preds = Vec::with_capacity(count);
    for chunk in images.chunks(CHUNK * net.input_len()) {
        let rows = chunk.len() / net.input_len();
        let probs = forward_batch(net, chunk, rows)?;
        preds.extend(probs.chunks(n).map(argmax));
    }
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w2() -> Vec<Vec<f64>> {
        vec![vec![1.0, -1.0], vec![2.0, 0.0]]
    }

    /// 2-2-2 fixture: the same weights in both layers, zero biases.
    fn fixture_222() -> NetworkDescriptor {
        NetworkDescriptor::new(
            vec![2],
            vec![
                Layer::Dense(DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Relu).unwrap()),
                Layer::Dense(DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Softmax).unwrap()),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn dense_forward_hand_example() {
        let layer = DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Relu).unwrap();
        // [1·1 + 1·2, 1·(-1) + 1·0] = [3, -1] -> relu -> [3, 0]
        assert_eq!(dense_forward(&layer, &[1.0, 1.0]).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn dense_forward_zero_and_identity() {
        let zero = DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Relu).unwrap();
        assert_eq!(dense_forward(&zero, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let ident = DenseLayer::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0.0; 3],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(dense_forward(&ident, &[0.25, 0.0, 7.5]).unwrap(), vec![0.25, 0.0, 7.5]);
    }

    #[test]
    fn dense_forward_rejects_wrong_length() {
        let layer = DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Relu).unwrap();
        assert!(matches!(dense_forward(&layer, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn network_forward_222_fixture() {
        let net = fixture_222();
        // hidden [3, 0]; logits [3, -3]; softmax = [1/(1+e^-6), e^-6/(1+e^-6)]
        let p = network_forward(&net, &[1.0, 1.0]).unwrap();
        let e = (-6.0f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert_eq!(predict(&net, &[1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn equal_logits_give_uniform_output() {
        let out = DenseLayer::new(Tensor::zeros(vec![4, 10]).unwrap(), vec![0.0; 10], Activation::Softmax).unwrap();
        let net = NetworkDescriptor::new(vec![4], vec![Layer::Dense(out)], 10).unwrap();
        let p = network_forward(&net, &[0.3, 0.1, 0.9, 0.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        assert_eq!(predict(&net, &[0.3, 0.1, 0.9, 0.0]).unwrap(), 0);
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let a = DenseLayer::from_rows(&w2(), vec![0.0; 2], Activation::Relu).unwrap();
        let b = DenseLayer::new(Tensor::zeros(vec![3, 2]).unwrap(), vec![0.0; 2], Activation::Softmax).unwrap();
        let err = NetworkDescriptor::new(vec![2], vec![Layer::Dense(a.clone()), Layer::Dense(b)], 2);
        assert!(matches!(err, Err(Error::Dimension(_))));
        // final layer must be softmax
        let err = NetworkDescriptor::new(vec![2], vec![Layer::Dense(a)], 2);
        assert!(matches!(err, Err(Error::Structure(_))));
    }

    #[test]
    fn conv_pool_shape_arithmetic() {
        let conv = ConvLayer::new(Tensor::zeros(vec![3, 1, 5, 5]).unwrap(), vec![0.0; 3]).unwrap();
        let image = Tensor::new(vec![1, 28, 28], (0..784).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let out = conv_pool_forward(&conv, &PoolLayer, &image).unwrap();
        assert_eq!(out.shape(), &[3, 12, 12]);
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_pool_one_hot_kernel_passes_constant_image() {
        let mut k = vec![0.0; 25];
        k[12] = 1.0;
        let conv = ConvLayer::new(Tensor::new(vec![1, 1, 5, 5], k).unwrap(), vec![0.0]).unwrap();
        let image = Tensor::new(vec![1, 8, 8], vec![0.4; 64]).unwrap();
        let out = conv_pool_forward(&conv, &PoolLayer, &image).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert!(out.values().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn conv_pool_rejects_odd_post_conv_size() {
        let conv = ConvLayer::new(Tensor::zeros(vec![1, 1, 5, 5]).unwrap(), vec![0.0]).unwrap();
        let image = Tensor::zeros(vec![1, 9, 9]).unwrap();
        assert!(matches!(conv_pool_forward(&conv, &PoolLayer, &image), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let kernels: Vec<f64> = (0..2 * 2 * 3 * 3).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let conv = ConvLayer::new(Tensor::new(vec![2, 2, 3, 3], kernels).unwrap(), vec![0.1, -0.2]).unwrap();
        let input: Vec<f64> = (0..2 * 6 * 6).map(|i| ((i * 13 % 17) as f64) / 17.0).collect();
        let (out, _) = conv_sample(&conv, &input, 6, 6);
        for o in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let mut acc = conv.biases()[o];
                    for c in 0..2 {
                        let k = conv.kernel(o, c);
                        for ki in 0..3 {
                            for kj in 0..3 {
                                acc += k[ki * 3 + kj] * input[c * 36 + (y + ki) * 6 + x + kj];
                            }
                        }
                    }
                    let got = out[o * 16 + y * 4 + x];
                    assert!((got - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_batch_consistent() {
        let net = fixture_222();
        let images = [1.0, 1.0, 0.2, 0.7, 0.0, 0.5];
        let batch = forward_batch(&net, &images, 3).unwrap();
        for i in 0..3 {
            let single = network_forward(&net, &images[2 * i..2 * i + 2]).unwrap();
            assert_eq!(&batch[2 * i..2 * i + 2], &single[..]);
        }
        assert_eq!(batch, forward_batch(&net, &images, 3).unwrap());
    }
}
