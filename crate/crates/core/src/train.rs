//! Minibatch SGD with momentum on softmax cross-entropy, and evaluation.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::ConfusionMatrix;
use crate::data::Dataset;
use crate::error::{dim, domain, Error, Result};
use crate::linalg;
use crate::nn::{self, predict_batch, Activation, Layer, NetworkDescriptor, Shape};
use crate::tensor::softmax_in_place;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 64, epochs: 20, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch cross-entropy over the epoch.
    pub loss: f64,
    /// Accuracy of the minibatch predictions made while training.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with columns `epoch,loss,train_acc,test_acc` (empty `test_acc` without an eval set).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss", "train_acc", "test_acc"])?;
        for r in &self.epochs {
            w.write_record(&[
                r.epoch.to_string(),
                r.loss.to_string(),
                r.train_acc.to_string(),
                r.test_acc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameter gradients laid out like the network's layers (empty for pooling).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &NetworkDescriptor) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => (vec![0.0; d.weights().len()], vec![0.0; d.biases().len()]),
                Layer::Conv(c) => (vec![0.0; c.kernels().len()], vec![0.0; c.biases().len()]),
                Layer::Pool(_) => (Vec::new(), Vec::new()),
            })
            .collect();
        Self { layers }
    }

    /// Flattened in [`NetworkDescriptor::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }
}

struct Workspace {
    // activations[i] is the batch input of layer i; the last holds probabilities
    activations: Vec<Vec<f64>>,
    // per conv layer, per sample im2col matrices
    patches: Vec<Vec<Vec<f64>>>,
    // per pool layer, per sample max positions
    winners: Vec<Vec<Vec<usize>>>,
}

fn forward_train(net: &NetworkDescriptor, input: &[f64], rows: usize) -> Workspace {
    let layers = net.layers();
    let mut ws = Workspace {
        activations: Vec::with_capacity(layers.len() + 1),
        patches: vec![Vec::new(); layers.len()],
        winners: vec![Vec::new(); layers.len()],
    };
    ws.activations.push(input.to_vec());
    for (idx, layer) in layers.iter().enumerate() {
        let in_shape = net.input_shape_of(idx);
        let current = &ws.activations[idx];
        let next = match layer {
            Layer::Dense(d) => {
                let mut out = vec![0.0; rows * d.fan_out()];
                for row in out.chunks_mut(d.fan_out()) {
                    row.copy_from_slice(d.biases());
                }
                linalg::matmul(rows, d.fan_in(), d.fan_out(), current, d.weights().values(), 1.0, &mut out);
                match d.activation() {
                    Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
                    Activation::Softmax => out.chunks_mut(d.fan_out()).for_each(softmax_in_place),
                    Activation::Identity => {}
                }
                out
            }
            Layer::Conv(c) => {
                let Shape::Maps { h, w, .. } = in_shape else { unreachable!() };
                let mut out = Vec::with_capacity(rows * net.output_shape(idx).len());
                for sample in current.chunks(in_shape.len()) {
                    let (act, cols) = nn::conv_sample(c, sample, h, w);
                    out.extend(act);
                    ws.patches[idx].push(cols);
                }
                out
            }
            Layer::Pool(_) => {
                let Shape::Maps { maps, h, w } = in_shape else { unreachable!() };
                let mut out = Vec::with_capacity(rows * net.output_shape(idx).len());
                for sample in current.chunks(in_shape.len()) {
                    let (pooled, win) = nn::max_pool_sample(sample, maps, h, w);
                    out.extend(pooled);
                    ws.winners[idx].push(win);
                }
                out
            }
        };
        ws.activations.push(next);
    }
    ws
}

/// Mean cross-entropy and batch gradient for `rows` samples.
///
/// Returns `(loss, correct_predictions, gradients)`.
pub fn compute_gradients(net: &NetworkDescriptor, input: &[f64], labels: &[usize]) -> Result<(f64, usize, Gradients)> {
    let rows = labels.len();
    if rows == 0 || input.len() != rows * net.input_len() {
        return Err(dim("gradient batch does not match the network input"));
    }
    let n = net.class_count();
    if labels.iter().any(|&l| l >= n) {
        return Err(domain("label out of range"));
    }
    let ws = forward_train(net, input, rows);
    let probs = ws.activations.last().unwrap();

    let mut loss = 0.0;
    let mut correct = 0;
    let mut delta = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let p = &probs[r * n..(r + 1) * n];
        loss -= log_prob(p[label]);
        if crate::tensor::argmax(p) == label {
            correct += 1;
        }
        delta[r * n + label] -= 1.0;
    }
    let scale = 1.0 / rows as f64;
    delta.iter_mut().for_each(|d| *d *= scale);
    loss *= scale;

    let mut grads = Gradients::zeros_like(net);
    let layers = net.layers();
    for idx in (0..layers.len()).rev() {
        let input_act = &ws.activations[idx];
        let output_act = &ws.activations[idx + 1];
        let need_input_grad = idx > 0;
        delta = match &layers[idx] {
            Layer::Dense(d) => {
                if d.activation() == Activation::Relu {
                    relu_mask(&mut delta, output_act);
                }
                let (gw, gb) = &mut grads.layers[idx];
                linalg::matmul_tn(d.fan_in(), rows, d.fan_out(), input_act, &delta, 0.0, gw);
                for row in delta.chunks(d.fan_out()) {
                    gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
                }
                if need_input_grad {
                    let mut prev = vec![0.0; rows * d.fan_in()];
                    linalg::matmul_nt(rows, d.fan_out(), d.fan_in(), &delta, d.weights().values(), 0.0, &mut prev);
                    prev
                } else {
                    Vec::new()
                }
            }
            Layer::Conv(c) => {
                relu_mask(&mut delta, output_act);
                let Shape::Maps { h, w, .. } = net.input_shape_of(idx) else { unreachable!() };
                let out_len = net.output_shape(idx).len();
                let in_len = net.input_shape_of(idx).len();
                let m = c.out_maps();
                let positions = out_len / m;
                let ckk = c.in_maps() * c.kernel_h() * c.kernel_w();
                let mut prev = if need_input_grad { vec![0.0; rows * in_len] } else { Vec::new() };
                let (gw, gb) = &mut grads.layers[idx];
                for (s, d_out) in delta.chunks(out_len).enumerate() {
                    let cols = &ws.patches[idx][s];
                    linalg::matmul_nt(m, positions, ckk, d_out, cols, 1.0, gw);
                    for (g, map) in gb.iter_mut().zip(d_out.chunks(positions)) {
                        *g += map.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        let mut d_cols = vec![0.0; ckk * positions];
                        linalg::matmul_tn(ckk, m, positions, c.kernels().values(), d_out, 0.0, &mut d_cols);
                        nn::col2im_add(
                            &d_cols,
                            c.in_maps(),
                            h,
                            w,
                            c.kernel_h(),
                            c.kernel_w(),
                            &mut prev[s * in_len..(s + 1) * in_len],
                        );
                    }
                }
                prev
            }
            Layer::Pool(_) => {
                let in_len = net.input_shape_of(idx).len();
                let out_len = net.output_shape(idx).len();
                let mut prev = vec![0.0; rows * in_len];
                for (s, d_out) in delta.chunks(out_len).enumerate() {
                    let dst = &mut prev[s * in_len..(s + 1) * in_len];
                    for (&pos, &g) in ws.winners[idx][s].iter().zip(d_out) {
                        dst[pos] += g;
                    }
                }
                prev
            }
        };
    }
    Ok((loss, correct, grads))
}

// clamps underflowed probabilities but lets NaN through so divergence is detected
fn log_prob(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        p.max(f64::MIN_POSITIVE).ln()
    }
}

fn relu_mask(delta: &mut [f64], activated: &[f64]) {
    for (d, &a) in delta.iter_mut().zip(activated) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Mean cross-entropy of the network over a batch.
pub fn batch_loss(net: &NetworkDescriptor, input: &[f64], labels: &[usize]) -> Result<f64> {
    let probs = nn::forward_batch(net, input, labels.len())?;
    let n = net.class_count();
    let total: f64 = labels.iter().enumerate().map(|(r, &l)| -log_prob(probs[r * n + l])).sum();
    Ok(total / labels.len() as f64)
}

/// Trains a copy of `net`; optionally reports accuracy on `eval` after each epoch.
pub fn train_sgd(
    net: &NetworkDescriptor,
    ds: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<(NetworkDescriptor, TrainHistory)> {
    train_sgd_observed(net, ds, cfg, eval, |_| {})
}

/// [`train_sgd`], calling `on_epoch` as each epoch completes.
pub fn train_sgd_observed(
    net: &NetworkDescriptor,
    ds: &Dataset,
    cfg: &TrainConfig,
    eval: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkDescriptor, TrainHistory)> {
    cfg.validate()?;
    if net.class_count() != ds.class_count() {
        return Err(dim(format!("network predicts {} classes, dataset has {}", net.class_count(), ds.class_count())));
    }
    if net.input_len() != ds.pixel_len() {
        return Err(dim(format!("network expects {} inputs, dataset images have {}", net.input_len(), ds.pixel_len())));
    }
    let mut net = net.clone();
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((net, history));
    }
    if ds.is_empty() {
        return Err(domain("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut velocity = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let pixel_len = ds.pixel_len();
    let mut batch_pixels = Vec::with_capacity(cfg.batch_size * pixel_len);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch_pixels.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_pixels.extend_from_slice(ds.image(i));
                batch_labels.push(ds.label(i));
            }
            let (loss, hits, grads) = compute_gradients(&net, &batch_pixels, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss;
            batches += 1;
            correct += hits;
            apply_update(&mut net, &mut velocity, &grads, cfg);
        }
        let loss = loss_sum / batches as f64;
        let params_ok = net.parameters().iter().all(|p| p.is_finite());
        if !loss.is_finite() || !params_ok {
            return Err(Error::Divergence { epoch, loss });
        }
        let test_acc = match eval {
            Some(e) => Some(evaluate(&net, e)?.accuracy),
            None => None,
        };
        let record = EpochRecord { epoch, loss, train_acc: correct as f64 / ds.len() as f64, test_acc };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((net, history))
}

fn apply_update(net: &mut NetworkDescriptor, velocity: &mut Gradients, grads: &Gradients, cfg: &TrainConfig) {
    for ((layer, (vw, vb)), (gw, gb)) in net.layers_mut().iter_mut().zip(&mut velocity.layers).zip(&grads.layers) {
        let (w, b) = match layer {
            Layer::Dense(d) => d.params_mut(),
            Layer::Conv(c) => c.params_mut(),
            Layer::Pool(_) => continue,
        };
        for ((p, v), g) in w.iter_mut().zip(vw.iter_mut()).zip(gw) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
        for ((p, v), g) in b.iter_mut().zip(vb.iter_mut()).zip(gb) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    pub fn error_rate(&self) -> f64 {
        1.0 - self.accuracy
    }
}

pub fn evaluate(net: &NetworkDescriptor, ds: &Dataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(domain("cannot evaluate on an empty dataset"));
    }
    if net.input_len() != ds.pixel_len() || net.class_count() != ds.class_count() {
        return Err(dim("dataset shape does not match the network"));
    }
    let preds = predict_batch(net, ds.pixels(), ds.len())?;
    let confusion = ConfusionMatrix::from_predictions(ds.labels(), &preds, net.class_count())?;
    Ok(Evaluation { accuracy: confusion.correct() as f64 / ds.len() as f64, confusion })
}
