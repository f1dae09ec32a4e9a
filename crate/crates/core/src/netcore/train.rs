//! Minibatch SGD with backpropagation.
//!
//! The optional fault context makes the forward pass see faulty MAC
//! results: each gemm output gets `factor · (faulty − exact)` added for the
//! hooked sites, computed on the same operands inference would use. The
//! backward pass ignores that term (straight-through), so with an empty
//! fault map training is exactly [`train_sgd`].

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::infer::{add_deviations, batch_matrix, encode_inputs, encode_weights, plan_sites, MacHook, NumericMode, SitePlan};
use super::model::{avg_pool, avg_pool_backward, col2im, softmax, Layer, Model};
use super::NetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Multiplier applied to the learning rate after every epoch.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    pub seed: u64,
}

fn default_batch() -> usize {
    32
}

fn default_momentum() -> f64 {
    0.9
}

fn default_decay() -> f64 {
    0.7
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, learning_rate: 0.01, batch_size: 32, momentum: 0.9, lr_decay: 0.7, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Float-mode accuracy on the held-out set, when one was given.
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_accuracy: Option<f64>,
    pub history: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|e| e.test_accuracy).or(self.initial_accuracy)
    }
}

/// Faulty-MAC semantics injected into the training forward pass.
#[derive(Clone, Copy)]
pub struct FaultContext<'a> {
    pub mode: NumericMode,
    pub hook: &'a dyn MacHook,
}

struct GemmCache {
    lowered: Array2<f64>,
}

enum Cache {
    Gemm(GemmCache),
    Pool,
    Relu(Array2<f64>),
}

fn lower_output_grad(layer: &Layer, dy: ArrayView2<f64>) -> Array2<f64> {
    match layer {
        Layer::Conv { geometry, .. } => {
            let p = geometry.positions();
            let oc = geometry.out_channels;
            let batch = dy.nrows();
            let mut dz = Array2::zeros((batch * p, oc));
            for b in 0..batch {
                let row = dy.row(b);
                for c in 0..oc {
                    for pos in 0..p {
                        dz[[b * p + pos, c]] = row[c * p + pos];
                    }
                }
            }
            dz
        }
        _ => dy.to_owned(),
    }
}

struct Pass<'m> {
    model: &'m Model,
    faults: Option<(FaultContext<'m>, Vec<SitePlan>)>,
}

impl<'m> Pass<'m> {
    fn new(model: &'m Model, faults: Option<FaultContext<'m>>) -> Self {
        let faults = faults.map(|ctx| {
            let plans = model
                .gemm_layers()
                .iter()
                .enumerate()
                .map(|(g, &li)| {
                    let w = model.layers[li].weights().unwrap();
                    plan_sites(g, w.nrows(), w.ncols(), ctx.hook)
                })
                .collect();
            (ctx, plans)
        });
        Self { model, faults }
    }

    fn forward(&self, x: Array2<f64>) -> (Array2<f64>, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.model.layers.len());
        let mut a = x;
        let mut gemm = 0;
        for layer in &self.model.layers {
            a = match layer {
                Layer::Dense { .. } | Layer::Conv { .. } => {
                    let w = layer.weights().unwrap();
                    let lowered = layer.lower_input(a.view());
                    let mut acc = lowered.dot(w);
                    if let Some((ctx, plans)) = &self.faults {
                        if !plans[gemm].is_empty() {
                            // operand encoding failures only arise from
                            // non-finite weights, which the loss check reports
                            if let Ok(ow) = encode_weights(ctx.mode, w) {
                                let (xop, rs) = encode_inputs(ctx.mode, a.view(), lowered.clone(), layer.rows_per_sample());
                                add_deviations(
                                    gemm,
                                    xop.view(),
                                    ow.ops.view(),
                                    &plans[gemm],
                                    |i| rs[i] * ow.scale,
                                    ctx.hook,
                                    acc.view_mut(),
                                );
                            }
                        }
                    }
                    gemm += 1;
                    let mut out = layer.raise_output(acc);
                    layer.add_bias(&mut out);
                    caches.push(Cache::Gemm(GemmCache { lowered }));
                    out
                }
                Layer::AvgPool { input, window } => {
                    caches.push(Cache::Pool);
                    avg_pool(a.view(), *input, *window)
                }
                Layer::Relu => {
                    let out = a.mapv(|v| v.max(0.0));
                    caches.push(Cache::Relu(a));
                    out
                }
            };
        }
        (a, caches)
    }
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
fn cross_entropy(logits: ArrayView2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let mut p = softmax(logits);
    let n = labels.len() as f64;
    let mut loss = 0.0;
    for ((mut row, z), &l) in p.rows_mut().into_iter().zip(logits.rows()).zip(labels) {
        // log-sum-exp form: stays NaN-propagating for non-finite logits
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[l as usize];
        row[l as usize] -= 1.0;
        row /= n;
    }
    (loss / n, p)
}

/// Gradients of every gemm layer as `(dW, db)`, in gemm order.
fn backward(model: &Model, caches: Vec<Cache>, dlogits: Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
    let mut grads = Vec::new();
    let mut dy = dlogits;
    for (layer, cache) in model.layers.iter().zip(caches).rev() {
        dy = match (layer, cache) {
            (Layer::Dense { weights, .. } | Layer::Conv { weights, .. }, Cache::Gemm(c)) => {
                let batch = dy.nrows();
                let dz = lower_output_grad(layer, dy.view());
                let dw = c.lowered.t().dot(&dz);
                let db = dz.sum_axis(Axis(0));
                grads.push((dw, db));
                let dlow = dz.dot(&weights.t());
                match layer {
                    Layer::Conv { geometry, .. } => col2im(dlow.view(), geometry, batch),
                    _ => dlow,
                }
            }
            (Layer::AvgPool { input, window }, Cache::Pool) => avg_pool_backward(dy.view(), *input, *window),
            (Layer::Relu, Cache::Relu(input)) => {
                let mut d = dy;
                d.zip_mut_with(&input, |g, &x| {
                    if x <= 0.0 {
                        *g = 0.0
                    }
                });
                d
            }
            _ => unreachable!("cache mismatch"),
        };
    }
    grads.reverse();
    grads
}

/// Loss and analytic gradients for one batch (float arithmetic).
pub fn loss_and_gradients(model: &Model, x: ArrayView2<f64>, labels: &[u8]) -> (f64, Vec<(Array2<f64>, Array1<f64>)>) {
    let pass = Pass::new(model, None);
    let (logits, caches) = pass.forward(x.to_owned());
    let (loss, dlogits) = cross_entropy(logits.view(), labels);
    (loss, backward(model, caches, dlogits))
}

pub fn train_sgd(
    model: &Model,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport), NetError> {
    train_sgd_hooked(model, train, test, cfg, None)
}

pub fn train_sgd_hooked(
    model: &Model,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    faults: Option<FaultContext<'_>>,
) -> Result<(Model, TrainReport), NetError> {
    model.validate()?;
    if train.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if train.image_len() != model.input.len() {
        return Err(NetError::Shape(format!(
            "model expects {} inputs, images have {}",
            model.input.len(),
            train.image_len()
        )));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(NetError::Config("batch_size and learning_rate must be positive".into()));
    }
    let eval = |m: &Model| -> Result<Option<f64>, NetError> {
        test.map(|t| super::infer::evaluate(m, t, NumericMode::Float)).transpose()
    };

    let mut model = model.clone();
    let initial_accuracy = eval(&model)?;
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = model
        .layers
        .iter()
        .filter_map(|l| Some((Array2::zeros(l.weights()?.dim()), Array1::zeros(l.bias()?.len()))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.epochs);
    let n_pix = train.image_len();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Array2::zeros((chunk.len(), n_pix));
            let mut labels = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).assign(&batch_matrix(train, i..i + 1).row(0));
                labels.push(train.labels[i]);
            }
            let pass = Pass::new(&model, faults);
            let (logits, caches) = pass.forward(x);
            let (loss, dlogits) = cross_entropy(logits.view(), &labels);
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            total_loss += loss;
            batches += 1;
            let grads = backward(&model, caches, dlogits);
            let mut g = grads.into_iter();
            for (layer, (vw, vb)) in model.layers.iter_mut().filter(|l| l.is_gemm()).zip(velocity.iter_mut()) {
                let (dw, db) = g.next().unwrap();
                let (w, b) = layer.params_mut().unwrap();
                vw.zip_mut_with(&dw, |v, &d| *v = cfg.momentum * *v - lr * d);
                vb.zip_mut_with(&db, |v, &d| *v = cfg.momentum * *v - lr * d);
                *w += &*vw;
                *b += &*vb;
            }
        }
        let mean_loss = total_loss / batches as f64;
        if !mean_loss.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        history.push(EpochStats { epoch, mean_loss, test_accuracy: eval(&model)? });
        lr *= cfg.lr_decay;
    }
    Ok((model, TrainReport { initial_accuracy, history }))
}

/// Mean loss of a model over a dataset, float mode.
pub fn dataset_loss(model: &Model, data: &LabeledDataset) -> f64 {
    let n = data.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + 500).min(n);
        let x = batch_matrix(data, start..end);
        let (loss, _) = cross_entropy(model.forward(x.view()).view(), &data.labels[start..end]);
        total += loss * (end - start) as f64;
        start = end;
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::dataset::{synthetic, SyntheticSpec};
    use crate::netcore::infer::{FnHook, IdentityHook};
    use crate::netcore::model::{ConvGeometry, Shape};
    use rand::Rng;

    fn perturbed_loss(model: &Model, x: ArrayView2<f64>, labels: &[u8], gemm: usize, idx: Option<(usize, usize)>, bias: Option<usize>, eps: f64) -> f64 {
        let mut m = model.clone();
        let li = m.gemm_layers()[gemm];
        let (w, b) = m.layers[li].params_mut().unwrap();
        if let Some(ij) = idx {
            w[ij] += eps;
        }
        if let Some(j) = bias {
            b[j] += eps;
        }
        loss_and_gradients(&m, x, labels).0
    }

    fn check_gradients(model: &Model, x: Array2<f64>, labels: &[u8]) {
        let (_, grads) = loss_and_gradients(model, x.view(), labels);
        let eps = 1e-6;
        for (g, (dw, db)) in grads.iter().enumerate() {
            for ((i, j), &an) in dw.indexed_iter() {
                let num = (perturbed_loss(model, x.view(), labels, g, Some((i, j)), None, eps)
                    - perturbed_loss(model, x.view(), labels, g, Some((i, j)), None, -eps))
                    / (2.0 * eps);
                let rel = (an - num).abs() / an.abs().max(num.abs()).max(1e-8);
                assert!(rel < 1e-4 || (an - num).abs() < 1e-9, "w[{g}][{i},{j}] analytic {an} numeric {num}");
            }
            for (j, &an) in db.iter().enumerate() {
                let num = (perturbed_loss(model, x.view(), labels, g, None, Some(j), eps)
                    - perturbed_loss(model, x.view(), labels, g, None, Some(j), -eps))
                    / (2.0 * eps);
                let rel = (an - num).abs() / an.abs().max(num.abs()).max(1e-8);
                assert!(rel < 1e-4 || (an - num).abs() < 1e-9, "b[{g}][{j}] analytic {an} numeric {num}");
            }
        }
    }

    #[test]
    fn gradient_check_small_mlps() {
        let m = Model::mlp(&[2, 2, 2], 3).unwrap();
        assert_eq!(m.parameter_count(), 12);
        let x = ndarray::array![[0.3, -0.8], [0.9, 0.4], [-0.2, 0.1]];
        check_gradients(&m, x, &[0, 1, 1]);
        let m = Model::mlp(&[1, 2, 2], 7).unwrap();
        assert_eq!(m.parameter_count(), 10);
        check_gradients(&m, ndarray::array![[0.5], [-1.5], [2.0]], &[1, 0, 1]);
    }

    #[test]
    fn gradient_check_conv_pool_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g1 = ConvGeometry { input: Shape::new(1, 6, 6), kernel: 3, out_channels: 2 };
        let g2 = ConvGeometry { input: Shape::new(2, 2, 2), kernel: 2, out_channels: 3 };
        let mut w = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-0.5..0.5));
        let m = Model {
            input: Shape::new(1, 6, 6),
            layers: vec![
                Layer::Conv { geometry: g1, weights: w(9, 2), bias: ndarray::array![0.1, -0.1] },
                Layer::Relu,
                Layer::AvgPool { input: Shape::new(2, 4, 4), window: 2 },
                Layer::Conv { geometry: g2, weights: w(8, 3), bias: ndarray::array![0.0, 0.05, 0.1] },
                Layer::Relu,
                Layer::Dense { weights: w(3, 2), bias: ndarray::array![0.0, 0.0] },
            ],
        };
        m.validate().unwrap();
        let x = Array2::from_shape_fn((2, 36), |(i, j)| ((i * 36 + j) as f64 * 0.37).sin());
        check_gradients(&m, x, &[0, 1]);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let train = synthetic(&SyntheticSpec::new(600, 1));
        let test = synthetic(&SyntheticSpec::new(200, 2));
        let m = Model::mlp(&[784, 32, 10], 5).unwrap();
        let cfg = TrainConfig { epochs: 3, learning_rate: 0.02, seed: 11, ..Default::default() };
        let (a, ra) = train_sgd(&m, &train, Some(&test), &cfg).unwrap();
        let (b, rb) = train_sgd(&m, &train, Some(&test), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.history.len(), 3);
        assert!(ra.final_accuracy().unwrap() > 0.9, "{ra:?}");
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let train = synthetic(&SyntheticSpec::new(50, 1));
        let m = Model::mlp(&[784, 8, 10], 5).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (out, report) = train_sgd(&m, &train, Some(&train), &cfg).unwrap();
        assert_eq!(out, m);
        assert!(report.history.is_empty());
        assert_eq!(report.final_accuracy(), Some(super::super::infer::evaluate(&m, &train, NumericMode::Float).unwrap()));
    }

    #[test]
    fn divergence_names_the_epoch() {
        let train = synthetic(&SyntheticSpec::new(100, 1));
        let mut m = Model::mlp(&[784, 8, 10], 5).unwrap();
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        let r = train_sgd(&m, &train, None, &cfg);
        assert!(r.is_ok());
        // an overflowing weight poisons the very first loss
        m.layers[0].params_mut().unwrap().0[[0, 0]] = f64::INFINITY;
        let r = train_sgd(&m, &train, None, &cfg);
        assert!(matches!(r, Err(NetError::Diverged { epoch: 0 })), "{:?}", r.map(|x| x.1));
    }

    #[test]
    fn empty_hook_training_equals_plain_training() {
        let train = synthetic(&SyntheticSpec::new(200, 3));
        let m = Model::mlp(&[784, 16, 10], 5).unwrap();
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        let plain = train_sgd(&m, &train, None, &cfg).unwrap().0;
        for mode in [NumericMode::Int8, NumericMode::BFloat16] {
            let ctx = FaultContext { mode, hook: &IdentityHook };
            assert_eq!(train_sgd_hooked(&m, &train, None, &cfg, Some(ctx)).unwrap().0, plain);
            // a hook that perturbs every site but returns the exact product
            let exact = FnHook(|x: f64, w: f64, _| x * w);
            let ctx = FaultContext { mode, hook: &exact };
            assert_eq!(train_sgd_hooked(&m, &train, None, &cfg, Some(ctx)).unwrap().0, plain);
        }
    }

    #[test]
    fn empty_training_set_rejected() {
        let m = Model::mlp(&[784, 10], 0).unwrap();
        let empty = synthetic(&SyntheticSpec::new(0, 0));
        assert_eq!(train_sgd(&m, &empty, None, &TrainConfig::default()), Err(NetError::EmptyDataset));
    }
}
