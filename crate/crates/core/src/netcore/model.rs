//! Layer graph shared by training and every inference mode.
//!
//! Every parametric layer is lowered to one matrix product
//! `input (rows × fan_in) · weights (fan_in × fan_out)`: dense layers use the
//! activation batch directly, convolutions use an im2col patch matrix. The
//! weight matrix is what gets stored in DRAM and pinned onto the systolic
//! array, so `(row, col)` of that matrix is the MAC site address used by the
//! fault models.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

/// Feature-map shape. Dense activations are `channels × 1 × 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn flat(n: usize) -> Self {
        Self { channels: n, height: 1, width: 1 }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Valid-padding, stride-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub input: Shape,
    pub kernel: usize,
    pub out_channels: usize,
}

impl ConvGeometry {
    pub fn output(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.input.height + 1 - self.kernel,
            self.input.width + 1 - self.kernel,
        )
    }

    pub fn fan_in(&self) -> usize {
        self.input.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        let o = self.output();
        o.height * o.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense { weights: Array2<f64>, bias: Array1<f64> },
    Conv { geometry: ConvGeometry, weights: Array2<f64>, bias: Array1<f64> },
    /// Non-overlapping average pooling.
    AvgPool { input: Shape, window: usize },
    Relu,
}

impl Layer {
    pub fn is_gemm(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv { .. })
    }

    pub fn weights(&self) -> Option<&Array2<f64>> {
        match self {
            Layer::Dense { weights, .. } | Layer::Conv { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Array1<f64>> {
        match self {
            Layer::Dense { bias, .. } | Layer::Conv { bias, .. } => Some(bias),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Array2<f64>, &mut Array1<f64>)> {
        match self {
            Layer::Dense { weights, bias } | Layer::Conv { weights, bias, .. } => Some((weights, bias)),
            _ => None,
        }
    }

    /// Rows of the lowered input matrix contributed by one sample.
    pub fn rows_per_sample(&self) -> usize {
        match self {
            Layer::Conv { geometry, .. } => geometry.positions(),
            _ => 1,
        }
    }

    /// Lowers an activation batch to the matrix multiplied by the weights.
    pub fn lower_input(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Layer::Conv { geometry, .. } => im2col(x, geometry),
            _ => x.to_owned(),
        }
    }

    /// Inverse of the product layout: `(batch·positions) × out` to
    /// `batch × (out·positions)` in CHW order. Dense outputs pass through.
    pub fn raise_output(&self, acc: Array2<f64>) -> Array2<f64> {
        match self {
            Layer::Conv { geometry, .. } => {
                let p = geometry.positions();
                let batch = acc.nrows() / p;
                let oc = geometry.out_channels;
                let mut out = Array2::zeros((batch, oc * p));
                for b in 0..batch {
                    let block = acc.slice(s![b * p..(b + 1) * p, ..]);
                    let mut row = out.row_mut(b);
                    for c in 0..oc {
                        for pos in 0..p {
                            row[c * p + pos] = block[[pos, c]];
                        }
                    }
                }
                out
            }
            _ => acc,
        }
    }

    /// Adds the bias to a raised output (per channel for convolutions).
    pub fn add_bias(&self, out: &mut Array2<f64>) {
        match self {
            Layer::Dense { bias, .. } => {
                for mut row in out.rows_mut() {
                    row += bias;
                }
            }
            Layer::Conv { geometry, bias, .. } => {
                let p = geometry.positions();
                for mut row in out.rows_mut() {
                    for (c, &b) in bias.iter().enumerate() {
                        row.slice_mut(s![c * p..(c + 1) * p]).mapv_inplace(|v| v + b);
                    }
                }
            }
            _ => {}
        }
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        match self {
            Layer::Dense { weights, .. } => Shape::flat(weights.ncols()),
            Layer::Conv { geometry, .. } => geometry.output(),
            Layer::AvgPool { input, window } => {
                Shape::new(input.channels, input.height / window, input.width / window)
            }
            Layer::Relu => input,
        }
    }
}

pub fn im2col(x: ArrayView2<f64>, g: &ConvGeometry) -> Array2<f64> {
    let Shape { channels, height, width } = g.input;
    let k = g.kernel;
    let out = g.output();
    let p = out.height * out.width;
    let batch = x.nrows();
    let mut cols = Array2::zeros((batch * p, g.fan_in()));
    for b in 0..batch {
        let img = x.row(b);
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut row = cols.row_mut(b * p + oy * out.width + ox);
                let mut r = 0;
                for c in 0..channels {
                    let base = c * height * width;
                    for ky in 0..k {
                        let line = base + (oy + ky) * width + ox;
                        for kx in 0..k {
                            row[r] = img[line + kx];
                            r += 1;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of a patch-matrix gradient back to the input layout.
pub fn col2im(cols: ArrayView2<f64>, g: &ConvGeometry, batch: usize) -> Array2<f64> {
    let Shape { channels, height, width } = g.input;
    let k = g.kernel;
    let out = g.output();
    let p = out.height * out.width;
    let mut x = Array2::zeros((batch, g.input.len()));
    for b in 0..batch {
        let mut img = x.row_mut(b);
        for oy in 0..out.height {
            for ox in 0..out.width {
                let row = cols.row(b * p + oy * out.width + ox);
                let mut r = 0;
                for c in 0..channels {
                    let base = c * height * width;
                    for ky in 0..k {
                        let line = base + (oy + ky) * width + ox;
                        for kx in 0..k {
                            img[line + kx] += row[r];
                            r += 1;
                        }
                    }
                }
            }
        }
    }
    x
}

pub fn avg_pool(x: ArrayView2<f64>, input: Shape, window: usize) -> Array2<f64> {
    let (oh, ow) = (input.height / window, input.width / window);
    let norm = 1.0 / (window * window) as f64;
    let mut out = Array2::zeros((x.nrows(), input.channels * oh * ow));
    for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
        for c in 0..input.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..window {
                        for dx in 0..window {
                            let y = oy * window + dy;
                            let xx = ox * window + dx;
                            acc += src[c * input.height * input.width + y * input.width + xx];
                        }
                    }
                    dst[c * oh * ow + oy * ow + ox] = acc * norm;
                }
            }
        }
    }
    out
}

pub fn avg_pool_backward(dy: ArrayView2<f64>, input: Shape, window: usize) -> Array2<f64> {
    let (oh, ow) = (input.height / window, input.width / window);
    let norm = 1.0 / (window * window) as f64;
    let mut dx = Array2::zeros((dy.nrows(), input.len()));
    for (src, mut dst) in dy.rows().into_iter().zip(dx.rows_mut()) {
        for c in 0..input.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = src[c * oh * ow + oy * ow + ox] * norm;
                    for dy in 0..window {
                        for dx in 0..window {
                            let y = oy * window + dy;
                            let xx = ox * window + dx;
                            dst[c * input.height * input.width + y * input.width + xx] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Feed-forward network ending in a 10-way (or n-way) logit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

/// Default MLP topology: 784-256-256-256-10.
pub const DEFAULT_MLP: [usize; 5] = [784, 256, 256, 256, 10];

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
}

impl Model {
    /// ReLU MLP with He-uniform weights and zero biases.
    pub fn mlp(sizes: &[usize], seed: u64) -> Result<Self, NetError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NetError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            layers.push(Layer::Dense { weights: he_uniform(&mut rng, w[0], w[1]), bias: Array1::zeros(w[1]) });
            if i + 2 < sizes.len() {
                layers.push(Layer::Relu);
            }
        }
        Ok(Self { input: Shape::flat(sizes[0]), layers })
    }

    /// MLP with every weight and bias zero.
    pub fn mlp_zeros(sizes: &[usize]) -> Result<Self, NetError> {
        let mut m = Self::mlp(sizes, 0)?;
        for layer in &mut m.layers {
            if let Some((w, b)) = layer.params_mut() {
                w.fill(0.0);
                b.fill(0.0);
            }
        }
        Ok(m)
    }

    /// LeNet-5-class CNN on 28×28 inputs: three 5/5/4 convolutions with
    /// average pooling, then 120-84-10 dense layers.
    pub fn lenet5(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = |input: Shape, kernel: usize, out_channels: usize| {
            let geometry = ConvGeometry { input, kernel, out_channels };
            Layer::Conv {
                geometry,
                weights: he_uniform(&mut rng, geometry.fan_in(), out_channels),
                bias: Array1::zeros(out_channels),
            }
        };
        let c1 = conv(Shape::new(1, 28, 28), 5, 6);
        let c2 = conv(Shape::new(6, 12, 12), 5, 16);
        let c3 = conv(Shape::new(16, 4, 4), 4, 120);
        let mut dense = |i: usize, o: usize| Layer::Dense { weights: he_uniform(&mut rng, i, o), bias: Array1::zeros(o) };
        let d1 = dense(120, 84);
        let d2 = dense(84, 10);
        Self {
            input: Shape::new(1, 28, 28),
            layers: vec![
                c1,
                Layer::Relu,
                Layer::AvgPool { input: Shape::new(6, 24, 24), window: 2 },
                c2,
                Layer::Relu,
                Layer::AvgPool { input: Shape::new(16, 8, 8), window: 2 },
                c3,
                Layer::Relu,
                d1,
                Layer::Relu,
                d2,
            ],
        }
    }

    /// Checks that consecutive layer shapes agree.
    pub fn validate(&self) -> Result<Shape, NetError> {
        let mut shape = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            let fits = match layer {
                Layer::Dense { weights, bias } => weights.nrows() == shape.len() && bias.len() == weights.ncols(),
                Layer::Conv { geometry, weights, bias } => {
                    geometry.input == shape
                        && geometry.kernel >= 1
                        && geometry.kernel <= shape.height.min(shape.width)
                        && weights.dim() == (geometry.fan_in(), geometry.out_channels)
                        && bias.len() == geometry.out_channels
                }
                Layer::AvgPool { input, window } => {
                    *input == shape && *window >= 1 && shape.height % window == 0 && shape.width % window == 0
                }
                Layer::Relu => true,
            };
            if !fits {
                return Err(NetError::Shape(format!("layer {i} does not accept input {shape:?}")));
            }
            shape = layer.output_shape(shape);
        }
        Ok(shape)
    }

    pub fn num_classes(&self) -> usize {
        self.validate().map(|s| s.len()).unwrap_or(0)
    }

    /// Indices (into `layers`) of the matrix-product layers, in order.
    pub fn gemm_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| l.is_gemm()).map(|(i, _)| i).collect()
    }

    pub fn gemm_layer(&self, gemm_index: usize) -> Option<&Layer> {
        self.gemm_layers().get(gemm_index).map(|&i| &self.layers[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| Some(l.weights()?.len() + l.bias()?.len()))
            .sum()
    }

    /// Plain float forward pass.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = match layer {
                Layer::Dense { .. } | Layer::Conv { .. } => {
                    let lowered = layer.lower_input(a.view());
                    let mut out = layer.raise_output(lowered.dot(layer.weights().unwrap()));
                    layer.add_bias(&mut out);
                    out
                }
                Layer::AvgPool { input, window } => avg_pool(a.view(), *input, *window),
                Layer::Relu => a.mapv(|v| v.max(0.0)),
            };
        }
        a
    }
}

/// Row-wise softmax, max-shifted.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits.axis_iter(Axis(0)).map(|r| argmax(r.as_slice().unwrap_or(&r.to_vec()))).collect()
}
