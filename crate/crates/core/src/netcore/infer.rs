//! Inference in float, int8 and bfloat16 arithmetic, with a per-MAC hook.
//!
//! Quantized modes convert weights once (per-tensor int8 scale, or
//! bfloat16 rounding) and convert each layer input on the fly: int8 uses a
//! per-sample symmetric scale `max|x| / 127`, bfloat16 rounds every operand.
//! Products are accumulated exactly (int8 products of at most 784·2^14 fit
//! an f64 mantissa) so the matrix-product kernel's summation order never
//! changes int8 results. bfloat16 sums are accumulated in f64 and rounded
//! to bfloat16 at the end.
//!
//! A [`MacHook`] replaces the product of selected MAC sites. The kernel
//! computes the exact product everywhere, then adds `hook − exact` for each
//! perturbed site, so an identity hook reproduces the plain pass bit for bit.

use std::ops::Range;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::model::{argmax, avg_pool, Layer, Model};
use super::NetError;
use crate::exec::Exec;
use crate::quantnum::{bf16_round, quantize_int8_auto, quantize_value, Int8Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Float,
    Int8,
    #[serde(alias = "bf16")]
    BFloat16,
}

impl std::fmt::Display for NumericMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NumericMode::Float => "float",
            NumericMode::Int8 => "int8",
            NumericMode::BFloat16 => "bfloat16",
        })
    }
}

/// Address of one multiply: gemm layer, weight-matrix row (fan-in index),
/// weight-matrix column (output neuron / channel).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacSite {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

/// Substitutes the product computed at a MAC site. Operands arrive in the
/// mode's arithmetic domain: raw integers for int8, bfloat16-exact values
/// for bfloat16, plain reals for float.
pub trait MacHook: Sync {
    /// Whether `product` may differ from `x * w` at this site.
    fn perturbs(&self, site: MacSite) -> bool;
    fn product(&self, x: f64, w: f64, site: MacSite) -> f64;

    /// Opaque per-site tag cached in the plan and handed back to
    /// [`MacHook::product_keyed`].
    fn site_key(&self, _site: MacSite) -> u32 {
        0
    }

    fn product_keyed(&self, x: f64, w: f64, site: MacSite, _key: u32) -> f64 {
        self.product(x, w, site)
    }
}

/// Exact multiplication everywhere.
pub struct IdentityHook;

impl MacHook for IdentityHook {
    fn perturbs(&self, _: MacSite) -> bool {
        false
    }

    fn product(&self, x: f64, w: f64, _: MacSite) -> f64 {
        x * w
    }
}

/// A closure applied at every site.
pub struct FnHook<F>(pub F);

impl<F: Fn(f64, f64, MacSite) -> f64 + Sync> MacHook for FnHook<F> {
    fn perturbs(&self, _: MacSite) -> bool {
        true
    }

    fn product(&self, x: f64, w: f64, site: MacSite) -> f64 {
        (self.0)(x, w, site)
    }
}

/// Perturbed `(row, col, key)` sites of one gemm layer, row-major order.
pub type SitePlan = Vec<(usize, usize, u32)>;

pub fn plan_sites<H: MacHook + ?Sized>(layer: usize, fan_in: usize, fan_out: usize, hook: &H) -> SitePlan {
    let mut plan = Vec::new();
    for row in 0..fan_in {
        for col in 0..fan_out {
            let site = MacSite { layer, row, col };
            if hook.perturbs(site) {
                plan.push((row, col, hook.site_key(site)));
            }
        }
    }
    plan
}

/// Weights of one gemm layer in operand form.
#[derive(Debug, Clone)]
pub struct OperandWeights {
    pub ops: Array2<f64>,
    /// Int8 per-tensor scale; 1 for the other modes.
    pub scale: f64,
    pub int8: Option<Int8Tensor>,
}

pub fn encode_weights(mode: NumericMode, w: &Array2<f64>) -> Result<OperandWeights, NetError> {
    Ok(match mode {
        NumericMode::Float => OperandWeights { ops: w.clone(), scale: 1.0, int8: None },
        NumericMode::BFloat16 => OperandWeights { ops: w.mapv(bf16_round), scale: 1.0, int8: None },
        NumericMode::Int8 => {
            let flat: Vec<f64> = w.iter().cloned().collect();
            let t = quantize_int8_auto(&flat)?;
            let ops = Array2::from_shape_fn(w.dim(), |(r, c)| t.raw[r * w.ncols() + c] as f64);
            OperandWeights { ops, scale: t.scale, int8: Some(t) }
        }
    })
}

/// Converts a lowered layer input to operands; returns the operand matrix
/// and the per-row factor mapping an operand product back to real units
/// (excluding the weight scale).
pub fn encode_inputs(
    mode: NumericMode,
    activations: ArrayView2<f64>,
    lowered: Array2<f64>,
    rows_per_sample: usize,
) -> (Array2<f64>, Vec<f64>) {
    match mode {
        NumericMode::Float => {
            let n = lowered.nrows();
            (lowered, vec![1.0; n])
        }
        NumericMode::BFloat16 => {
            let n = lowered.nrows();
            (lowered.mapv(bf16_round), vec![1.0; n])
        }
        NumericMode::Int8 => {
            let sample_scales: Vec<f64> = activations
                .rows()
                .into_iter()
                .map(|r| {
                    let m = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if m > 0.0 && m.is_finite() {
                        m / 127.0
                    } else {
                        1.0
                    }
                })
                .collect();
            let mut q = lowered;
            let mut row_scales = Vec::with_capacity(q.nrows());
            for (i, mut row) in q.rows_mut().into_iter().enumerate() {
                let sx = sample_scales[i / rows_per_sample];
                row.mapv_inplace(|v| quantize_value(v, sx) as f64);
                row_scales.push(sx);
            }
            (q, row_scales)
        }
    }
}

/// Adds `scale_i · (hook(x, w) − x·w)` for every planned site into `acc`.
pub fn add_deviations<H: MacHook + ?Sized>(
    layer: usize,
    xop: ArrayView2<f64>,
    wop: ArrayView2<f64>,
    plan: &[(usize, usize, u32)],
    row_factor: impl Fn(usize) -> f64,
    hook: &H,
    mut acc: ArrayViewMut2<f64>,
) {
    if plan.is_empty() {
        return;
    }
    for i in 0..xop.nrows() {
        let f = row_factor(i);
        let xrow = xop.row(i);
        let mut arow = acc.row_mut(i);
        for &(r, c, key) in plan {
            let x = xrow[r];
            let w = wop[[r, c]];
            let d = hook.product_keyed(x, w, MacSite { layer, row: r, col: c }, key) - x * w;
            if d != 0.0 {
                arow[c] += f * d;
            }
        }
    }
}

/// A model frozen into one arithmetic mode.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    mode: NumericMode,
    model: Model,
    /// Operand weights, indexed by gemm layer.
    weights: Vec<OperandWeights>,
    gemm_of_layer: Vec<Option<usize>>,
}

pub const EVAL_BATCH: usize = 250;

impl PreparedModel {
    pub fn new(model: &Model, mode: NumericMode) -> Result<Self, NetError> {
        model.validate()?;
        let mut weights = Vec::new();
        let mut gemm_of_layer = Vec::new();
        for layer in &model.layers {
            if let Some(w) = layer.weights() {
                gemm_of_layer.push(Some(weights.len()));
                weights.push(encode_weights(mode, w)?);
            } else {
                gemm_of_layer.push(None);
            }
        }
        Ok(Self { mode, model: model.clone(), weights, gemm_of_layer })
    }

    pub fn mode(&self) -> NumericMode {
        self.mode
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn num_gemm_layers(&self) -> usize {
        self.weights.len()
    }

    /// `(fan_in, fan_out)` of a gemm layer.
    pub fn gemm_dims(&self, gemm: usize) -> (usize, usize) {
        self.weights[gemm].ops.dim()
    }

    /// Reuse count of each weight per sample (conv output positions).
    pub fn gemm_reuse(&self, gemm: usize) -> usize {
        self.model.gemm_layer(gemm).map(|l| l.rows_per_sample()).unwrap_or(1)
    }

    pub fn int8_weights(&self, gemm: usize) -> Option<&Int8Tensor> {
        self.weights.get(gemm)?.int8.as_ref()
    }

    /// Replaces the stored int8 weights of one layer (e.g. after DRAM
    /// fault injection). The scale is kept from the tensor.
    pub fn set_int8_weights(&mut self, gemm: usize, tensor: Int8Tensor) -> Result<(), NetError> {
        let ow = self
            .weights
            .get_mut(gemm)
            .ok_or_else(|| NetError::Shape(format!("no gemm layer {gemm}")))?;
        if ow.int8.is_none() {
            return Err(NetError::Shape("model is not prepared in int8 mode".into()));
        }
        let (r, c) = ow.ops.dim();
        if tensor.len() != r * c {
            return Err(NetError::Shape(format!("expected {} weights, got {}", r * c, tensor.len())));
        }
        ow.ops = Array2::from_shape_fn((r, c), |(i, j)| tensor.raw[i * c + j] as f64);
        ow.scale = tensor.scale;
        ow.int8 = Some(tensor);
        Ok(())
    }

    pub fn plans<H: MacHook + ?Sized>(&self, hook: &H) -> Vec<SitePlan> {
        self.weights
            .iter()
            .enumerate()
            .map(|(g, w)| plan_sites(g, w.ops.nrows(), w.ops.ncols(), hook))
            .collect()
    }

    /// Runs `layers[range]` on activations `a` using precomputed plans.
    pub fn run_layers<H: MacHook + ?Sized>(
        &self,
        mut a: Array2<f64>,
        range: Range<usize>,
        hook: &H,
        plans: &[SitePlan],
    ) -> Array2<f64> {
        for li in range {
            let layer = &self.model.layers[li];
            a = match layer {
                Layer::Dense { .. } | Layer::Conv { .. } => {
                    let g = self.gemm_of_layer[li].expect("gemm layer");
                    let ow = &self.weights[g];
                    let rps = layer.rows_per_sample();
                    let lowered = layer.lower_input(a.view());
                    let (xop, row_scales) = encode_inputs(self.mode, a.view(), lowered, rps);
                    let mut acc = xop.dot(&ow.ops);
                    add_deviations(g, xop.view(), ow.ops.view(), &plans[g], |_| 1.0, hook, acc.view_mut());
                    match self.mode {
                        NumericMode::Float => {}
                        NumericMode::Int8 => {
                            for (mut row, sx) in acc.rows_mut().into_iter().zip(&row_scales) {
                                let f = sx * ow.scale;
                                row.mapv_inplace(|v| v * f);
                            }
                        }
                        NumericMode::BFloat16 => acc.mapv_inplace(bf16_round),
                    }
                    let mut out = layer.raise_output(acc);
                    layer.add_bias(&mut out);
                    out
                }
                Layer::AvgPool { input, window } => avg_pool(a.view(), *input, *window),
                Layer::Relu => a.mapv(|v| v.max(0.0)),
            };
        }
        a
    }

    pub fn forward_hooked<H: MacHook + ?Sized>(&self, x: ArrayView2<f64>, hook: &H) -> Array2<f64> {
        let plans = self.plans(hook);
        self.run_layers(x.to_owned(), 0..self.model.layers.len(), hook, &plans)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_hooked(x, &IdentityHook)
    }

    pub fn check_input(&self, data: &LabeledDataset) -> Result<(), NetError> {
        if data.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        if data.image_len() != self.model.input.len() {
            return Err(NetError::Shape(format!(
                "model expects {} inputs, images have {}",
                self.model.input.len(),
                data.image_len()
            )));
        }
        Ok(())
    }

    /// Top-1 predictions for every sample.
    pub fn predict_hooked<H: MacHook + ?Sized>(
        &self,
        data: &LabeledDataset,
        hook: &H,
        exec: Exec,
    ) -> Result<Vec<usize>, NetError> {
        self.check_input(data)?;
        let plans = self.plans(hook);
        let batches = data.len().div_ceil(EVAL_BATCH);
        let per_batch = exec.map_range(batches, |b| {
            let range = b * EVAL_BATCH..((b + 1) * EVAL_BATCH).min(data.len());
            let x = batch_matrix(data, range);
            let logits = self.run_layers(x, 0..self.model.layers.len(), hook, &plans);
            logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect::<Vec<_>>()
        });
        Ok(per_batch.into_iter().flatten().collect())
    }

    pub fn predict(&self, data: &LabeledDataset) -> Result<Vec<usize>, NetError> {
        self.predict_hooked(data, &IdentityHook, Exec::default())
    }

    pub fn accuracy_hooked<H: MacHook + ?Sized>(
        &self,
        data: &LabeledDataset,
        hook: &H,
        exec: Exec,
    ) -> Result<f64, NetError> {
        let pred = self.predict_hooked(data, hook, exec)?;
        Ok(accuracy_of(&pred, &data.labels))
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64, NetError> {
        self.accuracy_hooked(data, &IdentityHook, Exec::default())
    }
}

pub fn accuracy_of(pred: &[usize], labels: &[u8]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| **p == **l as usize).count();
    hits as f64 / labels.len() as f64
}

/// `confusion[true][predicted]`.
pub fn confusion_matrix(pred: &[usize], labels: &[u8], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in pred.iter().zip(labels) {
        m[l as usize][p.min(classes - 1)] += 1;
    }
    m
}

/// Recall per true class (NaN for absent classes).
pub fn per_class_recall(pred: &[usize], labels: &[u8], classes: usize) -> Vec<f64> {
    confusion_matrix(pred, labels, classes)
        .iter()
        .enumerate()
        .map(|(c, row)| row[c] as f64 / row.iter().sum::<usize>() as f64)
        .collect()
}

/// Samples `range` as a `batch × pixels` matrix scaled to `[0, 1]`.
pub fn batch_matrix(data: &LabeledDataset, range: Range<usize>) -> Array2<f64> {
    let n = data.image_len();
    let px = &data.pixels[range.start * n..range.end * n];
    Array2::from_shape_fn((range.len(), n), |(i, j)| px[i * n + j] as f64 / 255.0)
}

/// Top-1 accuracy of `model` on `data` in the given arithmetic.
pub fn evaluate(model: &Model, data: &LabeledDataset, mode: NumericMode) -> Result<f64, NetError> {
    PreparedModel::new(model, mode)?.accuracy(data)
}

/// Logits of one input vector with every multiply routed through `hook`.
pub fn forward_hooked<H: MacHook + ?Sized>(
    model: &Model,
    input: &[f64],
    mode: NumericMode,
    hook: &H,
) -> Result<Vec<f64>, NetError> {
    let prepared = PreparedModel::new(model, mode)?;
    if input.len() != model.input.len() {
        return Err(NetError::Shape(format!("expected {} inputs, got {}", model.input.len(), input.len())));
    }
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    Ok(prepared.forward_hooked(x, hook).row(0).to_vec())
}

/// Logit rows of a batch, float mode, no hook.
pub fn logits(model: &Model, x: ArrayView2<f64>) -> Array2<f64> {
    model.forward(x)
}
