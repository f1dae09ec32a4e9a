//! Analytic multiply / add counts of one forward pass.

use serde::{Deserialize, Serialize};

use super::MacError;
use crate::netcore::model::{Layer, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerDesc {
    Conv { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Linear { inputs: usize, outputs: usize },
    Pool { kernel: usize, stride: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub name: String,
    /// `(channels, height, width)` of one input.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerDesc>,
}

fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> LayerDesc {
    LayerDesc::Conv { in_channels, out_channels, kernel, stride, padding }
}

fn linear(inputs: usize, outputs: usize) -> LayerDesc {
    LayerDesc::Linear { inputs, outputs }
}

fn pool(kernel: usize, stride: usize) -> LayerDesc {
    LayerDesc::Pool { kernel, stride }
}

impl ArchDescriptor {
    /// Classic LeNet-5 on 32×32 inputs.
    pub fn lenet5() -> Self {
        Self {
            name: "lenet5".into(),
            input: (1, 32, 32),
            layers: vec![
                conv(1, 6, 5, 1, 0),
                pool(2, 2),
                conv(6, 16, 5, 1, 0),
                pool(2, 2),
                conv(16, 120, 5, 1, 0),
                linear(120, 84),
                linear(84, 10),
            ],
        }
    }

    /// AlexNet, single-tower geometry (64-192-384-256-256 channels).
    pub fn alexnet() -> Self {
        Self {
            name: "alexnet".into(),
            input: (3, 224, 224),
            layers: vec![
                conv(3, 64, 11, 4, 2),
                pool(3, 2),
                conv(64, 192, 5, 1, 2),
                pool(3, 2),
                conv(192, 384, 3, 1, 1),
                conv(384, 256, 3, 1, 1),
                conv(256, 256, 3, 1, 1),
                pool(3, 2),
                linear(9216, 4096),
                linear(4096, 4096),
                linear(4096, 1000),
            ],
        }
    }

    /// Descriptor of an in-memory model.
    pub fn of_model(model: &Model) -> Self {
        let i = model.input;
        let layers = model
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { weights, .. } => Some(linear(weights.nrows(), weights.ncols())),
                Layer::Conv { geometry, .. } => {
                    Some(conv(geometry.input.channels, geometry.out_channels, geometry.kernel, 1, 0))
                }
                Layer::AvgPool { window, .. } => Some(pool(*window, *window)),
                Layer::Relu => None,
            })
            .collect();
        Self { name: "model".into(), input: (i.channels, i.height, i.width), layers }
    }
}

fn out_dim(size: usize, kernel: usize, stride: usize, padding: usize, layer: usize) -> Result<usize, MacError> {
    if stride == 0 || kernel == 0 || kernel > size + 2 * padding {
        return Err(MacError::Architecture(format!(
            "layer {layer}: kernel {kernel}, stride {stride}, padding {padding} on extent {size}"
        )));
    }
    Ok((size + 2 * padding - kernel) / stride + 1)
}

/// `(multiplications, additions)` for one input. Every multiply feeds one
/// accumulate, so the two counts coincide.
pub fn mac_count(arch: &ArchDescriptor) -> Result<(u64, u64), MacError> {
    let (mut c, mut h, mut w) = arch.input;
    let mut flat: Option<usize> = None;
    let mut macs = 0u64;
    for (i, layer) in arch.layers.iter().enumerate() {
        match *layer {
            LayerDesc::Conv { in_channels, out_channels, kernel, stride, padding } => {
                if flat.is_some() {
                    return Err(MacError::Architecture(format!("layer {i}: convolution after a linear layer")));
                }
                if in_channels != c {
                    return Err(MacError::Architecture(format!("layer {i}: expects {in_channels} channels, gets {c}")));
                }
                h = out_dim(h, kernel, stride, padding, i)?;
                w = out_dim(w, kernel, stride, padding, i)?;
                c = out_channels;
                macs += (h * w * c * in_channels * kernel * kernel) as u64;
            }
            LayerDesc::Pool { kernel, stride } => {
                if flat.is_some() {
                    return Err(MacError::Architecture(format!("layer {i}: pooling after a linear layer")));
                }
                h = out_dim(h, kernel, stride, 0, i)?;
                w = out_dim(w, kernel, stride, 0, i)?;
            }
            LayerDesc::Linear { inputs, outputs } => {
                let have = flat.unwrap_or(c * h * w);
                if inputs != have {
                    return Err(MacError::Architecture(format!("layer {i}: expects {inputs} inputs, gets {have}")));
                }
                macs += (inputs * outputs) as u64;
                flat = Some(outputs);
            }
        }
    }
    Ok((macs, macs))
}
