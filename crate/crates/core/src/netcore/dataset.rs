//! Labeled grayscale image sets: IDX ingestion and a synthetic generator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NetError;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// N grayscale images (row-major bytes) with labels in `0..10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, NetError> {
        let n = labels.len();
        if pixels.len() != n * rows * cols {
            return Err(NetError::CountMismatch { images: pixels.len() / (rows * cols).max(1), labels: n });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(NetError::BadLabel(bad));
        }
        Ok(Self { rows, cols, pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn features(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.image(i).iter().map(|&p| p as f64 / 255.0)
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.image_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, NetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| NetError::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Parses an IDX image file (`0x00000803`, dims N×H×W).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), NetError> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(NetError::WrongMagic { expected: IDX_IMAGE_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(NetError::Truncated(format!("images: expected {need} pixel bytes, found {}", payload.len())));
    }
    Ok((n, rows, cols, payload[..need].to_vec()))
}

/// Parses an IDX label file (`0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, NetError> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(NetError::WrongMagic { expected: IDX_LABEL_MAGIC, found: magic });
    }
    let n = read_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(NetError::Truncated(format!("labels: expected {n} label bytes, found {}", payload.len())));
    }
    Ok(payload[..n].to_vec())
}

pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<LabeledDataset, NetError> {
    let read = |p: &Path| fs::read(p).map_err(|e| NetError::Io(format!("{}: {e}", p.display())));
    let (n, rows, cols, pixels) = parse_idx_images(&read(image_path)?)?;
    let labels = parse_idx_labels(&read(label_path)?)?;
    if labels.len() != n {
        return Err(NetError::CountMismatch { images: n, labels: labels.len() });
    }
    LabeledDataset::new(rows, cols, pixels, labels)
}

/// Serializes a dataset back to the two IDX payloads.
pub fn to_idx(ds: &LabeledDataset) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + ds.pixels.len());
    for v in [IDX_IMAGE_MAGIC, ds.len() as u32, ds.rows as u32, ds.cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&ds.pixels);
    let mut labels = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABEL_MAGIC, ds.len() as u32] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend_from_slice(&ds.labels);
    (images, labels)
}

/// Parameters of the synthetic class-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub seed: u64,
    /// Standard deviation of the blob centre jitter, in pixels.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Standard deviation of additive pixel noise, in `[0, 1]` intensity units.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_jitter() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.15
}

impl SyntheticSpec {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, jitter: default_jitter(), noise: default_noise() }
    }
}

/// 28×28 images of Gaussian blobs whose centre encodes the class; classes
/// cycle so the set is balanced.
pub fn synthetic(spec: &SyntheticSpec) -> LabeledDataset {
    const SIDE: usize = 28;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pixels = Vec::with_capacity(spec.samples * SIDE * SIDE);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % NUM_CLASSES;
        // ten centres on a ring of radius 8 around the image centre
        let angle = class as f64 * std::f64::consts::TAU / NUM_CLASSES as f64;
        let cx = 13.5 + 8.0 * angle.cos() + spec.jitter * rng.sample::<f64, _>(StandardNormal);
        let cy = 13.5 + 8.0 * angle.sin() + spec.jitter * rng.sample::<f64, _>(StandardNormal);
        let sigma = 2.5 + 0.5 * rng.random::<f64>();
        for y in 0..SIDE {
            for x in 0..SIDE {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = (-d2 / (2.0 * sigma * sigma)).exp() + spec.noise * rng.sample::<f64, _>(StandardNormal);
                pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        labels.push(class as u8);
    }
    LabeledDataset { rows: SIDE, cols: SIDE, pixels, labels }
}
