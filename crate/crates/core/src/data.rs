//! IDX ingestion and noise augmentation.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

/// Images as flat pixel vectors in `[0, 1]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pixels: Vec<f64>,
    labels: Vec<usize>,
    pixel_len: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(pixels: Vec<f64>, labels: Vec<usize>, pixel_len: usize, class_count: usize) -> Result<Self> {
        if pixel_len == 0 {
            return Err(Error::Dimension("images must have at least one pixel".into()));
        }
        if pixels.len() != labels.len() * pixel_len {
            return Err(Error::Consistency(format!(
                "{} labels need {} pixel values, got {}",
                labels.len(),
                labels.len() * pixel_len,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("pixel {p} is outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Domain(format!("label {l} is not below class count {class_count}")));
        }
        Ok(Self { pixels, labels, pixel_len, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixel_len(&self) -> usize {
        self.pixel_len
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.pixel_len..(i + 1) * self.pixel_len]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `count` samples (or all of them if fewer).
    pub fn take(&self, count: usize) -> Dataset {
        let n = count.min(self.len());
        Dataset {
            pixels: self.pixels[..n * self.pixel_len].to_vec(),
            labels: self.labels[..n].to_vec(),
            pixel_len: self.pixel_len,
            class_count: self.class_count,
        }
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.pixel_len != other.pixel_len || self.class_count != other.class_count {
            return Err(Error::Consistency("cannot concatenate datasets of different shapes".into()));
        }
        let mut pixels = self.pixels.clone();
        pixels.extend_from_slice(&other.pixels);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset { pixels, labels, pixel_len: self.pixel_len, class_count: self.class_count })
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what} header is truncated")))
}

/// Parses an IDX image stream (magic 0x803) and label stream (magic 0x801).
///
/// Pixels are scaled from bytes to `[0, 1]` by dividing by 255.
pub fn load_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let magic = read_u32(image_bytes, 0, "image")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let magic = read_u32(label_bytes, 0, "label")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let images = read_u32(image_bytes, 4, "image")? as usize;
    let rows = read_u32(image_bytes, 8, "image")? as usize;
    let cols = read_u32(image_bytes, 12, "image")? as usize;
    let labels = read_u32(label_bytes, 4, "label")? as usize;
    if images != labels {
        return Err(Error::Consistency(format!("{images} images but {labels} labels")));
    }
    let pixel_len = rows * cols;
    let body = &image_bytes[16..];
    if body.len() != images * pixel_len {
        return Err(Error::Length(format!(
            "image stream holds {} pixel bytes, header promises {}",
            body.len(),
            images * pixel_len
        )));
    }
    let label_body = &label_bytes[8..];
    if label_body.len() != labels {
        return Err(Error::Length(format!("label stream holds {} bytes, header promises {labels}", label_body.len())));
    }
    if let Some(bad) = label_body.iter().find(|&&l| l as usize >= MNIST_CLASSES) {
        return Err(Error::Format(format!("label {bad} is outside 0..{MNIST_CLASSES}")));
    }
    let pixels = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels = label_body.iter().map(|&l| l as usize).collect();
    Dataset::new(pixels, labels, pixel_len, MNIST_CLASSES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads the standard uncompressed MNIST files from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images = fs::read(dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = fs::read(dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    load_idx(&images, &labels)
}

/// Additive Gaussian pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation in pixel units.
    pub sigma: f64,
    pub rng_seed: u64,
    /// Append the clean originals after the noisy copies instead of replacing them.
    pub keep_original: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.3, rng_seed: 0, keep_original: false }
    }
}

#[inline]
pub fn add_clipped(pixel: f64, draw: f64) -> f64 {
    (pixel + draw).clamp(0.0, 1.0)
}

pub fn augment_noise(ds: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    if !cfg.sigma.is_finite() || cfg.sigma < 0.0 {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {}", cfg.sigma)));
    }
    let noisy = if cfg.sigma == 0.0 {
        ds.clone()
    } else {
        let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let pixels = ds.pixels.iter().map(|&p| add_clipped(p, normal.sample(&mut rng))).collect();
        Dataset { pixels, ..ds.clone() }
    };
    if cfg.keep_original {
        noisy.concat(ds)
    } else {
        Ok(noisy)
    }
}
