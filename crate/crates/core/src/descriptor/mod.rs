//! Per-frame descriptors and the ordered sets that describe one traversal.
//!
//! Single descriptors are produced in 64-bit precision by [`normalize`]. A
//! [`DescriptorSet`] stores its rows as 32-bit floats, matching the on-disk
//! format, so a file round trip is bit-exact.

mod io;
mod pixel;

pub use io::{load_descriptor_file, save_descriptor_file, write_descriptor_set, read_descriptor_set};
pub use pixel::{pixel_descriptor, read_pgm, write_pgm, GrayImage, PixelDescriptorConfig};

use thiserror::Error;

/// Source tag used for descriptors built by [`pixel_descriptor`].
pub const PIXEL_PATCH_TAG: &str = "pixel-patch";
/// Source tag for descriptors with no declared layer.
pub const CUSTOM_TAG: &str = "custom";
/// Source tag of generated test traversals.
pub const SYNTHETIC_TAG: &str = "synthetic";

/// Tolerance used when loading sets that should already be unit-norm.
pub const LOAD_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("cannot normalize an all-zero vector")]
    ZeroVector,
    #[error("non-finite value at index {index}")]
    NonFiniteInput { index: usize },
    #[error("descriptor must have at least one element")]
    EmptyDescriptor,
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("invalid pixel descriptor config: {0}")]
    BadConfig(String),
    #[error("descriptor set must contain at least one descriptor")]
    EmptySet,
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("row {row} is not unit-norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("invalid PGM: {0}")]
    BadPgm(String),
    #[error("invalid UTF-8 in {0}")]
    BadUtf8(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unit-normalized feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `raw` to unit L2 norm.
///
/// The norm is computed after dividing by the largest magnitude so that very
/// large or very small inputs do not overflow or underflow the sum of squares.
pub fn normalize(raw: &[f64]) -> Result<Descriptor, DescriptorError> {
    if raw.is_empty() {
        return Err(DescriptorError::EmptyDescriptor);
    }
    if let Some(index) = raw.iter().position(|v| !v.is_finite()) {
        return Err(DescriptorError::NonFiniteInput { index });
    }
    let max_abs = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Err(DescriptorError::ZeroVector);
    }
    let scaled: Vec<f64> = raw.iter().map(|v| v / max_abs).collect();
    let norm = l2_norm(&scaled);
    let values = scaled.into_iter().map(|v| v / norm).collect();
    Ok(Descriptor { values })
}

/// Euclidean distance between two rows, accumulated in 64-bit precision in
/// index order.
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        acc += d * d;
    }
    acc.sqrt()
}

/// The descriptors of one traversal, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
    frame_names: Option<Vec<String>>,
    source_tag: String,
}

impl DescriptorSet {
    pub fn from_descriptors(
        descriptors: &[Descriptor],
        source_tag: impl Into<String>,
    ) -> Result<Self, DescriptorError> {
        let first = descriptors.first().ok_or(DescriptorError::EmptySet)?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(dim * descriptors.len());
        for d in descriptors {
            if d.dim() != dim {
                return Err(DescriptorError::DimMismatch {
                    expected: dim,
                    actual: d.dim(),
                });
            }
            data.extend(d.values().iter().map(|&v| v as f32));
        }
        Ok(Self {
            dim,
            data,
            frame_names: None,
            source_tag: source_tag.into(),
        })
    }

    /// Builds a set from raw row-major storage. Rows are checked for finite
    /// values but not for unit norm.
    pub fn from_rows(
        dim: usize,
        data: Vec<f32>,
        source_tag: impl Into<String>,
    ) -> Result<Self, DescriptorError> {
        if dim == 0 {
            return Err(DescriptorError::EmptyDescriptor);
        }
        if data.is_empty() {
            return Err(DescriptorError::EmptySet);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(DescriptorError::DimMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFiniteInput { index });
        }
        Ok(Self {
            dim,
            data,
            frame_names: None,
            source_tag: source_tag.into(),
        })
    }

    pub fn with_frame_names(mut self, names: Vec<String>) -> Result<Self, DescriptorError> {
        if names.len() != self.len() {
            return Err(DescriptorError::DimMismatch {
                expected: self.len(),
                actual: names.len(),
            });
        }
        self.frame_names = Some(names);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn frame_names(&self) -> Option<&[String]> {
        self.frame_names.as_deref()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// Fails on the first row whose norm deviates from 1 by more than `tol`.
    pub fn check_unit_norm(&self, tol: f64) -> Result<(), DescriptorError> {
        for (row, values) in self.rows().enumerate() {
            let norm = values
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > tol {
                return Err(DescriptorError::NotNormalized { row, norm });
            }
        }
        Ok(())
    }
}

/// Flattened output width of each layer of the AlexNet-style scene network.
pub fn layer_dim(layer: &str) -> Option<usize> {
    let dim = match layer.to_ascii_lowercase().as_str() {
        "conv1" => 290_400,
        "pool1" => 69_984,
        "conv2" => 186_624,
        "pool2" => 43_264,
        "conv3" => 64_896,
        "conv4" => 64_896,
        "conv5" => 43_264,
        "pool5" => 9_216,
        "fc6" => 4_096,
        "fc7" => 4_096,
        "fc8" => 1_000,
        _ => return None,
    };
    Some(dim)
}

/// Checks that `set` has the dimension its declared source implies.
///
/// Pixel-patch, synthetic and custom sources accept any dimension; unknown
/// layer names are rejected.
pub fn validate_dim(set: &DescriptorSet, expected_source: &str) -> bool {
    if [PIXEL_PATCH_TAG, SYNTHETIC_TAG, CUSTOM_TAG].contains(&expected_source) {
        return true;
    }
    layer_dim(expected_source) == Some(set.dim())
}
