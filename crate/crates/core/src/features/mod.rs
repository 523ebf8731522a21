//! Local features: descriptor sets, brute-force ratio-test matching, the
//! on-disk descriptor cache, image preprocessing and the built-in detector.

mod cache;
mod detector;
mod matcher;
mod preprocess;

pub use cache::{
    cache_file_name, decode as decode_descriptor_cache, encode as encode_descriptor_cache,
    read_descriptor_cache, write_descriptor_cache, CACHE_MAGIC, CACHE_VERSION,
};
pub use detector::{CacheDetector, CornerBriefDetector, FeatureDetector, BRIEF_BYTES};
pub use matcher::{match_features, MatchPair, MatchReport, MatcherConfig};
pub use preprocess::{load_image, preprocess_image, CROP_SIZE, RESIZE_SIZE};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("descriptor kinds differ: query is {query:?}, train is {train:?}")]
    KindMismatch {
        query: DescriptorKind,
        train: DescriptorKind,
    },
    #[error("descriptor dimensions differ: query {query}, train {train}")]
    DimMismatch { query: usize, train: usize },
    #[error("ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("invalid descriptor set: {0}")]
    InvalidSet(String),
    #[error("could not decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("detector failure: {0}")]
    DetectorFailure(String),
    #[error("descriptor cache {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },
    #[error("no descriptors available for image {0}")]
    MissingDescriptors(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorKind {
    /// `f32` vectors compared with the Euclidean distance.
    RealL2,
    /// Packed bit strings compared with the Hamming distance.
    BinaryHamming,
}

impl DescriptorKind {
    pub fn code(self) -> u8 {
        match self {
            Self::RealL2 => 0,
            Self::BinaryHamming => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::RealL2),
            1 => Some(Self::BinaryHamming),
            _ => None,
        }
    }
}

/// Row-major descriptor storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptors {
    Real(Vec<f32>),
    Binary(Vec<u8>),
}

impl Descriptors {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            Self::Real(_) => DescriptorKind::RealL2,
            Self::Binary(_) => DescriptorKind::BinaryHamming,
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Real(v) => v.len(),
            Self::Binary(v) => v.len(),
        }
    }
}

/// Keypoints and descriptors of one image.
///
/// For binary descriptors `dim` counts bytes, so a 256-bit descriptor has
/// `dim == 32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    image_id: String,
    keypoints: Vec<[f32; 2]>,
    dim: usize,
    descriptors: Descriptors,
}

impl DescriptorSet {
    pub fn new(
        image_id: impl Into<String>,
        keypoints: Vec<[f32; 2]>,
        dim: usize,
        descriptors: Descriptors,
    ) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::InvalidSet(
                "descriptor dimension must be > 0".into(),
            ));
        }
        if keypoints.len().checked_mul(dim) != Some(descriptors.len()) {
            return Err(FeatureError::InvalidSet(format!(
                "{} keypoints x dim {} does not match {} descriptor elements",
                keypoints.len(),
                dim,
                descriptors.len()
            )));
        }
        let limit = CROP_SIZE as f32;
        if let Some(kp) = keypoints.iter().find(|[x, y]| {
            !(x.is_finite()
                && y.is_finite()
                && (0.0..limit).contains(x)
                && (0.0..limit).contains(y))
        }) {
            return Err(FeatureError::InvalidSet(format!(
                "keypoint ({}, {}) outside [0, {limit})",
                kp[0], kp[1]
            )));
        }
        if let Descriptors::Real(values) = &descriptors {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::InvalidSet(
                    "non-finite descriptor value".into(),
                ));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            keypoints,
            dim,
            descriptors,
        })
    }

    pub fn empty(image_id: impl Into<String>, kind: DescriptorKind, dim: usize) -> Self {
        let descriptors = match kind {
            DescriptorKind::RealL2 => Descriptors::Real(Vec::new()),
            DescriptorKind::BinaryHamming => Descriptors::Binary(Vec::new()),
        };
        Self {
            image_id: image_id.into(),
            keypoints: Vec::new(),
            dim: dim.max(1),
            descriptors,
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn keypoints(&self) -> &[[f32; 2]] {
        &self.keypoints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DescriptorKind {
        self.descriptors.kind()
    }

    pub fn descriptors(&self) -> &Descriptors {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn with_image_id(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = image_id.into();
        self
    }
}
