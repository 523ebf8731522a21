//! The training-pose database and featureless, pose-only image retrieval.

mod posefile;
mod retrieval;

pub use posefile::{
    format_pose_text, parse_pose_text, read_pose_file, write_pose_file, PoseRecord,
};
pub use retrieval::{
    retrieve_image, retrieve_image_with_stats, similarity, RetrievalResult, RetrievalStats,
};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cache_file_name, read_descriptor_cache, DescriptorSet, FeatureError};
use crate::pose::{norm4, Pose, PoseError};

/// Maximum deviation of an ingested quaternion's norm from 1 before the
/// record is rejected; larger errors usually mean a wrong column order.
pub const UNIT_NORM_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error(
        "image {image_id:?}: quaternion norm {norm} is not unit (check the w,x,y,z column order)"
    )]
    NonUnitQuaternion { image_id: String, norm: f64 },
    #[error("distance threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("entry index {0} out of range")]
    UnknownEntry(usize),
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid database manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Lazily loaded handle to an entry's descriptors.
#[derive(Debug, Clone)]
pub struct DescriptorRef {
    path: Option<PathBuf>,
    loaded: OnceLock<Arc<DescriptorSet>>,
}

impl DescriptorRef {
    pub fn in_memory(set: DescriptorSet) -> Self {
        Self {
            path: None,
            loaded: OnceLock::from(Arc::new(set)),
        }
    }

    pub fn cache_file(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            loaded: OnceLock::new(),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded.get().is_some()
    }

    /// Returns the descriptors, reading the cache file on first use.
    pub fn get(&self, image_id: &str) -> Result<Arc<DescriptorSet>, FeatureError> {
        if let Some(set) = self.loaded.get() {
            return Ok(set.clone());
        }
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| FeatureError::MissingDescriptors(image_id.to_string()))?;
        let set = Arc::new(read_descriptor_cache(path, image_id)?);
        Ok(self.loaded.get_or_init(|| set).clone())
    }
}

#[derive(Debug, Clone)]
pub struct TrainEntry {
    pub image_id: String,
    pub pose: Pose,
    pub descriptors: Option<DescriptorRef>,
}

impl TrainEntry {
    pub fn new(image_id: impl Into<String>, pose: Pose) -> Self {
        Self {
            image_id: image_id.into(),
            pose,
            descriptors: None,
        }
    }

    pub fn with_descriptors(mut self, set: DescriptorSet) -> Self {
        self.descriptors = Some(DescriptorRef::in_memory(set));
        self
    }

    pub fn load_descriptors(&self) -> Result<Arc<DescriptorSet>, FeatureError> {
        self.descriptors
            .as_ref()
            .ok_or_else(|| FeatureError::MissingDescriptors(self.image_id.clone()))?
            .get(&self.image_id)
    }
}

/// Training images with ground-truth poses, in ingestion order.
///
/// Entry order is significant: retrieval ties resolve to the last qualifying
/// entry.
#[derive(Debug, Clone, Default)]
pub struct PoseDatabase {
    scene_name: String,
    entries: Vec<TrainEntry>,
    by_id: HashMap<String, usize>,
}

impl PoseDatabase {
    pub fn new(scene_name: impl Into<String>) -> Self {
        Self {
            scene_name: scene_name.into(),
            ..Self::default()
        }
    }

    /// Appends an entry after validating its id and quaternion. Quaternions
    /// within [`UNIT_NORM_TOLERANCE`] of unit norm are renormalized.
    pub fn push(&mut self, mut entry: TrainEntry) -> Result<usize, DbError> {
        if self.by_id.contains_key(&entry.image_id) {
            return Err(DbError::DuplicateImageId(entry.image_id));
        }
        let norm = norm4(&entry.pose.orientation());
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(DbError::NonUnitQuaternion {
                image_id: entry.image_id,
                norm,
            });
        }
        // Already-unit quaternions are kept bit-for-bit so that write/read
        // cycles are exact.
        if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
            entry.pose = entry.pose.normalized();
        }
        let index = self.entries.len();
        self.by_id.insert(entry.image_id.clone(), index);
        self.entries.push(entry);
        Ok(index)
    }

    pub fn from_records(
        scene_name: impl Into<String>,
        records: &[PoseRecord],
    ) -> Result<Self, DbError> {
        let mut db = Self::new(scene_name);
        for rec in records {
            let pose = Pose::from_array(rec.values).map_err(|e| DbError::Parse {
                line: rec.line,
                reason: e.to_string(),
            })?;
            db.push(TrainEntry::new(rec.image_id.clone(), pose))?;
        }
        Ok(db)
    }

    /// Reads a pose file. The scene name defaults to the file stem.
    pub fn ingest_pose_file(path: &Path) -> Result<Self, DbError> {
        let scene = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_records(scene, &read_pose_file(path)?)
    }

    /// Points every entry that has a `<id>.pgdc` file in `dir` at it.
    /// Returns the number of entries that received a cache handle.
    pub fn attach_descriptor_dir(&mut self, dir: &Path) -> usize {
        let mut attached = 0;
        for entry in &mut self.entries {
            let path = dir.join(cache_file_name(&entry.image_id));
            if path.is_file() {
                entry.descriptors = Some(DescriptorRef::cache_file(path));
                attached += 1;
            }
        }
        attached
    }

    pub fn set_descriptors(&mut self, index: usize, set: DescriptorSet) -> Result<(), DbError> {
        let entry = self
            .entries
            .get_mut(index)
            .ok_or(DbError::UnknownEntry(index))?;
        entry.descriptors = Some(DescriptorRef::in_memory(set));
        Ok(())
    }

    pub fn scene_name(&self) -> &str {
        &self.scene_name
    }

    pub fn set_scene_name(&mut self, name: impl Into<String>) {
        self.scene_name = name.into();
    }

    pub fn entries(&self) -> &[TrainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&TrainEntry> {
        self.entries.get(index)
    }

    pub fn index_of(&self, image_id: &str) -> Option<usize> {
        self.by_id.get(image_id).copied()
    }

    pub fn by_id(&self, image_id: &str) -> Option<&TrainEntry> {
        self.index_of(image_id).map(|i| &self.entries[i])
    }

    pub fn write_pose_file(&self, path: &Path) -> Result<(), DbError> {
        write_pose_file(
            path,
            self.entries
                .iter()
                .map(|e| (e.image_id.as_str(), e.pose.to_array())),
        )
    }

    /// Writes the JSON manifest used by the command-line tools.
    pub fn save_manifest(
        &self,
        path: &Path,
        descriptors_dir: Option<&Path>,
    ) -> Result<(), DbError> {
        let manifest = Manifest {
            scene: self.scene_name.clone(),
            descriptors_dir: descriptors_dir.map(Path::to_path_buf),
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    image_id: e.image_id.clone(),
                    pose: e.pose,
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| DbError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        fs::write(path, json).map_err(|source| DbError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads a manifest written by [`save_manifest`](Self::save_manifest).
    /// A relative descriptor directory is resolved against the manifest's
    /// directory.
    pub fn load_manifest(path: &Path) -> Result<(Self, Option<PathBuf>), DbError> {
        let text = fs::read_to_string(path).map_err(|source| DbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DbError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut db = Self::new(manifest.scene);
        for e in manifest.entries {
            db.push(TrainEntry::new(e.image_id, e.pose))?;
        }
        let dir = manifest.descriptors_dir.map(|d| {
            if d.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(d)
            } else {
                d
            }
        });
        if let Some(dir) = &dir {
            db.attach_descriptor_dir(dir);
        }
        Ok((db, dir))
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    scene: String,
    descriptors_dir: Option<PathBuf>,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    image_id: String,
    pose: Pose,
}
