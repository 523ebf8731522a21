//! Calibrating the match-count threshold from far image pairs.
//!
//! For each anchor, the far partner is the training image that lies strictly
//! beyond `d_th` in position and differs most in orientation. Such pairs
//! should not be accepted as keyframe matches, so the largest good-match
//! count among them is a natural floor for `gamma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{DbError, PoseDatabase, TrainEntry};
use crate::features::{match_features, FeatureError, MatcherConfig};
use crate::pose::{normalize, position_distance, unit_orientation_distance, DistanceConfig};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("no descriptors available for image {0:?}")]
    MissingDescriptors(String),
    #[error("anchor {0:?} is not in the database")]
    UnknownAnchor(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Feature(FeatureError),
}

impl From<FeatureError> for TuneError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::MissingDescriptors(id) => Self::MissingDescriptors(id),
            other => Self::Feature(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarPair {
    pub anchor: String,
    pub far: String,
    #[serde(rename = "dist_pos")]
    pub position_distance: f64,
    #[serde(rename = "dist_ori")]
    pub orientation_distance: f64,
    #[serde(rename = "matches")]
    pub good_match_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub scene: String,
    pub d_th: f64,
    pub ratio: f64,
    pub pairs: Vec<FarPair>,
    pub max_matches: usize,
    pub suggested_gamma: u32,
}

impl TuneReport {
    /// Match counts of all pairs in ascending order.
    pub fn match_distribution(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.pairs.iter().map(|p| p.good_match_count).collect();
        counts.sort_unstable();
        counts
    }
}

/// Finds the far partner of `anchor`: among entries with position distance
/// strictly greater than `d_th`, the one with the largest orientation
/// distance, ties going to the later entry. The match count is left at 0.
pub fn sample_far_pair(
    db: &PoseDatabase,
    anchor: &TrainEntry,
    d_th: f64,
    cfg: DistanceConfig,
) -> Result<Option<FarPair>, DbError> {
    if !(d_th > 0.0 && d_th.is_finite()) {
        return Err(DbError::InvalidThreshold(d_th));
    }
    let q = normalize(&anchor.pose.orientation())?;
    let mut best: Option<(usize, f64, f64)> = None;
    let mut max_ori = f64::NEG_INFINITY;
    for (i, entry) in db.entries().iter().enumerate() {
        let dp = position_distance(&anchor.pose, &entry.pose);
        if dp <= d_th {
            continue;
        }
        let d = unit_orientation_distance(&q, &entry.pose.orientation(), cfg);
        if d >= max_ori {
            max_ori = d;
            best = Some((i, dp, d));
        }
    }
    Ok(best.map(|(i, dp, d)| FarPair {
        anchor: anchor.image_id.clone(),
        far: db.entries()[i].image_id.clone(),
        position_distance: dp,
        orientation_distance: d,
        good_match_count: 0,
    }))
}

/// Builds the far pair of every anchor, counts good matches between the
/// anchor and its partner, and suggests `gamma = max(1, max_matches)`.
pub fn tune_gamma(
    db: &PoseDatabase,
    anchors: &[String],
    d_th: f64,
    matcher: &MatcherConfig,
    cfg: DistanceConfig,
) -> Result<TuneReport, TuneError> {
    matcher.validate()?;
    let pairs = anchors
        .par_iter()
        .map(|id| {
            let anchor = db
                .by_id(id)
                .ok_or_else(|| TuneError::UnknownAnchor(id.clone()))?;
            let Some(mut pair) = sample_far_pair(db, anchor, d_th, cfg)? else {
                return Ok(None);
            };
            let far = db
                .by_id(&pair.far)
                .expect("far partner comes from the database");
            let a = anchor.load_descriptors()?;
            let b = far.load_descriptors()?;
            pair.good_match_count = match_features(&a, &b, matcher)?.good_match_count;
            Ok(Some(pair))
        })
        .collect::<Result<Vec<_>, TuneError>>()?;
    let pairs: Vec<FarPair> = pairs.into_iter().flatten().collect();
    let max_matches = pairs.iter().map(|p| p.good_match_count).max().unwrap_or(0);
    Ok(TuneReport {
        scene: db.scene_name().to_string(),
        d_th,
        ratio: matcher.ratio,
        pairs,
        max_matches,
        suggested_gamma: max_matches.max(1).min(u32::MAX as usize) as u32,
    })
}
