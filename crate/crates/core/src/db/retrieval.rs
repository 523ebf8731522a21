use serde::Serialize;

use super::{DbError, PoseDatabase};
use crate::features::{match_features, DescriptorSet, MatcherConfig};
use crate::pose::{normalize, position_distance, unit_orientation_distance, DistanceConfig, Pose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RetrievalResult {
    NoCandidate,
    Found {
        entry_index: usize,
        image_id: String,
        orientation_distance: f64,
    },
}

impl RetrievalResult {
    pub fn entry_index(&self) -> Option<usize> {
        match self {
            Self::NoCandidate => None,
            Self::Found { entry_index, .. } => Some(*entry_index),
        }
    }
}

/// Number of distance evaluations performed by one retrieval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetrievalStats {
    pub position_evals: usize,
    pub orientation_evals: usize,
}

pub(crate) fn check_threshold(d_th: f64) -> Result<(), DbError> {
    if d_th > 0.0 && d_th.is_finite() {
        Ok(())
    } else {
        Err(DbError::InvalidThreshold(d_th))
    }
}

/// Pose-only retrieval of the closest training image.
///
/// Candidates are the entries whose position lies within `d_th` (inclusive)
/// of the prediction. Among them the entry with the smallest orientation
/// distance wins; equal distances resolve to the later entry. Returns
/// [`RetrievalResult::NoCandidate`] when nothing lies within `d_th`.
pub fn retrieve_image(
    db: &PoseDatabase,
    predicted: &Pose,
    d_th: f64,
    cfg: DistanceConfig,
) -> Result<RetrievalResult, DbError> {
    retrieve_image_with_stats(db, predicted, d_th, cfg).map(|(r, _)| r)
}

pub fn retrieve_image_with_stats(
    db: &PoseDatabase,
    predicted: &Pose,
    d_th: f64,
    cfg: DistanceConfig,
) -> Result<(RetrievalResult, RetrievalStats), DbError> {
    check_threshold(d_th)?;
    let q_unit = normalize(&predicted.orientation())?;
    let mut stats = RetrievalStats::default();
    let mut best: Option<(usize, f64)> = None;
    let mut min_dist = f64::INFINITY;

    // Position filtering and the orientation argmin are fused into one scan;
    // orientation is only evaluated for in-range entries.
    for (i, entry) in db.entries().iter().enumerate() {
        stats.position_evals += 1;
        if position_distance(predicted, &entry.pose) > d_th {
            continue;
        }
        stats.orientation_evals += 1;
        let d = unit_orientation_distance(&q_unit, &entry.pose.orientation(), cfg);
        if d <= min_dist {
            min_dist = d;
            best = Some((i, d));
        }
    }

    let result = match best {
        None => RetrievalResult::NoCandidate,
        Some((entry_index, orientation_distance)) => RetrievalResult::Found {
            entry_index,
            image_id: db.entries()[entry_index].image_id.clone(),
            orientation_distance,
        },
    };
    Ok((result, stats))
}

/// Three-part similarity between a query and one training entry: zero when
/// the entry is out of position range, zero when it is not the
/// orientation-closest in-range entry, and otherwise the good-match count.
pub fn similarity(
    db: &PoseDatabase,
    query_descriptors: &DescriptorSet,
    predicted: &Pose,
    candidate: usize,
    d_th: f64,
    distance: DistanceConfig,
    matcher: &MatcherConfig,
) -> Result<usize, DbError> {
    check_threshold(d_th)?;
    let entry = db.get(candidate).ok_or(DbError::UnknownEntry(candidate))?;
    if position_distance(predicted, &entry.pose) > d_th {
        return Ok(0);
    }
    if retrieve_image(db, predicted, d_th, distance)?.entry_index() != Some(candidate) {
        return Ok(0);
    }
    let train = entry.load_descriptors()?;
    Ok(match_features(query_descriptors, &train, matcher)?.good_match_count)
}
