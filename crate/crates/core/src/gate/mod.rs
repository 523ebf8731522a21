//! Keyframe gating: predicted pose, pose-only retrieval, then a match-count
//! threshold against the retrieved training image.

mod predictor;

pub(crate) use predictor::random_unit_vector;
pub use predictor::{
    FilePredictor, OutlierModel, PosePredictor, PredictError, PredictorSpec, SyntheticPredictor,
};

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{retrieve_image, DbError, DescriptorRef, PoseDatabase, RetrievalResult};
use crate::features::{match_features, DescriptorSet, FeatureError, MatcherConfig};
use crate::pose::{DistanceConfig, Pose};

#[derive(Debug, Error)]
pub enum GateError {
    #[error("no descriptors available for image {0:?}")]
    MissingDescriptors(String),
    #[error("prediction failed for {image_id:?}: {source}")]
    PredictionFailure {
        image_id: String,
        #[source]
        source: PredictError,
    },
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Feature(FeatureError),
}

impl From<FeatureError> for GateError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::MissingDescriptors(id) => Self::MissingDescriptors(id),
            other => Self::Feature(other),
        }
    }
}

/// Gate hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Position threshold in meters for retrieval candidates.
    pub d_th: f64,
    /// Minimum good-match count for a keyframe.
    pub gamma: u32,
    pub matcher: MatcherConfig,
    pub distance: DistanceConfig,
}

impl GateConfig {
    pub fn new(d_th: f64, gamma: u32) -> Self {
        Self {
            d_th,
            gamma,
            matcher: MatcherConfig::default(),
            distance: DistanceConfig::default(),
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.matcher.ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.d_th > 0.0 && self.d_th.is_finite()) {
            return Err(GateError::InvalidConfig(format!(
                "d_th must be positive, got {}",
                self.d_th
            )));
        }
        if self.gamma < 1 {
            return Err(GateError::InvalidConfig("gamma must be at least 1".into()));
        }
        self.matcher
            .validate()
            .map_err(|e| GateError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Keyframe {
        retrieved_image_id: String,
        good_match_count: usize,
    },
    RejectedNoCandidate,
    RejectedInsufficientMatches {
        retrieved_image_id: String,
        good_match_count: usize,
    },
}

impl Verdict {
    pub fn is_keyframe(&self) -> bool {
        matches!(self, Self::Keyframe { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Keyframe { .. } => "keyframe",
            Self::RejectedNoCandidate => "rejected_no_candidate",
            Self::RejectedInsufficientMatches { .. } => "rejected_insufficient_matches",
        }
    }

    pub fn retrieved_image_id(&self) -> Option<&str> {
        match self {
            Self::Keyframe {
                retrieved_image_id, ..
            }
            | Self::RejectedInsufficientMatches {
                retrieved_image_id, ..
            } => Some(retrieved_image_id),
            Self::RejectedNoCandidate => None,
        }
    }

    pub fn match_count(&self) -> Option<usize> {
        match self {
            Self::Keyframe {
                good_match_count, ..
            }
            | Self::RejectedInsufficientMatches {
                good_match_count, ..
            } => Some(*good_match_count),
            Self::RejectedNoCandidate => None,
        }
    }
}

/// Wall time per stage in microseconds; `None` for stages that did not run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub predict: Option<u64>,
    pub retrieve: Option<u64>,
    pub extract: Option<u64>,
    #[serde(rename = "match")]
    pub matching: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision {
    pub image_id: String,
    pub verdict: Verdict,
    pub predicted_pose: Pose,
    pub timing: StageTimings,
}

/// One line of the JSON-lines decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub image_id: String,
    pub verdict: String,
    pub retrieved_id: Option<String>,
    pub match_count: Option<usize>,
    pub pred_pose: [f64; 7],
    pub timings_us: StageTimings,
}

impl GateDecision {
    pub fn record(&self) -> DecisionRecord {
        DecisionRecord {
            image_id: self.image_id.clone(),
            verdict: self.verdict.label().to_string(),
            retrieved_id: self.verdict.retrieved_image_id().map(str::to_string),
            match_count: self.verdict.match_count(),
            pred_pose: self.predicted_pose.to_array(),
            timings_us: self.timing,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.record()).expect("decision records always serialize")
    }
}

/// Where the query's descriptors come from.
#[derive(Debug, Clone, Copy)]
pub enum QueryFeatures<'a> {
    Ready(&'a DescriptorSet),
    /// Loaded only if retrieval succeeds.
    Deferred(&'a DescriptorRef),
}

/// Gates one query image.
///
/// Predicts its pose, retrieves the closest training image by pose, and, when
/// one exists, declares a keyframe iff the good-match count reaches
/// `cfg.gamma`.
pub fn gate<P: PosePredictor + ?Sized>(
    query_image_id: &str,
    query_descriptors: &DescriptorSet,
    predictor: &P,
    db: &PoseDatabase,
    cfg: &GateConfig,
) -> Result<GateDecision, GateError> {
    gate_with(
        query_image_id,
        QueryFeatures::Ready(query_descriptors),
        predictor,
        db,
        cfg,
    )
}

pub fn gate_with<P: PosePredictor + ?Sized>(
    query_image_id: &str,
    query: QueryFeatures<'_>,
    predictor: &P,
    db: &PoseDatabase,
    cfg: &GateConfig,
) -> Result<GateDecision, GateError> {
    cfg.validate()?;
    let mut timing = StageTimings::default();

    let t = Instant::now();
    let predicted_pose =
        predictor
            .predict(query_image_id)
            .map_err(|source| GateError::PredictionFailure {
                image_id: query_image_id.to_string(),
                source,
            })?;
    timing.predict = Some(micros(t));

    let t = Instant::now();
    let retrieved = retrieve_image(db, &predicted_pose, cfg.d_th, cfg.distance)?;
    timing.retrieve = Some(micros(t));

    let RetrievalResult::Found {
        entry_index,
        image_id: retrieved_image_id,
        ..
    } = retrieved
    else {
        return Ok(GateDecision {
            image_id: query_image_id.to_string(),
            verdict: Verdict::RejectedNoCandidate,
            predicted_pose,
            timing,
        });
    };

    let t = Instant::now();
    let train = db.entries()[entry_index].load_descriptors()?;
    let query_set: Arc<DescriptorSet>;
    let query_ref = match query {
        QueryFeatures::Ready(set) => set,
        QueryFeatures::Deferred(r) => {
            query_set = r.get(query_image_id)?;
            &query_set
        }
    };
    timing.extract = Some(micros(t));

    let t = Instant::now();
    let good_match_count = match_features(query_ref, &train, &cfg.matcher)?.good_match_count;
    timing.matching = Some(micros(t));

    let verdict = if good_match_count >= cfg.gamma as usize {
        Verdict::Keyframe {
            retrieved_image_id,
            good_match_count,
        }
    } else {
        Verdict::RejectedInsufficientMatches {
            retrieved_image_id,
            good_match_count,
        }
    };
    Ok(GateDecision {
        image_id: query_image_id.to_string(),
        verdict,
        predicted_pose,
        timing,
    })
}

/// A query for [`gate_batch`].
#[derive(Debug, Clone)]
pub struct GateQuery {
    pub image_id: String,
    pub descriptors: DescriptorRef,
}

impl GateQuery {
    pub fn new(image_id: impl Into<String>, descriptors: DescriptorSet) -> Self {
        Self {
            image_id: image_id.into(),
            descriptors: DescriptorRef::in_memory(descriptors),
        }
    }

    pub fn deferred(image_id: impl Into<String>, descriptors: DescriptorRef) -> Self {
        Self {
            image_id: image_id.into(),
            descriptors,
        }
    }
}

/// Gates every query in parallel. Output order matches input order and each
/// element equals what a sequential [`gate_with`] call would return.
pub fn gate_batch<P: PosePredictor + ?Sized>(
    queries: &[GateQuery],
    predictor: &P,
    db: &PoseDatabase,
    cfg: &GateConfig,
) -> Vec<Result<GateDecision, GateError>> {
    queries
        .par_iter()
        .map(|q| {
            gate_with(
                &q.image_id,
                QueryFeatures::Deferred(&q.descriptors),
                predictor,
                db,
                cfg,
            )
        })
        .collect()
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}
