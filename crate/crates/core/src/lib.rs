//! Pose-gated keyframe selection for absolute pose regressors.
//!
//! A query image is accepted as a keyframe when the training image closest
//! to its predicted pose shares enough local feature matches with it.

pub mod db;
pub mod eval;
pub mod features;
pub mod gate;
pub mod pose;
pub mod synth;
pub mod tune;

pub use db::{DbError, PoseDatabase, RetrievalResult, TrainEntry};
pub use eval::{compare_runs, evaluate, AccuracyTiers, EvalError, EvalReport};
pub use features::{match_features, DescriptorKind, DescriptorSet, FeatureError, MatcherConfig};
pub use gate::{gate, gate_batch, GateConfig, GateDecision, GateError, PosePredictor, Verdict};
pub use pose::{DistanceConfig, Pose, PoseError};
pub use synth::{generate_scene, generate_split, SyntheticScene};
pub use tune::{sample_far_pair, tune_gamma, TuneReport};
