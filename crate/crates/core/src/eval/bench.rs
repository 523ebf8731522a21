use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Percentiles;
use crate::db::{retrieve_image, PoseDatabase, TrainEntry};
use crate::features::{match_features, DescriptorSet, Descriptors, MatcherConfig};
use crate::gate::random_unit_vector;
use crate::pose::{DistanceConfig, Pose};

/// Descriptor length of the matching benchmark.
pub const BENCH_DIM: usize = 128;
const BENCH_D_TH: f64 = 1.5;
/// Side of the cube the benchmark database is spread over, in meters.
const BENCH_EXTENT_M: f64 = 50.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0} must be at least 1")]
    InvalidSize(&'static str),
}

/// Wall-time percentiles in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub db_size: usize,
    pub n_descriptors: usize,
    pub descriptor_dim: usize,
    pub reps: usize,
    pub retrieval_us: Percentiles,
    pub matching_us: Percentiles,
    /// Retrieval followed by matching, timed as one step.
    pub combined_us: Percentiles,
}

/// Times retrieval over a random `db_size`-entry database and brute-force
/// matching of two random `n_descriptors x 128` real-valued sets.
pub fn bench(
    db_size: usize,
    n_descriptors: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchReport, BenchError> {
    if db_size == 0 {
        return Err(BenchError::InvalidSize("db_size"));
    }
    if n_descriptors == 0 {
        return Err(BenchError::InvalidSize("n_descriptors"));
    }
    if reps == 0 {
        return Err(BenchError::InvalidSize("reps"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = PoseDatabase::new("bench");
    for i in 0..db_size {
        db.push(TrainEntry::new(
            format!("train/{i:06}"),
            random_pose(&mut rng),
        ))
        .expect("unique ids and unit quaternions");
    }
    let queries: Vec<Pose> = (0..reps).map(|_| random_pose(&mut rng)).collect();
    let a = random_set(&mut rng, "query", n_descriptors);
    let b = random_set(&mut rng, "train", n_descriptors);
    let matcher = MatcherConfig::default();
    let cfg = DistanceConfig::default();

    // One untimed pass to fault in caches.
    black_box(retrieve_image(&db, &queries[0], BENCH_D_TH, cfg).expect("valid threshold"));
    black_box(match_features(&a, &b, &matcher).expect("compatible sets"));

    let mut retrieval = Vec::with_capacity(reps);
    let mut matching = Vec::with_capacity(reps);
    let mut combined = Vec::with_capacity(reps);
    for q in &queries {
        let t = Instant::now();
        black_box(retrieve_image(&db, black_box(q), BENCH_D_TH, cfg).expect("valid threshold"));
        retrieval.push(us(t));

        let t = Instant::now();
        black_box(match_features(black_box(&a), &b, &matcher).expect("compatible sets"));
        matching.push(us(t));

        let t = Instant::now();
        black_box(retrieve_image(&db, black_box(q), BENCH_D_TH, cfg).expect("valid threshold"));
        black_box(match_features(black_box(&a), &b, &matcher).expect("compatible sets"));
        combined.push(us(t));
    }

    let pct = |v: &[f64]| Percentiles::of(v).expect("reps >= 1");
    Ok(BenchReport {
        db_size,
        n_descriptors,
        descriptor_dim: BENCH_DIM,
        reps,
        retrieval_us: pct(&retrieval),
        matching_us: pct(&matching),
        combined_us: pct(&combined),
    })
}

fn us(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e6
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let position = std::array::from_fn(|_| rng.random_range(0.0..BENCH_EXTENT_M));
    let axis = random_unit_vector(rng);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    Pose::new(position, crate::pose::quat_from_axis_angle(axis, angle)).expect("finite pose")
}

fn random_set(rng: &mut ChaCha8Rng, id: &str, n: usize) -> DescriptorSet {
    let keypoints = (0..n)
        .map(|_| [rng.random_range(0.0..379.0), rng.random_range(0.0..379.0)])
        .collect();
    let values = (0..n * BENCH_DIM)
        .map(|_| rng.random_range(0.0f32..1.0))
        .collect();
    DescriptorSet::new(id, keypoints, BENCH_DIM, Descriptors::Real(values))
        .expect("valid random set")
}
