//! Deterministic synthetic worlds with closed-form match ground truth.
//!
//! Every landmark carries its own binary descriptor, pairwise far apart in
//! Hamming distance. A frame "sees" a landmark when it lies inside the
//! camera's view cone and range, and its descriptor set holds exactly the
//! visible landmarks' descriptors. Good-match counts between two frames are
//! therefore the sizes of visible-set intersections.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{write_pose_file, DbError, PoseDatabase, TrainEntry};
use crate::features::{
    write_descriptor_cache, DescriptorSet, Descriptors, FeatureError, CROP_SIZE,
};
use crate::gate::random_unit_vector;
use crate::pose::{
    dot3, quat_conj, quat_from_axis_angle, quat_mul, rotate_vector, sub3, Pose, Quat,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not place landmark {index}: no descriptor at Hamming distance >= {min_distance} from all others after {attempts} attempts")]
    DescriptorCollision {
        index: usize,
        min_distance: u32,
        attempts: usize,
    },
    #[error("invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Nearest point of the box to `p`.
    pub fn clamp(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| p[i].clamp(self.min[i], self.max[i]))
    }

    /// Smallest box containing every point, or `None` for no points.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a [f64; 3]>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(Self::new(first, first), |b, p| Self {
            min: std::array::from_fn(|i| b.min[i].min(p[i])),
            max: std::array::from_fn(|i| b.max[i].max(p[i])),
        }))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        std::array::from_fn(|i| {
            if self.max[i] > self.min[i] {
                rng.random_range(self.min[i]..=self.max[i])
            } else {
                self.min[i]
            }
        })
    }

    fn is_valid(&self) -> bool {
        (0..3).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub position: [f64; 3],
    pub descriptor: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub seed: u64,
    pub n_landmarks: usize,
    pub bounding_box: Aabb,
    pub fov_half_angle_deg: f64,
    pub max_view_distance: f64,
    /// Descriptor length in bits; a multiple of 8.
    pub descriptor_bits: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            seed: 42,
            n_landmarks: 2000,
            bounding_box: Aabb::new([0.0, 0.0, 0.0], [20.0, 10.0, 3.0]),
            fov_half_angle_deg: 35.0,
            max_view_distance: 6.0,
            descriptor_bits: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub landmarks: Vec<Landmark>,
    pub bounding_box: Aabb,
    pub fov_half_angle_deg: f64,
    pub max_view_distance: f64,
    pub descriptor_bits: usize,
}

/// Minimum pairwise Hamming distance between landmark descriptors:
/// `ceil(0.4 * bits)`.
pub fn min_descriptor_distance(bits: usize) -> u32 {
    (4 * bits).div_ceil(10) as u32
}

pub fn hamming_bits(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

const MAX_DESCRIPTOR_ATTEMPTS: usize = 10_000;

/// Builds a scene with uniformly placed landmarks and rejection-sampled
/// descriptors. Fails with [`SynthError::DescriptorCollision`] when the
/// descriptor length cannot accommodate the requested separation.
pub fn generate_scene(params: &SceneParams) -> Result<SyntheticScene, SynthError> {
    if params.n_landmarks == 0 {
        return Err(SynthError::InvalidParams(
            "n_landmarks must be at least 1".into(),
        ));
    }
    if params.descriptor_bits == 0 || !params.descriptor_bits.is_multiple_of(8) {
        return Err(SynthError::InvalidParams(format!(
            "descriptor_bits must be a positive multiple of 8, got {}",
            params.descriptor_bits
        )));
    }
    if !params.bounding_box.is_valid() {
        return Err(SynthError::InvalidParams(
            "bounding box min must not exceed max".into(),
        ));
    }
    let fov_ok = params.fov_half_angle_deg > 0.0 && params.fov_half_angle_deg <= 180.0;
    let range_ok = params.max_view_distance > 0.0;
    if !fov_ok || !range_ok {
        return Err(SynthError::InvalidParams(
            "fov must lie in (0, 180] and max distance be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bytes = params.descriptor_bits / 8;
    let min_distance = min_descriptor_distance(params.descriptor_bits);
    let mut landmarks: Vec<Landmark> = Vec::with_capacity(params.n_landmarks);
    for index in 0..params.n_landmarks {
        let position = params.bounding_box.sample(&mut rng);
        let mut attempts = 0;
        let descriptor = loop {
            if attempts == MAX_DESCRIPTOR_ATTEMPTS {
                return Err(SynthError::DescriptorCollision {
                    index,
                    min_distance,
                    attempts,
                });
            }
            attempts += 1;
            let candidate: Vec<u8> = (0..bytes).map(|_| rng.random()).collect();
            if landmarks
                .iter()
                .all(|l| hamming_bits(&l.descriptor, &candidate) >= min_distance)
            {
                break candidate;
            }
        };
        landmarks.push(Landmark {
            position,
            descriptor,
        });
    }

    Ok(SyntheticScene {
        seed: params.seed,
        landmarks,
        bounding_box: params.bounding_box,
        fov_half_angle_deg: params.fov_half_angle_deg,
        max_view_distance: params.max_view_distance,
        descriptor_bits: params.descriptor_bits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub image_id: String,
    pub true_pose: Pose,
    /// Sorted landmark indices.
    pub visible_landmark_ids: Vec<usize>,
    pub descriptor_set: DescriptorSet,
}

impl SyntheticScene {
    /// Whether landmark `index` is visible from `pose`: within range and within
    /// the half-angle of the camera's forward (`+z`) axis.
    pub fn is_visible(&self, pose: &Pose, index: usize) -> bool {
        let v = sub3(&self.landmarks[index].position, &pose.position());
        let dist = dot3(&v, &v).sqrt();
        if dist == 0.0 || dist > self.max_view_distance {
            return false;
        }
        let cos = (dot3(&pose.forward(), &v) / dist).clamp(-1.0, 1.0);
        cos.acos() <= self.fov_half_angle_deg.to_radians()
    }

    /// Renders the frame seen from `pose`.
    pub fn render_frame(&self, image_id: impl Into<String>, pose: &Pose) -> SyntheticFrame {
        let image_id = image_id.into();
        let q = pose.unit_orientation();
        let q_inv = quat_conj(&q);
        let fov = self.fov_half_angle_deg.to_radians();
        let centre = CROP_SIZE as f64 / 2.0;
        let radius = centre - 1.0;

        let mut visible = Vec::new();
        let mut keypoints = Vec::new();
        let mut bytes = Vec::new();
        for (i, lm) in self.landmarks.iter().enumerate() {
            if !self.is_visible(pose, i) {
                continue;
            }
            // Equidistant projection of the viewing direction onto the image.
            let v = rotate_vector(&q_inv, sub3(&lm.position, &pose.position()));
            let n = dot3(&v, &v).sqrt();
            let theta = (v[2] / n).clamp(-1.0, 1.0).acos();
            let phi = v[1].atan2(v[0]);
            let r = radius * theta / fov;
            keypoints.push([
                (centre + r * phi.cos()) as f32,
                (centre + r * phi.sin()) as f32,
            ]);
            bytes.extend_from_slice(&lm.descriptor);
            visible.push(i);
        }
        let dim = self.descriptor_bits / 8;
        let descriptor_set =
            DescriptorSet::new(image_id.clone(), keypoints, dim, Descriptors::Binary(bytes))
                .expect("projected keypoints stay inside the image");
        SyntheticFrame {
            image_id,
            true_pose: *pose,
            visible_landmark_ids: visible,
            descriptor_set,
        }
    }
}

/// Camera looking horizontally along `yaw` (radians from world `+x`, about
/// world `+z`), tilted by `pitch` radians. The scalar part is kept non-negative.
pub fn horizontal_camera(position: [f64; 3], yaw: f64, pitch: f64) -> Pose {
    // Camera +z onto world +x.
    let base = quat_from_axis_angle([0.0, 1.0, 0.0], std::f64::consts::FRAC_PI_2);
    let tilt = quat_from_axis_angle([0.0, 1.0, 0.0], -pitch);
    let heading = quat_from_axis_angle([0.0, 0.0, 1.0], yaw);
    let mut q: Quat = quat_mul(&heading, &quat_mul(&tilt, &base));
    // Keep w >= 0 so nearby headings get nearby quaternions.
    if q[0] < 0.0 {
        q = q.map(|c| -c);
    }
    Pose::new(position, q).expect("finite unit quaternion")
}

/// Training/test split over a scene.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    /// Training database with in-memory descriptors.
    pub db: PoseDatabase,
    pub train_frames: Vec<SyntheticFrame>,
    pub test_frames: Vec<SyntheticFrame>,
    /// `true` for test frames placed outside the training region.
    pub test_outside: Vec<bool>,
    pub training_region: Aabb,
    pub outside_region: Aabb,
}

impl SyntheticSplit {
    pub fn test_ground_truth(&self) -> HashMap<String, Pose> {
        self.test_frames
            .iter()
            .map(|f| (f.image_id.clone(), f.true_pose))
            .collect()
    }

    /// Writes `train.txt`, `test.txt`, `test_outside.txt`, `anchors.txt` and
    /// `descriptors/*.pgdc` into `dir`.
    pub fn write_to_dir(&self, dir: &Path, n_anchors: usize) -> Result<(), SynthError> {
        let desc_dir = dir.join("descriptors");
        std::fs::create_dir_all(&desc_dir).map_err(|source| DbError::Io {
            path: desc_dir.clone(),
            source,
        })?;
        write_pose_file(
            &dir.join("train.txt"),
            self.train_frames
                .iter()
                .map(|f| (f.image_id.as_str(), f.true_pose.to_array())),
        )?;
        write_pose_file(
            &dir.join("test.txt"),
            self.test_frames
                .iter()
                .map(|f| (f.image_id.as_str(), f.true_pose.to_array())),
        )?;
        for f in self.train_frames.iter().chain(&self.test_frames) {
            write_descriptor_cache(&desc_dir, &f.descriptor_set)?;
        }
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| DbError::Io { path, source })
        };
        write(
            "anchors.txt",
            self.train_frames
                .iter()
                .take(n_anchors)
                .map(|f| format!("{}\n", f.image_id))
                .collect(),
        )?;
        write(
            "test_outside.txt",
            self.test_frames
                .iter()
                .zip(&self.test_outside)
                .map(|(f, o)| format!("{} {}\n", f.image_id, u8::from(*o)))
                .collect(),
        )?;
        Ok(())
    }
}

/// Splits the scene box along `x`: training cameras live in the first 40% of
/// the extent, "outside" test cameras in the last 40%, with a gap between.
/// Exactly `round(coverage_bias * n_test)` test cameras are placed outside,
/// at shuffled positions in the sequence. Cameras sit in the middle fifth of
/// the height range, look horizontally with a uniform heading, and pitch up
/// to ±10°.
pub fn generate_split(
    scene: &SyntheticScene,
    seed: u64,
    n_train: usize,
    n_test: usize,
    coverage_bias: f64,
) -> Result<SyntheticSplit, SynthError> {
    if n_train == 0 || n_test == 0 {
        return Err(SynthError::InvalidParams(
            "n_train and n_test must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&coverage_bias) {
        return Err(SynthError::InvalidParams(format!(
            "coverage_bias must lie in [0, 1], got {coverage_bias}"
        )));
    }
    let b = scene.bounding_box;
    let width = b.max[0] - b.min[0];
    let (y_lo, y_hi) = lerp_range(b.min[1], b.max[1], 0.1, 0.9);
    let (z_lo, z_hi) = lerp_range(b.min[2], b.max[2], 0.4, 0.6);
    let training_region = Aabb::new([b.min[0], y_lo, z_lo], [b.min[0] + 0.4 * width, y_hi, z_hi]);
    let outside_region = Aabb::new([b.min[0] + 0.6 * width, y_lo, z_lo], [b.max[0], y_hi, z_hi]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera_in = |region: &Aabb, rng: &mut ChaCha8Rng| {
        let p = region.sample(rng);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let pitch = rng.random_range(-10.0f64..10.0).to_radians();
        horizontal_camera(p, yaw, pitch)
    };

    let mut db = PoseDatabase::new(format!("synthetic-{}", scene.seed));
    let mut train_frames = Vec::with_capacity(n_train);
    for i in 0..n_train {
        let pose = camera_in(&training_region, &mut rng);
        let frame = scene.render_frame(format!("train/frame_{i:05}"), &pose);
        db.push(
            TrainEntry::new(frame.image_id.clone(), frame.true_pose)
                .with_descriptors(frame.descriptor_set.clone()),
        )?;
        train_frames.push(frame);
    }

    let n_outside = (coverage_bias * n_test as f64).round() as usize;
    let mut test_outside: Vec<bool> = (0..n_test).map(|i| i < n_outside).collect();
    test_outside.shuffle(&mut rng);
    let test_frames = test_outside
        .iter()
        .enumerate()
        .map(|(i, &outside)| {
            let region = if outside {
                &outside_region
            } else {
                &training_region
            };
            let pose = camera_in(region, &mut rng);
            scene.render_frame(format!("test/frame_{i:05}"), &pose)
        })
        .collect();

    Ok(SyntheticSplit {
        db,
        train_frames,
        test_frames,
        test_outside,
        training_region,
        outside_region,
    })
}

fn lerp_range(lo: f64, hi: f64, a: f64, b: f64) -> (f64, f64) {
    (lo + a * (hi - lo), lo + b * (hi - lo))
}

/// A small random perturbation used by tests and demos: returns `pose`
/// moved by up to `max_shift_m` and rotated by up to `max_rot_deg`.
pub fn jitter_pose<R: Rng + ?Sized>(
    rng: &mut R,
    pose: &Pose,
    max_shift_m: f64,
    max_rot_deg: f64,
) -> Pose {
    let dir = random_unit_vector(rng);
    let shift = rng.random_range(0.0..=max_shift_m);
    let p = pose.position();
    let axis = random_unit_vector(rng);
    let angle = rng.random_range(-max_rot_deg..=max_rot_deg).to_radians();
    let q = quat_mul(&pose.unit_orientation(), &quat_from_axis_angle(axis, angle));
    Pose::new(std::array::from_fn(|i| p[i] + shift * dir[i]), q).expect("finite pose")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{match_features, MatcherConfig};

    fn small_params(seed: u64) -> SceneParams {
        SceneParams {
            seed,
            n_landmarks: 300,
            ..SceneParams::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scene(&small_params(3)).unwrap();
        let b = generate_scene(&small_params(3)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&small_params(4)).unwrap();
        assert_ne!(a.landmarks[0], c.landmarks[0]);
    }

    #[test]
    fn single_landmark() {
        let s = generate_scene(&SceneParams {
            n_landmarks: 1,
            ..SceneParams::default()
        })
        .unwrap();
        assert_eq!(s.landmarks.len(), 1);
    }

    #[test]
    fn pairwise_separation_seed_42() {
        let s = generate_scene(&SceneParams {
            seed: 42,
            n_landmarks: 500,
            descriptor_bits: 256,
            ..SceneParams::default()
        })
        .unwrap();
        assert_eq!(min_descriptor_distance(256), 103);
        for i in 0..s.landmarks.len() {
            for j in i + 1..s.landmarks.len() {
                assert!(
                    hamming_bits(&s.landmarks[i].descriptor, &s.landmarks[j].descriptor) >= 103
                );
            }
        }
    }

    #[test]
    fn collision_when_descriptors_too_short() {
        let err = generate_scene(&SceneParams {
            n_landmarks: 200,
            descriptor_bits: 8,
            ..SceneParams::default()
        })
        .unwrap_err();
        assert!(matches!(
            err,
            SynthError::DescriptorCollision {
                min_distance: 4,
                ..
            }
        ));
    }

    #[test]
    fn invalid_params() {
        for p in [
            SceneParams {
                n_landmarks: 0,
                ..SceneParams::default()
            },
            SceneParams {
                descriptor_bits: 12,
                ..SceneParams::default()
            },
            SceneParams {
                fov_half_angle_deg: 0.0,
                ..SceneParams::default()
            },
            SceneParams {
                bounding_box: Aabb::new([1.0; 3], [0.0; 3]),
                ..SceneParams::default()
            },
        ] {
            assert!(matches!(
                generate_scene(&p),
                Err(SynthError::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn facing_away_sees_nothing() {
        let mut s = generate_scene(&small_params(1)).unwrap();
        for lm in &mut s.landmarks {
            lm.position[0] = 15.0;
        }
        // At x = 10 looking towards -x.
        let pose = horizontal_camera([10.0, 5.0, 1.5], std::f64::consts::PI, 0.0);
        assert!(s.render_frame("f", &pose).visible_landmark_ids.is_empty());
        let towards = horizontal_camera([10.0, 5.0, 1.5], 0.0, 0.0);
        assert!(!s
            .render_frame("g", &towards)
            .visible_landmark_ids
            .is_empty());
    }

    #[test]
    fn identical_poses_match_fully() {
        let s = generate_scene(&small_params(2)).unwrap();
        let pose = horizontal_camera([5.0, 5.0, 1.5], 0.3, 0.0);
        let a = s.render_frame("a", &pose);
        let b = s.render_frame("b", &pose);
        assert_eq!(a.visible_landmark_ids, b.visible_landmark_ids);
        assert!(a.visible_landmark_ids.len() >= 2);
        let r = match_features(
            &a.descriptor_set,
            &b.descriptor_set,
            &MatcherConfig::default(),
        )
        .unwrap();
        assert_eq!(r.good_match_count, a.visible_landmark_ids.len());
    }

    #[test]
    fn visibility_cone_and_range() {
        let s = SyntheticScene {
            seed: 0,
            landmarks: vec![
                Landmark {
                    position: [3.0, 0.0, 0.0],
                    descriptor: vec![0; 32],
                },
                Landmark {
                    position: [3.0, 2.0, 0.0],
                    descriptor: vec![0; 32],
                }, // 33.7 deg off-axis
                Landmark {
                    position: [3.0, 2.2, 0.0],
                    descriptor: vec![0; 32],
                }, // 36.3 deg
                Landmark {
                    position: [7.0, 0.0, 0.0],
                    descriptor: vec![0; 32],
                }, // beyond range
                Landmark {
                    position: [-3.0, 0.0, 0.0],
                    descriptor: vec![0; 32],
                }, // behind
            ],
            bounding_box: Aabb::new([-10.0; 3], [10.0; 3]),
            fov_half_angle_deg: 35.0,
            max_view_distance: 6.0,
            descriptor_bits: 256,
        };
        let pose = horizontal_camera([0.0; 3], 0.0, 0.0);
        let f = s.render_frame("f", &pose);
        assert_eq!(f.visible_landmark_ids, vec![0, 1]);
        // The on-axis landmark projects to the image centre.
        assert_eq!(f.descriptor_set.keypoints()[0], [190.0, 190.0]);
    }

    #[test]
    fn split_respects_bias_extremes() {
        let s = generate_scene(&small_params(5)).unwrap();
        let all_in = generate_split(&s, 1, 20, 50, 0.0).unwrap();
        assert!(all_in.test_outside.iter().all(|o| !o));
        assert!(all_in
            .test_frames
            .iter()
            .all(|f| all_in.training_region.contains(&f.true_pose.position())));
        let all_out = generate_split(&s, 1, 20, 50, 1.0).unwrap();
        assert!(all_out.test_outside.iter().all(|o| *o));
        assert!(all_out
            .test_frames
            .iter()
            .all(|f| all_out.outside_region.contains(&f.true_pose.position())));
        assert!(all_out
            .train_frames
            .iter()
            .all(|f| all_out.training_region.contains(&f.true_pose.position())));
        assert_eq!(all_out.db.len(), 20);
        assert!(generate_split(&s, 1, 0, 5, 0.5).is_err());
        assert!(generate_split(&s, 1, 5, 5, 1.5).is_err());
    }

    #[test]
    fn aabb_helpers() {
        let b = Aabb::enclosing(&[[0.0, 1.0, 2.0], [-1.0, 3.0, 0.0]]).unwrap();
        assert_eq!(b, Aabb::new([-1.0, 1.0, 0.0], [0.0, 3.0, 2.0]));
        assert_eq!(b.clamp(&[5.0, 0.0, 1.0]), [0.0, 1.0, 1.0]);
        assert!(Aabb::enclosing(std::iter::empty()).is_none());
    }
}
