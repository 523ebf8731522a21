use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::db::{read_pose_file, DbError, PoseRecord};
use crate::pose::{quat_from_axis_angle, quat_mul, Pose, Quat};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no prediction for image {0:?}")]
    UnknownImage(String),
    #[error("{0}")]
    Other(String),
}

/// Anything that maps a query image to an estimated pose.
pub trait PosePredictor: Send + Sync {
    fn predict(&self, image_id: &str) -> Result<Pose, PredictError>;
}

impl<F> PosePredictor for F
where
    F: Fn(&str) -> Result<Pose, PredictError> + Send + Sync,
{
    fn predict(&self, image_id: &str) -> Result<Pose, PredictError> {
        self(image_id)
    }
}

/// Predictions read from a pose-format file, one per image.
///
/// Quaternions are kept raw: regressors emit non-unit outputs and the
/// orientation metric normalizes the predicted side itself.
#[derive(Debug, Clone, Default)]
pub struct FilePredictor {
    poses: HashMap<String, Pose>,
}

impl FilePredictor {
    pub fn from_records(records: &[PoseRecord]) -> Result<Self, DbError> {
        let mut poses = HashMap::with_capacity(records.len());
        for rec in records {
            let pose = Pose::from_array(rec.values).map_err(|e| DbError::Parse {
                line: rec.line,
                reason: e.to_string(),
            })?;
            if poses.insert(rec.image_id.clone(), pose).is_some() {
                return Err(DbError::DuplicateImageId(rec.image_id.clone()));
            }
        }
        Ok(Self { poses })
    }

    pub fn from_file(path: &Path) -> Result<Self, DbError> {
        Self::from_records(&read_pose_file(path)?)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

impl FromIterator<(String, Pose)> for FilePredictor {
    fn from_iter<I: IntoIterator<Item = (String, Pose)>>(iter: I) -> Self {
        Self {
            poses: iter.into_iter().collect(),
        }
    }
}

impl PosePredictor for FilePredictor {
    fn predict(&self, image_id: &str) -> Result<Pose, PredictError> {
        self.poses
            .get(image_id)
            .copied()
            .ok_or_else(|| PredictError::UnknownImage(image_id.to_string()))
    }
}

/// How an outlier prediction is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierModel {
    /// Uniform position in the box, uniformly random orientation.
    UniformBox { min: [f64; 3], max: [f64; 3] },
    /// Ground truth displaced by exactly `distance_m` in a random direction,
    /// with a uniformly random orientation.
    Displaced { distance_m: f64 },
}

/// Ground truth plus noise: Gaussian position noise, a random-axis rotation
/// whose angle is Gaussian in degrees, and with probability `p_out` an outlier
/// drawn from [`OutlierModel`].
///
/// With a support box set, inlier predictions start from the ground-truth
/// position clamped into the box, mimicking a regressor that cannot
/// extrapolate beyond its training coverage.
///
/// Each call seeds its own generator from the image id and the run seed, so
/// results do not depend on call order or threading.
#[derive(Debug, Clone)]
pub struct SyntheticPredictor {
    ground_truth: HashMap<String, Pose>,
    pub sigma_pos_m: f64,
    pub sigma_rot_deg: f64,
    pub p_out: f64,
    pub seed: u64,
    pub outlier: OutlierModel,
    pub support: Option<([f64; 3], [f64; 3])>,
}

impl SyntheticPredictor {
    pub fn new(
        ground_truth: HashMap<String, Pose>,
        sigma_pos_m: f64,
        sigma_rot_deg: f64,
        p_out: f64,
        seed: u64,
        outlier: OutlierModel,
    ) -> Self {
        Self {
            ground_truth,
            sigma_pos_m,
            sigma_rot_deg,
            p_out,
            seed,
            outlier,
            support: None,
        }
    }

    pub fn with_support_box(mut self, min: [f64; 3], max: [f64; 3]) -> Self {
        self.support = Some((min, max));
        self
    }

    /// Whether the prediction for `image_id` is an outlier draw.
    pub fn is_outlier(&self, image_id: &str) -> bool {
        self.rng_for(image_id).random::<f64>() < self.p_out
    }

    fn rng_for(&self, image_id: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            fnv1a(image_id.as_bytes()) ^ self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )
    }
}

impl PosePredictor for SyntheticPredictor {
    fn predict(&self, image_id: &str) -> Result<Pose, PredictError> {
        let gt = self
            .ground_truth
            .get(image_id)
            .ok_or_else(|| PredictError::UnknownImage(image_id.to_string()))?;
        let mut rng = self.rng_for(image_id);
        let outlier = rng.random::<f64>() < self.p_out;
        let to_err = |e: crate::pose::PoseError| PredictError::Other(e.to_string());

        if outlier {
            let orientation = random_quaternion(&mut rng);
            let position = match self.outlier {
                OutlierModel::UniformBox { min, max } => std::array::from_fn(|i| {
                    if max[i] > min[i] {
                        rng.random_range(min[i]..max[i])
                    } else {
                        min[i]
                    }
                }),
                OutlierModel::Displaced { distance_m } => {
                    let dir = random_unit_vector(&mut rng);
                    let p = gt.position();
                    std::array::from_fn(|i| p[i] + distance_m * dir[i])
                }
            };
            return Pose::new(position, orientation).map_err(to_err);
        }

        let mut p = gt.position();
        if let Some((min, max)) = self.support {
            p = std::array::from_fn(|i| p[i].clamp(min[i], max[i]));
        }
        let position = if self.sigma_pos_m > 0.0 {
            let n = Normal::new(0.0, self.sigma_pos_m)
                .map_err(|e| PredictError::Other(e.to_string()))?;
            std::array::from_fn(|i| p[i] + n.sample(&mut rng))
        } else {
            p
        };
        let angle_deg: f64 = if self.sigma_rot_deg > 0.0 {
            self.sigma_rot_deg * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let axis = random_unit_vector(&mut rng);
        let delta = quat_from_axis_angle(axis, angle_deg.to_radians());
        Pose::new(position, quat_mul(&gt.unit_orientation(), &delta)).map_err(to_err)
    }
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub(crate) fn random_quaternion<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    [b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()]
}

/// 64-bit FNV-1a, used as a platform-stable string hash for seeding.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Predictor selection as written on the command line: either a pose file
/// path or `synthetic:<sigma_pos>,<sigma_rot_deg>,<p_out>,<seed>`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    File(PathBuf),
    Synthetic {
        sigma_pos_m: f64,
        sigma_rot_deg: f64,
        p_out: f64,
        seed: u64,
    },
}

impl FromStr for PredictorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some(params) = s.strip_prefix("synthetic:") else {
            return Ok(Self::File(PathBuf::from(s)));
        };
        let parts: Vec<&str> = params.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!(
                "expected synthetic:<sigma_pos>,<sigma_rot>,<p_out>,<seed>, got {s:?}"
            ));
        }
        let num = |i: usize, name: &str| -> Result<f64, String> {
            let v: f64 = parts[i]
                .parse()
                .map_err(|_| format!("invalid {name} {:?}", parts[i]))?;
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
            Ok(v)
        };
        let p_out = num(2, "p_out")?;
        if p_out > 1.0 {
            return Err(format!("p_out must lie in [0, 1], got {p_out}"));
        }
        Ok(Self::Synthetic {
            sigma_pos_m: num(0, "sigma_pos")?,
            sigma_rot_deg: num(1, "sigma_rot")?,
            p_out,
            seed: parts[3]
                .parse()
                .map_err(|_| format!("invalid seed {:?}", parts[3]))?,
        })
    }
}
