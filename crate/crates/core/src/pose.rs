//! Camera poses and the distance metrics used for retrieval and evaluation.
//!
//! Quaternions are always stored as `(w, x, y, z)`. The predicted side of an
//! orientation comparison is normalized at use, so a [`Pose`] may carry a raw,
//! non-unit quaternion straight out of a regressor. Database poses are
//! normalized when they are ingested.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("pose component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("orientation quaternion has zero norm")]
    ZeroNormOrientation,
}

/// Quaternion `(w, x, y, z)`.
pub type Quat = [f64; 4];

/// A 6-DoF camera pose: position in meters and orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct Pose {
    position: [f64; 3],
    orientation: Quat,
}

impl Pose {
    /// Builds a pose, rejecting non-finite components and zero-norm quaternions.
    pub fn new(position: [f64; 3], orientation: Quat) -> Result<Self, PoseError> {
        for (index, &value) in position.iter().chain(orientation.iter()).enumerate() {
            if !value.is_finite() {
                return Err(PoseError::NonFinite { index, value });
            }
        }
        if norm4(&orientation) == 0.0 {
            return Err(PoseError::ZeroNormOrientation);
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn position(&self) -> [f64; 3] {
        self.position
    }

    pub fn orientation(&self) -> Quat {
        self.orientation
    }

    /// Orientation scaled to unit norm.
    pub fn unit_orientation(&self) -> Quat {
        normalize(&self.orientation).expect("pose invariant: orientation norm > 0")
    }

    /// Same pose with the orientation replaced by its unit-norm version.
    pub fn normalized(&self) -> Self {
        Self {
            position: self.position,
            orientation: self.unit_orientation(),
        }
    }

    /// Flattened `[tx, ty, tz, qw, qx, qy, qz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let [tx, ty, tz] = self.position;
        let [qw, qx, qy, qz] = self.orientation;
        [tx, ty, tz, qw, qx, qy, qz]
    }

    pub fn from_array(values: [f64; 7]) -> Result<Self, PoseError> {
        let [tx, ty, tz, qw, qx, qy, qz] = values;
        Self::new([tx, ty, tz], [qw, qx, qy, qz])
    }

    /// Camera forward axis in world coordinates (the rotated `+z` axis).
    pub fn forward(&self) -> [f64; 3] {
        rotate_vector(&self.unit_orientation(), [0.0, 0.0, 1.0])
    }
}

impl TryFrom<[f64; 7]> for Pose {
    type Error = PoseError;

    fn try_from(values: [f64; 7]) -> Result<Self, Self::Error> {
        Self::from_array(values)
    }
}

impl From<Pose> for [f64; 7] {
    fn from(pose: Pose) -> Self {
        pose.to_array()
    }
}

/// Options for [`orientation_distance`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Compare against both `q'` and `-q'` and take the smaller distance.
    pub sign_invariant_orientation: bool,
}

/// Euclidean distance between the two positions, in meters.
pub fn position_distance(a: &Pose, b: &Pose) -> f64 {
    let d = sub3(&a.position, &b.position);
    dot3(&d, &d).sqrt()
}

/// `|| q̂/||q̂|| - q' ||₂` where `q̂` is the predicted orientation and `q'` the
/// reference (database) orientation, used as-is.
pub fn orientation_distance(
    predicted: &Pose,
    reference: &Pose,
    cfg: DistanceConfig,
) -> Result<f64, PoseError> {
    let q = normalize(&predicted.orientation)?;
    Ok(unit_orientation_distance(&q, &reference.orientation, cfg))
}

/// [`orientation_distance`] with the predicted quaternion already normalized.
#[inline]
pub(crate) fn unit_orientation_distance(
    q_unit: &Quat,
    reference: &Quat,
    cfg: DistanceConfig,
) -> f64 {
    let mut direct = 0.0;
    let mut flipped = 0.0;
    for i in 0..4 {
        let d = q_unit[i] - reference[i];
        let s = q_unit[i] + reference[i];
        direct += d * d;
        flipped += s * s;
    }
    if cfg.sign_invariant_orientation {
        direct.min(flipped).sqrt()
    } else {
        direct.sqrt()
    }
}

/// Geodesic angle between the two rotations, in degrees within `[0, 180]`.
///
/// Sign-invariant: `q` and `-q` describe the same rotation.
pub fn rotation_error_degrees(a: &Pose, b: &Pose) -> Result<f64, PoseError> {
    let qa = normalize(&a.orientation)?;
    let qb = normalize(&b.orientation)?;
    let cos_half = dot4(&qa, &qb).abs().min(1.0);
    Ok((2.0 * cos_half.acos()).to_degrees())
}

pub fn normalize(q: &Quat) -> Result<Quat, PoseError> {
    let n = norm4(q);
    if n == 0.0 || !n.is_finite() {
        return Err(PoseError::ZeroNormOrientation);
    }
    Ok([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

pub fn norm4(q: &Quat) -> f64 {
    dot4(q, q).sqrt()
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

pub fn quat_conj(q: &Quat) -> Quat {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Unit quaternion for a rotation of `angle_rad` about `axis` (need not be unit).
pub fn quat_from_axis_angle(axis: [f64; 3], angle_rad: f64) -> Quat {
    let n = dot3(&axis, &axis).sqrt();
    if n == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s, c) = (angle_rad / 2.0).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

/// Rotates `v` by the unit quaternion `q`.
pub fn rotate_vector(q: &Quat, v: [f64; 3]) -> [f64; 3] {
    let p = [0.0, v[0], v[1], v[2]];
    let r = quat_mul(&quat_mul(q, &p), &quat_conj(q));
    [r[1], r[2], r[3]]
}

#[inline]
pub(crate) fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn dot4(a: &Quat, b: &Quat) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}
