//! Rigid transforms and frame construction shared by the kinematics and the
//! trajectory planner.

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Below this cross-product norm a tangent/normal pair cannot span a frame.
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate frame: tangent and normal are (nearly) parallel, |t x n| = {cross_norm:e}")]
    DegenerateFrame { cross_norm: f64 },
    #[error("zero-length vector cannot define a direction")]
    ZeroVector,
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
}

/// Rigid transform: rotation followed by translation.
///
/// Composition renormalizes the quaternion so that long chains of
/// compositions keep a unit orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    /// (w, x, y, z)
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        if q.norm() < 1e-12 {
            return Err(GeometryError::ZeroQuaternion);
        }
        Ok(Pose::new(Vec3::from(r.position), UnitQuaternion::from_quaternion(q)))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.orientation.quaternion();
        PoseRepr {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn from_rotation_matrix(position: Vec3, rotation: &Matrix3<f64>) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(position, UnitQuaternion::from_rotation_matrix(&rot))
    }

    /// `self ∘ other`: maps points of `other`'s child frame into `self`'s parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut orientation = self.orientation * other.orientation;
        orientation.renormalize();
        Pose::new(self.position + self.orientation * other.position, orientation)
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Translational distance and rotation angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let dp = (self.position - other.position).norm();
        let dr = self.orientation.angle_to(&other.orientation);
        (dp, dr)
    }

    /// Components as `[x, y, z, qw, qx, qy, qz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    /// Linear position and spherical orientation interpolation, `alpha` in [0, 1].
    pub fn interpolate(&self, other: &Pose, alpha: f64) -> Pose {
        let alpha = alpha.clamp(0.0, 1.0);
        let position = self.position.lerp(&other.position, alpha);
        let orientation = self
            .orientation
            .try_slerp(&other.orientation, alpha, 1e-12)
            .unwrap_or(if alpha < 0.5 {
                self.orientation
            } else {
                other.orientation
            });
        Pose::new(position, orientation)
    }
}

pub fn unit(v: &Vec3) -> Result<Unit<Vec3>, GeometryError> {
    Unit::try_new(*v, 1e-15).ok_or(GeometryError::ZeroVector)
}

/// Right-handed orthonormal frame whose x axis is `tangent` and whose z axis is
/// `normal` with its tangential component removed.
///
/// Columns of the returned matrix are (x, y, z) with y = z × x.
pub fn frame_from_tangent_normal(tangent: &Vec3, normal: &Vec3) -> Result<Matrix3<f64>, GeometryError> {
    let x = unit(tangent)?.into_inner();
    let n = unit(normal)?.into_inner();
    let cross_norm = x.cross(&n).norm();
    if cross_norm < DEGENERATE_EPS {
        return Err(GeometryError::DegenerateFrame { cross_norm });
    }
    let z = (n - x * n.dot(&x)).normalize();
    let y = z.cross(&x);
    Ok(Matrix3::from_columns(&[x, y, z]))
}

/// The nip point as seen by the planner: where the stationary roller presses
/// the tape onto the mold.
///
/// `compaction_axis` points from the taper toward the mold (the direction the
/// force device pushes). `feed_direction` is the direction the nip advances
/// along a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NipFrame {
    pub position: Vec3,
    pub compaction_axis: Vec3,
    pub feed_direction: Vec3,
}

impl NipFrame {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("compaction_axis", &self.compaction_axis),
            ("feed_direction", &self.feed_direction),
        ] {
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("{name} must be unit length (norm {})", v.norm()));
            }
        }
        let dot = self.compaction_axis.dot(&self.feed_direction);
        if dot.abs() > 1e-9 {
            return Err(format!(
                "compaction_axis and feed_direction must be orthogonal (dot {dot:e})"
            ));
        }
        Ok(())
    }

    /// World frame the surface-local (tangent, normal) frame is mapped onto:
    /// tangent to the feed direction, outward normal against the compaction axis.
    pub fn target_frame(&self) -> Result<Matrix3<f64>, GeometryError> {
        frame_from_tangent_normal(&self.feed_direction, &(-self.compaction_axis))
    }
}
