//! Forward and inverse kinematics of the 6R arm carrying the mold.
//!
//! Joints follow standard Denavit-Hartenberg: link `i` is
//! `Rz(q_i + offset) · Tz(d) · Tx(a) · Rx(alpha)`. The inverse solver is a
//! damped-least-squares iteration on the geometric Jacobian, so any DH table
//! loaded from the configuration works.

use std::f64::consts::{PI, TAU};
use std::ops::{Index, IndexMut};

use nalgebra::{Isometry3, Matrix6, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

pub const NUM_JOINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_JOINTS])
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.0)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(v.as_slice());
        Self(q)
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }
}

impl Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    fn transform(&self, q: f64) -> Isometry3<f64> {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + self.theta_offset);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, self.d), rz)
            * Isometry3::from_parts(Translation3::new(self.a, 0.0, 0.0), rx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    pub dh: [DhRow; NUM_JOINTS],
    pub limits: [JointLimit; NUM_JOINTS],
    /// Robot base in the world frame.
    #[serde(default)]
    pub base: Pose,
    /// Mold frame relative to the flange.
    #[serde(default)]
    pub flange_to_mold: Pose,
    /// Seed for the first inverse-kinematics solve of a trajectory.
    #[serde(default)]
    pub home: JointVector,
}

fn deg(v: f64) -> f64 {
    v * PI / 180.0
}

impl Default for KinematicParams {
    /// Nominal 6R table of a 1.45 m-reach industrial arm. Internally
    /// consistent, not vendor data.
    fn default() -> Self {
        let row = |a, alpha, d, theta_offset| DhRow {
            a,
            alpha,
            d,
            theta_offset,
        };
        Self {
            dh: [
                row(0.150, -PI / 2.0, 0.4865, 0.0),
                row(0.700, 0.0, 0.0, -PI / 2.0),
                row(0.0, -PI / 2.0, 0.0, 0.0),
                row(0.0, PI / 2.0, 0.600, 0.0),
                row(0.0, -PI / 2.0, 0.0, 0.0),
                row(0.0, 0.0, 0.065, PI),
            ],
            limits: [
                JointLimit::new(deg(-180.0), deg(180.0)),
                JointLimit::new(deg(-63.0), deg(136.0)),
                JointLimit::new(deg(-235.0), deg(55.0)),
                JointLimit::new(deg(-200.0), deg(200.0)),
                JointLimit::new(deg(-115.0), deg(115.0)),
                JointLimit::new(deg(-400.0), deg(400.0)),
            ],
            base: Pose::identity(),
            flange_to_mold: Pose::identity(),
            home: JointVector::zeros(),
        }
    }
}

impl KinematicParams {
    pub fn validate(&self) -> Result<(), String> {
        for (i, l) in self.limits.iter().enumerate() {
            if !(l.lower < l.upper) {
                return Err(format!("limits[{i}]: lower must be < upper"));
            }
        }
        if !self.within_limits(&self.home) {
            return Err("home: outside joint limits".into());
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        self.limits.iter().zip(q.iter()).all(|(l, &v)| l.contains(v))
    }

    /// Upper bound on the distance from the base origin to the flange.
    pub fn max_reach(&self) -> f64 {
        self.dh.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }

    /// Shifts revolute angles by whole turns to land inside the limits, if possible.
    fn wrap_into_limits(&self, q: &JointVector) -> JointVector {
        let mut out = *q;
        for (v, l) in out.0.iter_mut().zip(&self.limits) {
            if l.contains(*v) {
                continue;
            }
            let mut w = *v;
            while w > l.upper {
                w -= TAU;
            }
            while w < l.lower {
                w += TAU;
            }
            if l.contains(w) {
                *v = w;
            }
        }
        out
    }
}

/// Joint origins and rotation axes in world coordinates plus the flange pose.
fn chain(q: &JointVector, k: &KinematicParams) -> ([(Vec3, Vec3); NUM_JOINTS], Isometry3<f64>) {
    let mut t = Isometry3::from_parts(
        Translation3::from(k.base.position),
        k.base.orientation,
    );
    let mut axes = [(Vec3::zeros(), Vec3::zeros()); NUM_JOINTS];
    for (i, row) in k.dh.iter().enumerate() {
        axes[i] = (t.translation.vector, t.rotation * Vec3::z());
        t *= row.transform(q[i]);
    }
    (axes, t)
}

fn iso_to_pose(t: &Isometry3<f64>) -> Pose {
    Pose::new(t.translation.vector, t.rotation)
}

/// Flange pose in the world frame.
pub fn forward_kinematics(q: &JointVector, k: &KinematicParams) -> Pose {
    iso_to_pose(&chain(q, k).1)
}

/// Mold frame pose in the world frame.
pub fn mold_pose(q: &JointVector, k: &KinematicParams) -> Pose {
    forward_kinematics(q, k).compose(&k.flange_to_mold)
}

/// 6×6 geometric Jacobian (linear rows first) of the flange in world coordinates.
pub fn jacobian(q: &JointVector, k: &KinematicParams) -> Matrix6<f64> {
    let (axes, t) = chain(q, k);
    let p = t.translation.vector;
    let mut j = Matrix6::zeros();
    for (i, (o, z)) in axes.iter().enumerate() {
        let lin = z.cross(&(p - o));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(z);
    }
    j
}

/// Position error and rotation-vector error, both taking `current` to `target`.
pub fn pose_residual(target: &Pose, current: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub damping: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the 6-vector residual norm.
    pub tolerance: f64,
    /// Largest joint-space step per iteration, rad.
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            max_iterations: 200,
            tolerance: 1e-8,
            max_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IkError {
    #[error("inverse kinematics did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("target out of reach (residual stagnated at {residual:e})")]
    OutOfReach { residual: f64 },
    #[error("solution violates the limit of joint {joint} ({value} rad)")]
    JointLimit { joint: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub joints: JointVector,
    pub iterations: usize,
    pub residual: f64,
}

const STAGNATION_WINDOW: usize = 10;

/// Solves for the joints that put the flange at `target`, starting from `seed`.
pub fn inverse_kinematics(
    target: &Pose,
    seed: &JointVector,
    k: &KinematicParams,
    opts: &IkOptions,
) -> Result<IkSolution, IkError> {
    let mut q = seed.as_vector();
    let lambda2 = opts.damping * opts.damping;
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iterations + 1);

    for iteration in 0..=opts.max_iterations {
        let qv = JointVector::from_vector(&q);
        let err = pose_residual(target, &forward_kinematics(&qv, k));
        let residual = err.norm();
        if residual < opts.tolerance {
            let joints = k.wrap_into_limits(&qv);
            if let Some((joint, &value)) = joints
                .iter()
                .enumerate()
                .find(|(i, v)| !k.limits[*i].contains(**v))
            {
                return Err(IkError::JointLimit { joint, value });
            }
            return Ok(IkSolution {
                joints,
                iterations: iteration,
                residual,
            });
        }
        history.push(residual);
        if iteration == opts.max_iterations {
            return Err(IkError::NoConvergence {
                iterations: iteration,
                residual,
            });
        }
        if history.len() > STAGNATION_WINDOW {
            let old = history[history.len() - 1 - STAGNATION_WINDOW];
            if old - residual <= 1e-6 * old {
                return Err(IkError::OutOfReach { residual });
            }
        }

        let j = jacobian(&qv, k);
        let jjt = j * j.transpose() + Matrix6::identity() * lambda2;
        let Some(y) = jjt.lu().solve(&err) else {
            return Err(IkError::NoConvergence {
                iterations: iteration,
                residual,
            });
        };
        let mut dq = j.transpose() * y;
        let n = dq.norm();
        if n > opts.max_step {
            dq *= opts.max_step / n;
        }
        q += dq;
    }
    unreachable!("loop returns on the final iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn zero_chain() -> KinematicParams {
        let row = DhRow {
            a: 0.0,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
        };
        KinematicParams {
            dh: [row; 6],
            ..KinematicParams::default()
        }
    }

    #[test]
    fn degenerate_chain_is_identity() {
        let p = forward_kinematics(&JointVector::zeros(), &zero_chain());
        let (dp, dr) = p.distance(&Pose::identity());
        assert!(dp < 1e-15 && dr < 1e-15);
    }

    // Frozen from an independent numpy homogeneous-transform chain.
    #[test]
    fn nominal_table_at_zero() {
        let p = forward_kinematics(&JointVector::zeros(), &KinematicParams::default());
        assert_relative_eq!(p.position, Vec3::new(0.815, 0.0, 1.1865), epsilon = 1e-12);
        let expected = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        assert_relative_eq!(p.rotation_matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn nominal_table_at_mixed_angles() {
        let q = JointVector([0.1, -0.2, 0.3, -0.4, 0.5, -0.6]);
        let p = forward_kinematics(&q, &KinematicParams::default());
        assert_relative_eq!(
            p.position,
            Vec3::new(0.6597315021848854, 0.05399770212510566, 1.0783924536347993),
            epsilon = 1e-12
        );
        let expected = Matrix3::new(
            -0.35609098441862247,
            -0.40189650720019715,
            0.8436103415179655,
            -0.841881599899669,
            0.5297435232767909,
            -0.10299112241676935,
            -0.4055053422165362,
            -0.7468942341768171,
            -0.5269861671688126,
        );
        assert_relative_eq!(p.rotation_matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn base_pose_composes_on_the_left() {
        let mut k = KinematicParams::default();
        let q = JointVector([0.3, 0.1, -0.2, 0.4, 0.2, 0.1]);
        let at_identity = forward_kinematics(&q, &k);
        k.base = Pose::new(
            Vec3::new(1.0, -2.0, 0.5),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        let (dp, dr) = forward_kinematics(&q, &k).distance(&k.base.compose(&at_identity));
        assert!(dp < 1e-12 && dr < 1e-12);
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        let k = KinematicParams::default();
        let seed = JointVector([0.2, 0.3, -0.4, 0.5, 0.6, -0.7]);
        let sol = inverse_kinematics(&forward_kinematics(&seed, &k), &seed, &k, &IkOptions::default())
            .unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.joints, seed);
    }

    #[test]
    fn far_target_is_out_of_reach() {
        let k = KinematicParams::default();
        let seed = JointVector([0.0, 0.2, -0.3, 0.0, 0.4, 0.0]);
        let mut target = forward_kinematics(&seed, &k);
        let dir = target.position.normalize();
        target.position += dir * (k.max_reach() + 10.0);
        let err = inverse_kinematics(&target, &seed, &k, &IkOptions::default()).unwrap_err();
        assert!(matches!(err, IkError::OutOfReach { .. }), "{err:?}");
    }

    #[test]
    fn converged_outside_limits_is_reported() {
        let mut k = KinematicParams::default();
        k.limits[0] = JointLimit::new(-0.1, 0.1);
        let q = JointVector([0.5, 0.2, -0.3, 0.1, 0.4, 0.2]);
        let seed = JointVector([0.0, 0.2, -0.3, 0.1, 0.4, 0.2]);
        let err = inverse_kinematics(&forward_kinematics(&q, &k), &seed, &k, &IkOptions::default())
            .unwrap_err();
        assert!(matches!(err, IkError::JointLimit { joint: 0, .. }), "{err:?}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let k = KinematicParams::default();
        let q = JointVector([0.3, 0.2, -0.5, 0.7, 0.4, -0.2]);
        let j = jacobian(&q, &k);
        let p0 = forward_kinematics(&q, &k);
        let h = 1e-7;
        for i in 0..6 {
            let mut qh = q;
            qh[i] += h;
            let col = pose_residual(&forward_kinematics(&qh, &k), &p0) / h;
            for r in 0..6 {
                assert!((col[r] - j[(r, i)]).abs() < 1e-5, "J[{r},{i}]");
            }
        }
    }

    fn in_limit_joints() -> impl Strategy<Value = JointVector> {
        // Keep clear of the wrist singularity (q5 = 0) and the limit boundaries.
        (
            -2.5..2.5f64,
            -0.8..1.8f64,
            -3.0..0.6f64,
            -3.0..3.0f64,
            prop_oneof![-1.8..-0.2f64, 0.2..1.8f64],
            -3.0..3.0f64,
        )
            .prop_map(|(a, b, c, d, e, f)| JointVector([a, b, c, d, e, f]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn fk_ik_roundtrip(q in in_limit_joints(), eps in proptest::array::uniform6(-0.05..0.05f64)) {
            let k = KinematicParams::default();
            let target = forward_kinematics(&q, &k);
            let mut seed = q;
            for i in 0..6 { seed[i] += eps[i]; }
            let sol = inverse_kinematics(&target, &seed, &k, &IkOptions::default()).unwrap();
            let (dp, dr) = forward_kinematics(&sol.joints, &k).distance(&target);
            prop_assert!(dp < 1e-6 && dr < 1e-6, "dp={dp:e} dr={dr:e}");
            prop_assert!(k.within_limits(&sol.joints));
        }
    }
}
