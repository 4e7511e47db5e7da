//! Trajectory planning for a stationary taper: the robot carries the mold so
//! that the track point at arc length `s = v·t` sits on the nip point, with the
//! surface normal facing the roller and the track heading along the feed
//! direction.

use nalgebra::Matrix3;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{frame_from_tangent_normal, GeometryError, NipFrame, Pose, Vec3};
use crate::kinematics::{
    inverse_kinematics, mold_pose, IkError, IkOptions, JointVector, KinematicParams,
};
use crate::surface::{MoldSurface, TapeTrack};

/// Orthogonality slack between track tangent and surface normal.
const ORTHOGONALITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("feed speed and time step must be positive (v = {feed_speed}, dt = {dt})")]
    InvalidInput { feed_speed: f64, dt: f64 },
    #[error("degenerate frame at t = {t} s, s = {s} m: {source}")]
    DegenerateFrame {
        t: f64,
        s: f64,
        #[source]
        source: GeometryError,
    },
    #[error("inverse kinematics failed at t = {t} s, s = {s} m: {source}")]
    Ik {
        t: f64,
        s: f64,
        #[source]
        source: IkError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub s: f64,
    pub mold_pose: Pose,
    pub joints: JointVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoldTrajectory {
    pub track_index: usize,
    pub feed_speed: f64,
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

impl MoldTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        &self.samples[self.samples.len() - 1]
    }

    /// Sample at index `i`, holding the final sample past the end.
    pub fn get_clamped(&self, i: usize) -> &TrajectorySample {
        &self.samples[i.min(self.samples.len() - 1)]
    }

    /// CSV with columns `t,x,y,z,qw,qx,qy,qz,q1..q6,s`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for smp in &self.samples {
            w.write_record(smp.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }
}

const CSV_COLUMNS: [&str; 15] = [
    "t", "x", "y", "z", "qw", "qx", "qy", "qz", "q1", "q2", "q3", "q4", "q5", "q6", "s",
];

impl TrajectorySample {
    fn csv_row(&self) -> Vec<String> {
        let mut row = Vec::with_capacity(15);
        row.push(self.t.to_string());
        row.extend(self.mold_pose.to_array().iter().map(f64::to_string));
        row.extend(self.joints.iter().map(f64::to_string));
        row.push(self.s.to_string());
        row
    }
}

/// Several trajectories in one CSV, with a leading `track` column.
pub fn write_plan_csv<W: std::io::Write>(trajectories: &[MoldTrajectory], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("track").chain(CSV_COLUMNS))?;
    for traj in trajectories {
        for smp in &traj.samples {
            w.write_record(std::iter::once(traj.track_index.to_string()).chain(smp.csv_row()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mold pose in the world frame that puts track arc length `s` on the nip.
pub fn mold_pose_at(
    track: &TapeTrack,
    surface: &MoldSurface,
    nip: &NipFrame,
    s: f64,
) -> Result<Pose, GeometryError> {
    let smp = track.sample(surface, s);
    let dot = smp.tangent.dot(&smp.normal);
    if dot.abs() > ORTHOGONALITY_EPS {
        return Err(GeometryError::DegenerateFrame {
            cross_norm: smp.tangent.cross(&smp.normal).norm(),
        });
    }
    let local = frame_from_tangent_normal(&smp.tangent, &smp.normal)?;
    let world = nip.target_frame()?;
    let rotation: Matrix3<f64> = world * local.transpose();
    let position = nip.position - rotation * smp.point;
    Ok(Pose::from_rotation_matrix(position, &rotation))
}

/// Flange pose that realizes a given mold pose.
pub fn flange_for_mold(mold: &Pose, k: &KinematicParams) -> Pose {
    mold.compose(&k.flange_to_mold.inverse())
}

pub fn plan_mold_trajectory(
    track: &TapeTrack,
    surface: &MoldSurface,
    nip: &NipFrame,
    feed_speed: f64,
    dt: f64,
    k: &KinematicParams,
    ik: &IkOptions,
) -> Result<MoldTrajectory, PlanError> {
    plan_with_runout(track, surface, nip, feed_speed, dt, k, ik, 0.0)
}

/// As [`plan_mold_trajectory`], continuing `runout` metres past the track end
/// along the final heading. The runtime uses this to finish laying a tail that
/// ends up to one control tick beyond the nominal end.
#[allow(clippy::too_many_arguments)]
pub fn plan_with_runout(
    track: &TapeTrack,
    surface: &MoldSurface,
    nip: &NipFrame,
    feed_speed: f64,
    dt: f64,
    k: &KinematicParams,
    ik: &IkOptions,
    runout: f64,
) -> Result<MoldTrajectory, PlanError> {
    if !(feed_speed > 0.0) || !(dt > 0.0) {
        return Err(PlanError::InvalidInput { feed_speed, dt });
    }
    let end = track.length() + runout.max(0.0);
    let mut samples = Vec::with_capacity((end / (feed_speed * dt)) as usize + 2);
    let mut seed = k.home;
    for i in 0usize.. {
        let t = i as f64 * dt;
        let s = feed_speed * t;
        if s > end + 1e-12 {
            break;
        }
        let mold = mold_pose_at(track, surface, nip, s)
            .map_err(|source| PlanError::DegenerateFrame { t, s, source })?;
        let flange = flange_for_mold(&mold, k);
        let sol = inverse_kinematics(&flange, &seed, k, ik)
            .map_err(|source| PlanError::Ik { t, s, source })?;
        seed = sol.joints;
        samples.push(TrajectorySample {
            t,
            s,
            mold_pose: mold,
            joints: sol.joints,
        });
    }
    Ok(MoldTrajectory {
        track_index: track.index,
        feed_speed,
        dt,
        samples,
    })
}

/// Residuals of the three placement constraints, re-evaluated through forward
/// kinematics of the stored joints: (nip position error m, normal alignment
/// rad, tangent alignment rad).
pub fn constraint_residuals(
    sample: &TrajectorySample,
    track: &TapeTrack,
    surface: &MoldSurface,
    nip: &NipFrame,
    k: &KinematicParams,
) -> (f64, f64, f64) {
    let mold = mold_pose(&sample.joints, k);
    let smp = track.sample(surface, sample.s);
    let p = mold.transform_point(&smp.point);
    let n = mold.transform_vector(&smp.normal);
    let t = mold.transform_vector(&smp.tangent);
    (
        (p - nip.position).norm(),
        angle(&n, &(-nip.compaction_axis)),
        angle(&t, &nip.feed_direction),
    )
}

fn angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use nalgebra::UnitQuaternion;

    fn nip() -> NipFrame {
        NipFrame {
            position: Vec3::new(0.95, 0.0, 1.0),
            compaction_axis: -Vec3::x(),
            feed_direction: Vec3::y(),
        }
    }

    fn kin() -> KinematicParams {
        KinematicParams {
            flange_to_mold: Pose::from_translation(Vec3::new(0.0, 0.0, 0.05)),
            ..KinematicParams::default()
        }
    }

    fn plate() -> MoldSurface {
        MoldSurface::Plane {
            frame: Pose::identity(),
            extent_x: 0.3,
            extent_y: 1.2,
        }
    }

    #[test]
    fn straight_plane_track_is_pure_translation() {
        let track = TapeTrack::straight(0, 0.025, [0.03, -0.5], [0.03, 0.5]);
        let v = 0.05;
        let traj =
            plan_mold_trajectory(&track, &plate(), &nip(), v, 0.01, &kin(), &IkOptions::default())
                .unwrap();
        assert_eq!(traj.len(), 2001);
        let q0 = traj.first().mold_pose.orientation;
        let p0 = traj.first().mold_pose.position;
        for smp in &traj.samples {
            assert!(smp.mold_pose.orientation.angle_to(&q0) < 1e-9);
            let expected = p0 - nip().feed_direction * (v * smp.t);
            assert!((smp.mold_pose.position - expected).norm() < 1e-12);
            assert!((smp.s - v * smp.t).abs() < 1e-9);
        }
    }

    #[test]
    fn every_sample_satisfies_the_constraints() {
        let track = TapeTrack::straight(0, 0.025, [0.0, -0.5], [0.0, 0.5]);
        let k = kin();
        let traj =
            plan_mold_trajectory(&track, &plate(), &nip(), 0.1, 0.01, &k, &IkOptions::default())
                .unwrap();
        for smp in &traj.samples {
            let (dp, dn, dt) = constraint_residuals(smp, &track, &plate(), &nip(), &k);
            assert!(dp < 1e-6 && dn < 1e-6 && dt < 1e-6, "{dp:e} {dn:e} {dt:e}");
            assert!(k.within_limits(&smp.joints));
        }
    }

    #[test]
    fn circumferential_cylinder_track_rotates_about_the_axis() {
        let radius = 0.1;
        // Cylinder axis along the mold -x axis, crown of the drum on mold +z.
        let surface = MoldSurface::Cylinder {
            frame: Pose::new(
                Vec3::zeros(),
                UnitQuaternion::from_axis_angle(&Vec3::y_axis(), -std::f64::consts::FRAC_PI_2),
            ),
            radius,
            length: 0.3,
        };
        let track = TapeTrack::straight(0, 0.02, [-0.05, 0.0], [0.05, 0.0]);
        let v = 0.05;
        let dt = 0.01;
        let k = kin();
        let traj = plan_mold_trajectory(&track, &surface, &nip(), v, dt, &k, &IkOptions::default())
            .unwrap();
        let axis_world = |p: &Pose| p.transform_vector(&surface.frame().transform_vector(&Vec3::z()));
        for w in traj.samples.windows(2) {
            let rel = w[1].mold_pose.orientation * w[0].mold_pose.orientation.inverse();
            let rate = rel.angle() / dt;
            assert!((rate - v / radius).abs() < 1e-9, "rate {rate}");
            let ax = rel.axis().unwrap().into_inner();
            assert!(ax.cross(&axis_world(&w[0].mold_pose)).norm() < 1e-9);
        }
        for smp in &traj.samples {
            let (dp, dn, dt) = constraint_residuals(smp, &track, &surface, &nip(), &k);
            assert!(dp < 1e-6 && dn < 1e-6 && dt < 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_speed() {
        let track = TapeTrack::straight(0, 0.025, [0.0, -0.5], [0.0, 0.5]);
        let err = plan_mold_trajectory(&track, &plate(), &nip(), 0.0, 0.01, &kin(), &IkOptions::default())
            .unwrap_err();
        assert!(matches!(err, PlanError::InvalidInput { .. }));
    }

    #[test]
    fn unreachable_track_reports_time_and_arc_length() {
        let far = NipFrame {
            position: Vec3::new(5.0, 0.0, 1.0),
            ..nip()
        };
        let track = TapeTrack::straight(0, 0.025, [0.0, -0.5], [0.0, 0.5]);
        let err = plan_mold_trajectory(&track, &plate(), &far, 0.1, 0.01, &kin(), &IkOptions::default())
            .unwrap_err();
        match err {
            PlanError::Ik { t, s, .. } => assert_eq!((t, s), (0.0, 0.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let track = TapeTrack::straight(0, 0.025, [0.0, -0.05], [0.0, 0.05]);
        let traj = plan_mold_trajectory(&track, &plate(), &nip(), 0.1, 0.5, &kin(), &IkOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y,z,qw,qx,qy,qz,q1,q2,q3,q4,q5,q6,s");
        assert_eq!(lines.count(), traj.len());
    }
}
