//! Robot-side motion: follows planned trajectories while taping, and moves
//! the mold on straight lines (slerped orientation) for approach, lift,
//! index and jog. Every commanded pose is solved through inverse kinematics.

use crate::geometry::{Pose, Vec3};
use crate::kinematics::{inverse_kinematics, IkOptions, JointVector, KinematicParams};
use crate::planner::MoldTrajectory;
use crate::sequencer::MoldTarget;

/// Pose and joints of a trajectory at arc length `s`, interpolated between samples.
pub fn trajectory_at(traj: &MoldTrajectory, s: f64) -> (Pose, JointVector) {
    let step = traj.feed_speed * traj.dt;
    let x = (s / step).max(0.0);
    let i = (x.floor() as usize).min(traj.len() - 1);
    let a = traj.get_clamped(i);
    let b = traj.get_clamped(i + 1);
    let frac = if i + 1 < traj.len() { (x - i as f64).clamp(0.0, 1.0) } else { 0.0 };
    if frac == 0.0 {
        return (a.mold_pose, a.joints);
    }
    let mut q = a.joints;
    for (j, v) in q.0.iter_mut().enumerate() {
        *v += frac * (b.joints.0[j] - *v);
    }
    (a.mold_pose.interpolate(&b.mold_pose, frac), q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Move {
    goal: Pose,
    /// Sequencer target this move realizes; None for jogs.
    tag: Option<MoldTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoldMotion {
    pub pose: Pose,
    pub joints: JointVector,
    active: Option<Move>,
    reached: Option<MoldTarget>,
}

/// Outcome of one control tick of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTick {
    pub start: Pose,
    pub end: Pose,
    pub error: Option<String>,
}

pub struct MotionContext<'a> {
    pub trajectories: &'a [MoldTrajectory],
    pub k: &'a KinematicParams,
    pub ik: &'a IkOptions,
    /// Unit vector the mold moves along to lift off the roller.
    pub lift_direction: Vec3,
    pub clearance: f64,
    /// m/s
    pub move_speed: f64,
    /// s
    pub period: f64,
}

impl MotionContext<'_> {
    pub fn target_pose(&self, target: &MoldTarget, s_progress: f64) -> Option<Pose> {
        match *target {
            MoldTarget::Hold => None,
            MoldTarget::Follow { track } => Some(trajectory_at(&self.trajectories[track], s_progress).0),
            MoldTarget::Lowered { track, s } => Some(trajectory_at(&self.trajectories[track], s).0),
            MoldTarget::Raised { track, s } => {
                let p = trajectory_at(&self.trajectories[track], s).0;
                Some(Pose::new(p.position + self.lift_direction * self.clearance, p.orientation))
            }
        }
    }
}

impl MoldMotion {
    pub fn new(pose: Pose, joints: JointVector) -> Self {
        Self {
            pose,
            joints,
            active: None,
            reached: None,
        }
    }

    /// Starts at the lifted start pose of the first track.
    pub fn at_target(ctx: &MotionContext<'_>, target: MoldTarget) -> Result<Self, String> {
        let pose = ctx.target_pose(&target, 0.0).unwrap_or_default();
        let seed = match target {
            MoldTarget::Raised { track, s } | MoldTarget::Lowered { track, s } => {
                trajectory_at(&ctx.trajectories[track], s).1
            }
            _ => ctx.k.home,
        };
        let flange = pose.compose(&ctx.k.flange_to_mold.inverse());
        let sol = inverse_kinematics(&flange, &seed, ctx.k, ctx.ik).map_err(|e| e.to_string())?;
        let mut m = Self::new(pose, sol.joints);
        m.reached = Some(target);
        Ok(m)
    }

    pub fn reached(&self) -> Option<MoldTarget> {
        self.reached
    }

    pub fn moving(&self) -> bool {
        self.active.is_some()
    }

    /// Queues a relative translation; ignored while another move runs.
    pub fn jog(&mut self, delta: [f64; 3]) -> bool {
        if self.active.is_some() {
            return false;
        }
        let goal = Pose::new(self.pose.position + Vec3::from(delta), self.pose.orientation);
        self.active = Some(Move { goal, tag: None });
        self.reached = None;
        true
    }

    /// Advances one control tick toward `target`.
    pub fn tick(&mut self, ctx: &MotionContext<'_>, target: &MoldTarget, s_progress: f64) -> MotionTick {
        let start = self.pose;
        let mut error = None;
        match *target {
            MoldTarget::Follow { track } => {
                let (pose, joints) = trajectory_at(&ctx.trajectories[track], s_progress);
                self.pose = pose;
                self.joints = joints;
                self.active = None;
                self.reached = Some(*target);
            }
            MoldTarget::Hold => {
                if matches!(self.active, Some(Move { tag: Some(_), .. })) {
                    self.active = None;
                }
                if self.active.is_some() {
                    error = self.travel(ctx);
                }
            }
            MoldTarget::Raised { .. } | MoldTarget::Lowered { .. } => {
                if self.reached != Some(*target) {
                    let same = matches!(self.active, Some(Move { tag: Some(t), .. }) if t == *target);
                    if !same {
                        let goal = ctx.target_pose(target, s_progress).expect("pose target");
                        self.active = Some(Move { goal, tag: Some(*target) });
                        self.reached = None;
                    }
                    error = self.travel(ctx);
                }
            }
        }
        MotionTick {
            start,
            end: self.pose,
            error,
        }
    }

    fn travel(&mut self, ctx: &MotionContext<'_>) -> Option<String> {
        let mv = self.active?;
        let (dp, dr) = self.pose.distance(&mv.goal);
        let step = ctx.move_speed * ctx.period;
        // Rotation is scaled so that 1 rad counts like 0.1 m of travel.
        let remaining = dp.max(dr * 0.1);
        let next = if remaining <= step {
            mv.goal
        } else {
            self.pose.interpolate(&mv.goal, step / remaining)
        };
        let flange = next.compose(&ctx.k.flange_to_mold.inverse());
        match inverse_kinematics(&flange, &self.joints, ctx.k, ctx.ik) {
            Ok(sol) => {
                self.pose = next;
                self.joints = sol.joints;
                if remaining <= step {
                    self.active = None;
                    self.reached = mv.tag;
                }
                None
            }
            Err(e) => {
                self.active = None;
                Some(format!("move to ({:.4}, {:.4}, {:.4}) failed: {e}", next.position.x, next.position.y, next.position.z))
            }
        }
    }
}
