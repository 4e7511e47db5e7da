//! Digital twin and control stack for a tape laying cell with a fixed taper
//! and a robot-carried mold.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alarm;
pub mod control;
pub mod geometry;
pub mod kinematics;
pub mod modbus;
pub mod planner;
pub mod plant;
pub mod runtime;
pub mod sequencer;
pub mod surface;

pub use alarm::Alarm;
