//! Rodless feed cylinder with end-position switches, and the spring-return
//! cutting blade.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PneumaticParams {
    /// Rear-to-front (and front-to-rear) travel time of the feed cylinder, s.
    pub feed_travel_time: f64,
    /// Tape pushed forward by one full forward stroke, m.
    pub feed_stroke_length: f64,
    pub blade_extend_time: f64,
    /// Spring return time, s.
    pub blade_retract_time: f64,
}

impl PneumaticParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("feed_travel_time", self.feed_travel_time),
            ("feed_stroke_length", self.feed_stroke_length),
            ("blade_extend_time", self.blade_extend_time),
            ("blade_retract_time", self.blade_retract_time),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CylinderPhase {
    Rear,
    MovingForward,
    Front,
    MovingBackward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BladePhase {
    Retracted,
    Extending,
    Extended,
    Retracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValveCommand {
    pub feed_valve: bool,
    pub blade_valve: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PneumaticError {
    #[error("interlock violation: {0}")]
    InterlockViolation(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PneumaticState {
    pub params: PneumaticParams,
    pub cylinder: CylinderPhase,
    /// 0 = rear end position, 1 = front end position.
    pub cylinder_position: f64,
    pub cylinder_timer: f64,
    pub auto_switch_rear: bool,
    pub auto_switch_front: bool,
    pub blade: BladePhase,
    pub blade_position: f64,
    pub blade_timer: f64,
}

impl PneumaticState {
    pub fn new(params: PneumaticParams) -> Self {
        Self {
            params,
            cylinder: CylinderPhase::Rear,
            cylinder_position: 0.0,
            cylinder_timer: 0.0,
            auto_switch_rear: true,
            auto_switch_front: false,
            blade: BladePhase::Retracted,
            blade_position: 0.0,
            blade_timer: 0.0,
        }
    }

    pub fn check_interlock(&self, cmd: ValveCommand) -> Result<(), PneumaticError> {
        if cmd.feed_valve && cmd.blade_valve {
            return Err(PneumaticError::InterlockViolation(
                "feed and blade valves commanded together",
            ));
        }
        if cmd.feed_valve && self.blade != BladePhase::Retracted {
            return Err(PneumaticError::InterlockViolation(
                "feed commanded while the blade is out",
            ));
        }
        if cmd.blade_valve && self.cylinder == CylinderPhase::MovingForward {
            return Err(PneumaticError::InterlockViolation(
                "cut commanded while the feed cylinder pushes tape",
            ));
        }
        Ok(())
    }

    /// Advances both actuators by `dt`; returns the tape pushed forward, m.
    /// On an interlock violation the state is left untouched.
    pub fn step(&mut self, cmd: ValveCommand, dt: f64) -> Result<f64, PneumaticError> {
        debug_assert!(dt > 0.0);
        self.check_interlock(cmd)?;
        let p = self.params;

        let before = self.cylinder_position;
        let travel = dt / p.feed_travel_time;
        let phase = if cmd.feed_valve {
            self.cylinder_position = (before + travel).min(1.0);
            if self.cylinder_position >= 1.0 {
                CylinderPhase::Front
            } else {
                CylinderPhase::MovingForward
            }
        } else {
            self.cylinder_position = (before - travel).max(0.0);
            if self.cylinder_position <= 0.0 {
                CylinderPhase::Rear
            } else {
                CylinderPhase::MovingBackward
            }
        };
        advance_timer(&mut self.cylinder, &mut self.cylinder_timer, phase, dt);
        self.auto_switch_front = self.cylinder == CylinderPhase::Front;
        self.auto_switch_rear = self.cylinder == CylinderPhase::Rear;
        // Freewheel: only forward motion carries the tape.
        let advance = (self.cylinder_position - before).max(0.0) * p.feed_stroke_length;

        let phase = if cmd.blade_valve {
            self.blade_position = (self.blade_position + dt / p.blade_extend_time).min(1.0);
            if self.blade_position >= 1.0 {
                BladePhase::Extended
            } else {
                BladePhase::Extending
            }
        } else {
            self.blade_position = (self.blade_position - dt / p.blade_retract_time).max(0.0);
            if self.blade_position <= 0.0 {
                BladePhase::Retracted
            } else {
                BladePhase::Retracting
            }
        };
        advance_timer(&mut self.blade, &mut self.blade_timer, phase, dt);
        Ok(advance)
    }
}

fn advance_timer<P: PartialEq>(current: &mut P, timer: &mut f64, next: P, dt: f64) {
    if *current == next {
        *timer += dt;
    } else {
        *current = next;
        *timer = 0.0;
    }
}

/// Value-returning form of [`PneumaticState::step`].
pub fn pneumatic_step(
    p: &PneumaticState,
    cmd: ValveCommand,
    dt: f64,
) -> Result<(PneumaticState, f64), PneumaticError> {
    let mut next = *p;
    let advance = next.step(cmd, dt)?;
    Ok((next, advance))
}
