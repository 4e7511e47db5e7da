//! Uniaxial force device holding the consolidation roller.
//!
//! Force tracking is ramp-limited; once in contact the stroke settles where
//! the elastic roller layer carries the actual force. Leaving the stroke range
//! latches an error that only [`acf_reset`] clears.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcfError {
    #[default]
    None,
    StrokeLimit,
}

impl AcfError {
    pub fn code(self) -> u16 {
        match self {
            AcfError::None => 0,
            AcfError::StrokeLimit => 1,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(AcfError::None),
            1 => Some(AcfError::StrokeLimit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfParams {
    /// Usable stroke, mm. The lower limit is 0 (fully retracted).
    pub stroke_max: f64,
    /// Contact stiffness of the elastic roller layer, N/mm.
    pub stiffness: f64,
    /// Free extension speed when seeking contact, mm/s.
    pub extend_speed: f64,
    /// Retraction speed once out of contact, mm/s.
    pub retract_speed: f64,
}

impl AcfParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("stroke_max", self.stroke_max),
            ("stiffness", self.stiffness),
            ("extend_speed", self.extend_speed),
            ("retract_speed", self.retract_speed),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfState {
    pub params: AcfParams,
    pub enabled: bool,
    /// N
    pub target_force: f64,
    /// N
    pub actual_force: f64,
    /// kg
    pub payload: f64,
    /// N/s
    pub contact_ramp: f64,
    /// mm
    pub stroke: f64,
    pub contact: bool,
    pub error_code: AcfError,
}

impl AcfState {
    pub fn new(params: AcfParams, target_force: f64, contact_ramp: f64, payload: f64) -> Self {
        Self {
            params,
            enabled: false,
            target_force,
            actual_force: 0.0,
            payload,
            contact_ramp,
            stroke: 0.0,
            contact: false,
            error_code: AcfError::None,
        }
    }

    fn latch(&mut self) {
        self.error_code = AcfError::StrokeLimit;
        self.actual_force = 0.0;
        self.contact = false;
        self.stroke = self.stroke.clamp(0.0, self.params.stroke_max);
    }

    fn ramp_force(&mut self, goal: f64, dt: f64) {
        let max_delta = self.contact_ramp.max(0.0) * dt;
        let delta = (goal - self.actual_force).clamp(-max_delta, max_delta);
        self.actual_force = (self.actual_force + delta).max(0.0);
    }

    /// Settles the stroke on the contact equilibrium; false if that leaves the range.
    fn settle(&mut self, gap: f64) -> bool {
        self.stroke = gap + self.actual_force / self.params.stiffness;
        (0.0..=self.params.stroke_max).contains(&self.stroke)
    }

    /// Penetration of the roller into the mold surface, mm.
    pub fn penetration(&self, gap: f64) -> f64 {
        if self.contact {
            self.stroke - gap
        } else {
            0.0
        }
    }

    /// Advances the device by `dt` with the mold `gap` mm from the retracted
    /// roller tip, measured along the compaction axis.
    pub fn step(&mut self, gap: f64, dt: f64) {
        debug_assert!(dt > 0.0);
        if self.error_code != AcfError::None {
            self.actual_force = 0.0;
            self.contact = false;
            return;
        }
        let p = self.params;
        if self.enabled {
            if !self.contact {
                let next = self.stroke + p.extend_speed * dt;
                if gap < 0.0 {
                    self.latch();
                    return;
                }
                if next >= gap {
                    if gap > p.stroke_max {
                        self.stroke = p.stroke_max;
                        self.latch();
                        return;
                    }
                    self.stroke = gap;
                    self.contact = true;
                    self.actual_force = 0.0;
                } else if next > p.stroke_max {
                    self.stroke = p.stroke_max;
                    self.latch();
                    return;
                } else {
                    self.stroke = next;
                    return;
                }
            }
            self.ramp_force(self.target_force.max(0.0), dt);
            if !self.settle(gap) {
                self.latch();
            }
        } else if self.contact {
            self.ramp_force(0.0, dt);
            if !self.settle(gap) {
                self.latch();
                return;
            }
            if self.actual_force <= 0.0 {
                self.contact = false;
            }
        } else {
            self.stroke = (self.stroke - p.retract_speed * dt).max(0.0);
        }
    }
}

/// Value-returning form of [`AcfState::step`].
pub fn acf_step(a: &AcfState, gap: f64, dt: f64) -> AcfState {
    let mut next = *a;
    next.step(gap, dt);
    next
}

/// Error acknowledgment: clears the latch, drops the force and retracts.
pub fn acf_reset(a: &AcfState) -> AcfState {
    AcfState {
        error_code: AcfError::None,
        actual_force: 0.0,
        contact: false,
        stroke: 0.0,
        ..*a
    }
}
