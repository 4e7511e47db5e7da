//! Discrete positional PID for the heater power command.
//!
//! Derivative acts on the measurement (no setpoint kick) through a first-order
//! filter. Anti-windup is conditional integration: the integrator is held while
//! the output is saturated in the direction the error pushes it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub gains: PidGains,
    pub u_min: f64,
    pub u_max: f64,
    /// Derivative filter coefficient; 0 passes the raw difference.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "yes")]
    pub anti_windup: bool,
    #[serde(default)]
    pub integrator: f64,
    #[serde(default)]
    pub previous_measurement: Option<f64>,
    #[serde(default)]
    pub derivative: f64,
}

fn yes() -> bool {
    true
}

impl PidState {
    pub fn new(gains: PidGains, u_min: f64, u_max: f64) -> Self {
        debug_assert!(u_min <= u_max);
        Self {
            gains,
            u_min,
            u_max,
            alpha: 0.0,
            anti_windup: true,
            integrator: 0.0,
            previous_measurement: None,
            derivative: 0.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha.clamp(0.0, 1.0);
        self
    }

    pub fn reset(&mut self) {
        self.integrator = 0.0;
        self.previous_measurement = None;
        self.derivative = 0.0;
    }

    /// Gains change without a bump: the integrator is rescaled so the I term
    /// keeps its value.
    pub fn set_gains(&mut self, gains: PidGains) {
        if gains.ki != 0.0 {
            self.integrator *= self.gains.ki / gains.ki;
        } else {
            self.integrator = 0.0;
        }
        self.gains = gains;
        self.clamp_integrator();
    }

    fn clamp_integrator(&mut self) {
        if !self.anti_windup || self.gains.ki == 0.0 {
            return;
        }
        let bound = (self.u_max - self.u_min) / self.gains.ki.abs();
        self.integrator = self.integrator.clamp(-bound, bound);
    }

    pub fn update(&mut self, setpoint: f64, measurement: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let g = self.gains;
        let error = setpoint - measurement;
        let prev = self.previous_measurement.unwrap_or(measurement);
        let raw_d = -(measurement - prev) / dt;
        self.derivative = self.alpha * self.derivative + (1.0 - self.alpha) * raw_d;
        self.previous_measurement = Some(measurement);

        let p = g.kp * error;
        let d = g.kd * self.derivative;
        let candidate = self.integrator + error * dt;
        if self.anti_windup {
            let u = p + g.ki * candidate + d;
            let pushing_high = u > self.u_max && error * g.ki > 0.0;
            let pushing_low = u < self.u_min && error * g.ki < 0.0;
            if !(pushing_high || pushing_low) {
                self.integrator = candidate;
            }
            self.clamp_integrator();
        } else {
            self.integrator = candidate;
        }
        (p + g.ki * self.integrator + d).clamp(self.u_min, self.u_max)
    }
}

/// Value-returning form of [`PidState::update`].
pub fn pid_step(p: &PidState, setpoint: f64, measurement: f64, dt: f64) -> (f64, PidState) {
    let mut next = *p;
    let u = next.update(setpoint, measurement, dt);
    (u, next)
}
