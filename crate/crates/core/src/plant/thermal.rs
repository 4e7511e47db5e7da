//! Lumped heating zone: first-order heater dynamics plus a moving-tape delay
//! line between the heated spot and the infrared sensor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Heat capacity, J/K.
    pub capacity: f64,
    /// Loss coefficient to ambient, W/K.
    pub loss: f64,
    /// Fraction of electrical power reaching the tape, 0..1.
    pub efficiency: f64,
    /// Ambient temperature, °C.
    pub ambient: f64,
    /// Heater power limit, W.
    pub max_power: f64,
    /// Tape path length from the heated spot to the sensor spot, m.
    #[serde(default)]
    pub delay_length: f64,
}

impl ThermalParams {
    pub fn time_constant(&self) -> f64 {
        self.capacity / self.loss
    }

    /// Equilibrium temperature under constant power.
    pub fn steady_state(&self, power: f64) -> f64 {
        self.ambient + self.efficiency * power / self.loss
    }

    /// Largest explicit-Euler step accepted for this zone.
    pub fn max_stable_dt(&self) -> f64 {
        0.1 * self.time_constant()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.capacity > 0.0) {
            return Err("capacity must be > 0".into());
        }
        if !(self.loss > 0.0) {
            return Err("loss must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err("efficiency must be within [0, 1]".into());
        }
        if !(self.max_power > 0.0) {
            return Err("max_power must be > 0".into());
        }
        if !(self.delay_length >= 0.0) {
            return Err("delay_length must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TapeElement {
    length: f64,
    temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalZoneState {
    pub params: ThermalParams,
    /// Temperature at the heated spot, °C.
    pub heater_temperature: f64,
    /// Temperature reported by the sensor, °C.
    pub temperature: f64,
    /// Power applied during the last step, W.
    pub heater_power: f64,
    queue: VecDeque<TapeElement>,
    queued_length: f64,
}

impl ThermalZoneState {
    pub fn new(params: ThermalParams, initial: f64) -> Self {
        let mut z = Self {
            params,
            heater_temperature: initial,
            temperature: initial,
            heater_power: 0.0,
            queue: VecDeque::new(),
            queued_length: 0.0,
        };
        z.flush();
        z
    }

    pub fn at_ambient(params: ThermalParams) -> Self {
        Self::new(params, params.ambient)
    }

    /// Stationary tape equilibrates along the whole heated path.
    fn flush(&mut self) {
        self.queue.clear();
        self.queue.push_back(TapeElement {
            length: self.params.delay_length,
            temperature: self.heater_temperature,
        });
        self.queued_length = self.params.delay_length;
        self.temperature = self.heater_temperature;
    }

    /// Advances the zone by `dt` with `power_cmd` applied while the tape moves
    /// at `feed_speed`.
    pub fn step(&mut self, power_cmd: f64, feed_speed: f64, dt: f64) {
        debug_assert!(dt > 0.0);
        let p = &self.params;
        let power = power_cmd.clamp(0.0, p.max_power);
        let dtemp = (p.efficiency * power - p.loss * (self.heater_temperature - p.ambient)) / p.capacity;
        self.heater_temperature += dtemp * dt;
        self.heater_power = power;

        let travel = feed_speed.max(0.0) * dt;
        if self.params.delay_length <= 0.0 {
            self.temperature = self.heater_temperature;
            return;
        }
        if travel <= 0.0 {
            self.flush();
            return;
        }
        self.queue.push_back(TapeElement {
            length: travel,
            temperature: self.heater_temperature,
        });
        self.queued_length += travel;
        while let Some(front) = self.queue.front() {
            if self.queued_length - front.length >= self.params.delay_length {
                self.queued_length -= front.length;
                self.queue.pop_front();
            } else {
                break;
            }
        }
        self.temperature = self.queue.front().map_or(self.heater_temperature, |e| e.temperature);
    }

    /// Forces the heated spot and the whole delay line to `temp`.
    pub fn set_temperature(&mut self, temp: f64) {
        self.heater_temperature = temp;
        self.flush();
    }
}

/// Value-returning form of [`ThermalZoneState::step`].
pub fn thermal_step(z: &ThermalZoneState, power_cmd: f64, feed_speed: f64, dt: f64) -> ThermalZoneState {
    let mut next = z.clone();
    next.step(power_cmd, feed_speed, dt);
    next
}
