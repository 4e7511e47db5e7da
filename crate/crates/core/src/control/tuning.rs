//! Starting gains from a first-order-plus-dead-time fit of a heating zone.
//!
//! The zone is K/(τs+1)·e^(−θs) with K = η/h, τ = C/h and θ the transport
//! delay at the process feed speed. PI gains follow the IMC rule with the
//! closed-loop time constant τc = max(θ, τ/4) and Ti = min(τ, 4(τc + θ)).

use thiserror::Error;

use super::pid::PidGains;
use crate::plant::ThermalParams;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TuningError {
    #[error("invalid plant: capacity and loss must be > 0 (C = {capacity}, h = {loss})")]
    InvalidPlant { capacity: f64, loss: f64 },
}

pub fn pid_tune_defaults(params: &ThermalParams, feed_speed: f64) -> Result<PidGains, TuningError> {
    let (c, h) = (params.capacity, params.loss);
    if !(c > 0.0 && h > 0.0 && params.efficiency > 0.0) {
        return Err(TuningError::InvalidPlant { capacity: c, loss: h });
    }
    let gain = params.efficiency / h;
    let tau = c / h;
    let theta = if feed_speed > 0.0 {
        params.delay_length / feed_speed
    } else {
        0.0
    };
    let tau_c = theta.max(tau / 4.0);
    let kp = tau / (gain * (tau_c + theta));
    let ti = tau.min(4.0 * (tau_c + theta));
    Ok(PidGains {
        kp,
        ki: kp / ti,
        kd: 0.0,
    })
}
