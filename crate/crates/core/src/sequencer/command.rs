use serde::{Deserialize, Serialize};

use super::machine::Phase;
use crate::modbus::registers::TARGET_FORCE;

/// Operator commands, as posted to the runtime command API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "args", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCommand {
    Start,
    Stop,
    AckFault,
    SetSetpoint {
        value: f64,
    },
    SetForce {
        value: f64,
    },
    /// Applies to one zone (0 preheat, 1 tape, 2 substrate) or, without a
    /// zone, to all three.
    SetGains {
        #[serde(default)]
        zone: Option<usize>,
        kp: f64,
        ki: f64,
        kd: f64,
    },
    ManualFeed,
    ManualCut,
    /// Relative mold translation in the world frame, m.
    Jog {
        #[serde(default)]
        dx: f64,
        #[serde(default)]
        dy: f64,
        #[serde(default)]
        dz: f64,
    },
}

/// Largest single jog, m.
pub const MAX_JOG: f64 = 0.05;

impl OperatorCommand {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorCommand::Start => "start",
            OperatorCommand::Stop => "stop",
            OperatorCommand::AckFault => "ack_fault",
            OperatorCommand::SetSetpoint { .. } => "set_setpoint",
            OperatorCommand::SetForce { .. } => "set_force",
            OperatorCommand::SetGains { .. } => "set_gains",
            OperatorCommand::ManualFeed => "manual_feed",
            OperatorCommand::ManualCut => "manual_cut",
            OperatorCommand::Jog { .. } => "jog",
        }
    }

    /// Argument checks that do not depend on the process state.
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            OperatorCommand::SetSetpoint { value } if !value.is_finite() => Err("setpoint must be finite".into()),
            OperatorCommand::SetForce { value } => {
                let max = u16::MAX as f64 / TARGET_FORCE.scale;
                if !(value > 0.0 && value <= max) {
                    Err(format!("force must be within (0, {max}] N"))
                } else {
                    Ok(())
                }
            }
            OperatorCommand::SetGains { zone, kp, ki, kd } => {
                if zone.is_some_and(|z| z > 2) {
                    return Err("zone must be 0, 1 or 2".into());
                }
                if [kp, ki, kd].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err("gains must be finite and >= 0".into());
                }
                Ok(())
            }
            OperatorCommand::Jog { dx, dy, dz } => {
                if [dx, dy, dz].iter().any(|d| !(d.is_finite() && d.abs() <= MAX_JOG)) {
                    Err(format!("jog components must be within ±{MAX_JOG} m"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// A command the process state does not allow right now.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refusal {
    pub command: String,
    pub state: Phase,
    pub reason: String,
}

/// Interlock check shared by the sequencer and the API front end.
pub fn check_command(phase: Phase, manual_busy: bool, cmd: &OperatorCommand) -> Result<(), Refusal> {
    let refuse = |reason: &str| {
        Err(Refusal {
            command: cmd.name().into(),
            state: phase,
            reason: reason.into(),
        })
    };
    match cmd {
        OperatorCommand::Start | OperatorCommand::ManualFeed | OperatorCommand::ManualCut | OperatorCommand::Jog { .. } => {
            if phase != Phase::Idle {
                return refuse("only allowed while idle");
            }
            if manual_busy {
                return refuse("a manual operation is still running");
            }
            Ok(())
        }
        OperatorCommand::AckFault if phase != Phase::Fault => refuse("no fault to acknowledge"),
        _ => Ok(()),
    }
}
