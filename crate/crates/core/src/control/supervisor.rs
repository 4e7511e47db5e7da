//! Configures the force device over Modbus and watches its monitoring
//! registers once per control tick.

use serde::{Deserialize, Serialize};

use crate::alarm::Alarm;
use crate::modbus::registers::{self, AcfInputs, INPUT_COUNT};
use crate::modbus::{ClientError, RegisterTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorPhase {
    Idle,
    Configured,
    Monitoring,
    Faulted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LastRead {
    pub stroke: f64,
    pub contact: bool,
    pub error_code: u16,
    pub actual_force: f64,
}

impl From<AcfInputs> for LastRead {
    fn from(i: AcfInputs) -> Self {
        Self {
            stroke: i.stroke,
            contact: i.contact,
            error_code: i.error_code,
            actual_force: i.actual_force,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSupervisorState {
    pub desired_force: f64,
    pub payload: f64,
    pub contact_ramp: f64,
    pub last_read: LastRead,
    pub phase: SupervisorPhase,
    /// ACF enable the sequencer asks for.
    pub enable_request: bool,
    enable_written: Option<bool>,
    config_dirty: bool,
    ack_pending: bool,
    comm_fault: bool,
}

impl ForceSupervisorState {
    pub fn new(desired_force: f64, payload: f64, contact_ramp: f64) -> Self {
        Self {
            desired_force,
            payload,
            contact_ramp,
            last_read: LastRead::default(),
            phase: SupervisorPhase::Idle,
            enable_request: false,
            enable_written: None,
            config_dirty: true,
            ack_pending: false,
            comm_fault: false,
        }
    }

    pub fn set_force(&mut self, force: f64) {
        self.desired_force = force;
        self.config_dirty = true;
    }

    pub fn set_contact_ramp(&mut self, ramp: f64) {
        self.contact_ramp = ramp;
        self.config_dirty = true;
    }

    /// Queues an error acknowledgment for the next step.
    pub fn acknowledge(&mut self) {
        self.ack_pending = true;
    }

    pub fn comm_fault(&self) -> bool {
        self.comm_fault
    }

    fn fault_on(&mut self, err: ClientError, alarms: &mut Vec<Alarm>) {
        let alarm = match err {
            ClientError::Timeout | ClientError::Io(_) => Alarm::CommTimeout,
            other => Alarm::CommError {
                detail: other.to_string(),
            },
        };
        log::warn!("force supervisor: {alarm:?}");
        if !self.comm_fault {
            alarms.push(alarm);
        }
        self.comm_fault = true;
        self.phase = SupervisorPhase::Faulted;
        // The device state is unknown after a link failure; rewrite everything.
        self.enable_written = None;
        self.config_dirty = true;
    }

    /// One control tick of device traffic. Returns newly raised alarms.
    pub fn step(&mut self, link: &mut dyn RegisterTransport) -> Vec<Alarm> {
        let mut alarms = Vec::new();
        if let Err(e) = self.exchange(link, &mut alarms) {
            self.fault_on(e, &mut alarms);
        }
        alarms
    }

    fn exchange(&mut self, link: &mut dyn RegisterTransport, alarms: &mut Vec<Alarm>) -> Result<(), ClientError> {
        if self.ack_pending {
            self.ack_pending = false;
            self.comm_fault = false;
            link.write_single(registers::ERROR_ACK.address, 1)?;
        } else if self.comm_fault {
            // Latched until acknowledged.
            return Ok(());
        }
        let faulted = self.last_read.error_code != 0 || self.phase == SupervisorPhase::Faulted;
        if self.config_dirty && !faulted {
            link.write_multiple(
                registers::TARGET_FORCE.address,
                &[
                    registers::TARGET_FORCE.encode(self.desired_force),
                    registers::PAYLOAD.encode(self.payload),
                    registers::CONTACT_RAMP.encode(self.contact_ramp),
                ],
            )?;
            self.config_dirty = false;
            if self.phase == SupervisorPhase::Idle {
                self.phase = SupervisorPhase::Configured;
            }
        }
        if self.phase == SupervisorPhase::Idle {
            return Ok(());
        }
        let enable = self.enable_request && !faulted;
        if self.enable_written != Some(enable) {
            link.write_single(registers::ENABLE.address, enable as u16)?;
            self.enable_written = Some(enable);
        }

        let regs = link.read_input(0, INPUT_COUNT)?;
        let inputs = AcfInputs::from_registers(&regs).ok_or(ClientError::UnexpectedResponse)?;
        self.last_read = inputs.into();
        if inputs.error_code != 0 {
            if self.phase != SupervisorPhase::Faulted {
                alarms.push(Alarm::AcfError {
                    code: inputs.error_code,
                });
            }
            self.phase = SupervisorPhase::Faulted;
        } else if self.phase == SupervisorPhase::Faulted {
            // Cleared by acknowledgment; reconfigure on the next tick.
            self.phase = SupervisorPhase::Configured;
        } else {
            self.phase = SupervisorPhase::Monitoring;
        }
        Ok(())
    }
}

/// Value-returning form of [`ForceSupervisorState::step`].
pub fn force_supervisor_step(
    f: &ForceSupervisorState,
    link: &mut dyn RegisterTransport,
) -> (ForceSupervisorState, Vec<Alarm>) {
    let mut next = f.clone();
    let alarms = next.step(link);
    (next, alarms)
}
