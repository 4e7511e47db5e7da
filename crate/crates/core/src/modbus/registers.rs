//! Register map of the force device. Client and server both use this table,
//! so scaling cannot drift between the two sides.

use super::codec::ExceptionCode;
use crate::plant::{acf_reset, AcfError, AcfState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterKind {
    Holding,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterDef {
    pub name: &'static str,
    pub kind: RegisterKind,
    pub address: u16,
    pub unit: &'static str,
    /// Raw counts per engineering unit.
    pub scale: f64,
}

impl RegisterDef {
    pub fn encode(&self, value: f64) -> u16 {
        to_register(value, self.scale)
    }

    pub fn decode(&self, raw: u16) -> f64 {
        raw as f64 / self.scale
    }
}

pub fn to_register(value: f64, scale: f64) -> u16 {
    let raw = (value * scale).round();
    if raw.is_nan() {
        0
    } else {
        raw.clamp(0.0, u16::MAX as f64) as u16
    }
}

pub const TARGET_FORCE: RegisterDef = RegisterDef {
    name: "target_force",
    kind: RegisterKind::Holding,
    address: 0,
    unit: "N",
    scale: 10.0,
};
pub const PAYLOAD: RegisterDef = RegisterDef {
    name: "payload",
    kind: RegisterKind::Holding,
    address: 1,
    unit: "kg",
    scale: 100.0,
};
pub const CONTACT_RAMP: RegisterDef = RegisterDef {
    name: "contact_ramp",
    kind: RegisterKind::Holding,
    address: 2,
    unit: "N/s",
    scale: 10.0,
};
pub const ENABLE: RegisterDef = RegisterDef {
    name: "enable",
    kind: RegisterKind::Holding,
    address: 3,
    unit: "bool",
    scale: 1.0,
};
pub const ERROR_ACK: RegisterDef = RegisterDef {
    name: "error_ack",
    kind: RegisterKind::Holding,
    address: 4,
    unit: "bool",
    scale: 1.0,
};
pub const STROKE: RegisterDef = RegisterDef {
    name: "stroke",
    kind: RegisterKind::Input,
    address: 0,
    unit: "mm",
    scale: 10.0,
};
pub const CONTACT: RegisterDef = RegisterDef {
    name: "contact",
    kind: RegisterKind::Input,
    address: 1,
    unit: "bool",
    scale: 1.0,
};
pub const ERROR_CODE: RegisterDef = RegisterDef {
    name: "error_code",
    kind: RegisterKind::Input,
    address: 2,
    unit: "code",
    scale: 1.0,
};
pub const ACTUAL_FORCE: RegisterDef = RegisterDef {
    name: "actual_force",
    kind: RegisterKind::Input,
    address: 3,
    unit: "N",
    scale: 10.0,
};

pub const REGISTER_TABLE: [RegisterDef; 9] = [
    TARGET_FORCE,
    PAYLOAD,
    CONTACT_RAMP,
    ENABLE,
    ERROR_ACK,
    STROKE,
    CONTACT,
    ERROR_CODE,
    ACTUAL_FORCE,
];

pub const HOLDING_COUNT: u16 = 5;
pub const INPUT_COUNT: u16 = 4;

/// Decoded snapshot of the four input registers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcfInputs {
    pub stroke: f64,
    pub contact: bool,
    pub error_code: u16,
    pub actual_force: f64,
}

impl AcfInputs {
    pub fn from_registers(regs: &[u16]) -> Option<Self> {
        if regs.len() < INPUT_COUNT as usize {
            return None;
        }
        Some(Self {
            stroke: STROKE.decode(regs[0]),
            contact: regs[1] != 0,
            error_code: regs[2],
            actual_force: ACTUAL_FORCE.decode(regs[3]),
        })
    }
}

/// Register view over the simulated device.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfDevice {
    pub state: AcfState,
}

fn range(address: u16, quantity: u16, count: u16) -> Result<std::ops::Range<usize>, ExceptionCode> {
    let end = address as u32 + quantity as u32;
    if quantity == 0 || end > count as u32 {
        return Err(ExceptionCode::ILLEGAL_DATA_ADDRESS);
    }
    Ok(address as usize..end as usize)
}

impl AcfDevice {
    pub fn new(state: AcfState) -> Self {
        Self { state }
    }

    pub fn holding_image(&self) -> [u16; HOLDING_COUNT as usize] {
        let s = &self.state;
        [
            TARGET_FORCE.encode(s.target_force),
            PAYLOAD.encode(s.payload),
            CONTACT_RAMP.encode(s.contact_ramp),
            s.enabled as u16,
            0,
        ]
    }

    pub fn input_image(&self) -> [u16; INPUT_COUNT as usize] {
        let s = &self.state;
        [
            STROKE.encode(s.stroke),
            s.contact as u16,
            s.error_code.code(),
            ACTUAL_FORCE.encode(s.actual_force),
        ]
    }

    pub fn read_holding(&self, address: u16, quantity: u16) -> Result<Vec<u16>, ExceptionCode> {
        let r = range(address, quantity, HOLDING_COUNT)?;
        Ok(self.holding_image()[r].to_vec())
    }

    pub fn read_input(&self, address: u16, quantity: u16) -> Result<Vec<u16>, ExceptionCode> {
        let r = range(address, quantity, INPUT_COUNT)?;
        Ok(self.input_image()[r].to_vec())
    }

    fn check_value(address: u16, value: u16) -> Result<(), ExceptionCode> {
        if (address == ENABLE.address || address == ERROR_ACK.address) && value > 1 {
            return Err(ExceptionCode::ILLEGAL_DATA_VALUE);
        }
        Ok(())
    }

    fn apply(&mut self, address: u16, value: u16) {
        match address {
            a if a == TARGET_FORCE.address => self.state.target_force = TARGET_FORCE.decode(value),
            a if a == PAYLOAD.address => self.state.payload = PAYLOAD.decode(value),
            a if a == CONTACT_RAMP.address => self.state.contact_ramp = CONTACT_RAMP.decode(value),
            a if a == ENABLE.address => self.state.enabled = value != 0,
            a if a == ERROR_ACK.address => {
                if value != 0 && self.state.error_code != AcfError::None {
                    self.state = acf_reset(&self.state);
                }
            }
            _ => unreachable!("address checked against the holding range"),
        }
    }

    pub fn write_single(&mut self, address: u16, value: u16) -> Result<(), ExceptionCode> {
        range(address, 1, HOLDING_COUNT)?;
        Self::check_value(address, value)?;
        self.apply(address, value);
        Ok(())
    }

    /// All-or-nothing: every value is checked before any is applied.
    pub fn write_multiple(&mut self, address: u16, values: &[u16]) -> Result<(), ExceptionCode> {
        let q = u16::try_from(values.len()).map_err(|_| ExceptionCode::ILLEGAL_DATA_VALUE)?;
        range(address, q, HOLDING_COUNT)?;
        for (i, &v) in values.iter().enumerate() {
            Self::check_value(address + i as u16, v)?;
        }
        for (i, &v) in values.iter().enumerate() {
            self.apply(address + i as u16, v);
        }
        Ok(())
    }
}
