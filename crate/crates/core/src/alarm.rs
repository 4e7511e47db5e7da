use serde::{Deserialize, Serialize};

/// Conditions that force the sequencer into Fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alarm {
    /// Force device reported a nonzero error register.
    AcfError { code: u16 },
    /// No Modbus reply within the configured timeout.
    CommTimeout,
    /// Device answered with an exception or an unexpected reply.
    CommError { detail: String },
    TemperatureOutOfWindow { zone: usize, temperature: f64 },
    ContactLost,
    ForceBelowMinimum { force: f64 },
    SpoolShort { required: f64, remaining: f64 },
    SpoolEmpty,
    Interlock { detail: String },
    Motion { detail: String },
}

impl Alarm {
    pub fn label(&self) -> &'static str {
        match self {
            Alarm::AcfError { .. } => "acf_error",
            Alarm::CommTimeout => "comm_timeout",
            Alarm::CommError { .. } => "comm_error",
            Alarm::TemperatureOutOfWindow { .. } => "temperature_out_of_window",
            Alarm::ContactLost => "contact_lost",
            Alarm::ForceBelowMinimum { .. } => "force_below_minimum",
            Alarm::SpoolShort { .. } => "spool_short",
            Alarm::SpoolEmpty => "spool_empty",
            Alarm::Interlock { .. } => "interlock",
            Alarm::Motion { .. } => "motion",
        }
    }
}
