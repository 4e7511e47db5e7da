//! Temperature loops and the force-device supervisor.

pub mod pid;
pub mod supervisor;
pub mod tuning;

pub use pid::{pid_step, PidGains, PidState};
pub use supervisor::{force_supervisor_step, ForceSupervisorState, LastRead, SupervisorPhase};
pub use tuning::{pid_tune_defaults, TuningError};
