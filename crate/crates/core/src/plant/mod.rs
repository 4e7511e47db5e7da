//! Physical models of everything the controllers act on.

pub mod acf;
pub mod pneumatics;
pub mod tape;
pub mod thermal;

pub use acf::{acf_reset, acf_step, AcfError, AcfParams, AcfState};
pub use pneumatics::{
    pneumatic_step, BladePhase, CylinderPhase, PneumaticError, PneumaticParams, PneumaticState,
    ValveCommand,
};
pub use tape::{tape_step, LaidSegment, TapeError, TapeState, TapeStepOutcome};
pub use thermal::{thermal_step, ThermalParams, ThermalZoneState};
