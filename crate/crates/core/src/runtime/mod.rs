//! Configuration, the simulated cell, and trace output.

pub mod api;
pub mod config;
pub mod motion;
pub mod run;
pub mod sim;
pub mod trace;

pub use api::{ApiError, CommandAck, StateSnapshot};
pub use config::{load_config, ConfigError, RunConfig, Transport};
pub use run::{
    run_job, run_to_file, run_with_writer, CommandSource, Input, Outcome, RunError, RunSummary, ScheduledInput,
    ScriptedCommands, TrackSummary,
};
pub use sim::{Disturbance, SimError, Simulation, TickOutput};
pub use trace::{events_path, read_trace, EventKind, IoImage, TraceEvent, TraceRecord, TraceWriter};
