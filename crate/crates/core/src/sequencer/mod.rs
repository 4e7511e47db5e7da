//! Process sequencing: job definition, operator commands and the state machine.

pub mod command;
pub mod job;
pub mod machine;

pub use command::{check_command, OperatorCommand, Refusal};
pub use job::{job_plan, Job, JobError, JobTrack, ProcessWindow};
pub use machine::{
    sequencer_step, ManualOp, MoldTarget, Phase, SequencerCommands, SequencerInputs, SequencerParams,
    SequencerState,
};
