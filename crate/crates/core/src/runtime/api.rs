//! JSON payloads of the HTTP/WS API. Documented in `docs/api.schema.json`.

use serde::{Deserialize, Serialize};

use super::sim::Simulation;
use super::trace::TraceRecord;
use crate::alarm::Alarm;
use crate::sequencer::Phase;

/// `GET /state` and every `/stream` frame: the last completed tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Row of the last completed tick, or the initial state before any.
    pub record: TraceRecord,
    /// Control ticks run so far. The next row has this tick number.
    pub ticks_completed: u64,
    pub phase: Phase,
    /// Latched alarms, cleared by `ack_fault`.
    pub alarms: Vec<Alarm>,
    pub manual_busy: bool,
    pub heaters_on: bool,
    pub job_complete: bool,
    pub current_track: usize,
    pub track_count: usize,
    pub fault_count: usize,
    pub time_in_window: f64,
    /// Commands accepted but not yet applied.
    pub pending_commands: usize,
}

impl StateSnapshot {
    pub fn of(sim: &Simulation) -> Self {
        let seq = sim.sequencer();
        Self {
            record: sim.last_record().clone(),
            ticks_completed: sim.tick_count(),
            phase: seq.phase,
            alarms: seq.alarms.clone(),
            manual_busy: seq.manual.is_some(),
            heaters_on: seq.heaters_on,
            job_complete: seq.job_complete,
            current_track: seq.current_track,
            track_count: sim.job().tracks.len(),
            fault_count: sim.fault_count(),
            time_in_window: sim.time_in_window(),
            pending_commands: sim.pending_commands(),
        }
    }
}

/// Reply to an accepted `POST /command`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub queued: bool,
    pub command: String,
    /// `ticks_completed` when the command was queued.
    pub ticks_completed: u64,
    /// Tick whose trace row first reflects the command.
    pub applies_at_tick: u64,
}

/// Body of 400 replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
}
