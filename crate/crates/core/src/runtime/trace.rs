//! Per-tick trace rows (CSV) and structured events (JSON lines).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarm::Alarm;
use crate::sequencer::{OperatorCommand, Phase, Refusal};

/// Snapshot of the plant-side I/O exchanged once per control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IoImage {
    pub feed_valve: bool,
    pub blade_valve: bool,
    pub heater_enable: [bool; 3],
    pub auto_switch_rear: bool,
    pub auto_switch_front: bool,
    /// °C
    pub zone_temp: [f64; 3],
    /// W
    pub heater_power_cmd: [f64; 3],
}

/// One row per control tick. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub t: f64,
    pub state: Phase,
    pub track: usize,
    pub s_progress: f64,
    pub advance: bool,
    pub feed_valve: bool,
    pub blade_valve: bool,
    pub heater_enable_0: bool,
    pub heater_enable_1: bool,
    pub heater_enable_2: bool,
    pub auto_switch_rear: bool,
    pub auto_switch_front: bool,
    pub zone_temp_0: f64,
    pub zone_temp_1: f64,
    pub zone_temp_2: f64,
    pub heater_power_cmd_0: f64,
    pub heater_power_cmd_1: f64,
    pub heater_power_cmd_2: f64,
    pub setpoint_0: f64,
    pub setpoint_1: f64,
    pub setpoint_2: f64,
    pub acf_enabled: bool,
    pub acf_target_force: f64,
    pub acf_actual_force: f64,
    pub acf_stroke: f64,
    pub acf_contact: bool,
    pub acf_error: u16,
    pub spool_remaining: f64,
    pub fed_length: f64,
    pub tip_offset: f64,
    pub tail_remaining: f64,
    pub laid_length: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub q5: f64,
    pub q6: f64,
}

impl TraceRecord {
    pub fn io(&self) -> IoImage {
        IoImage {
            feed_valve: self.feed_valve,
            blade_valve: self.blade_valve,
            heater_enable: [self.heater_enable_0, self.heater_enable_1, self.heater_enable_2],
            auto_switch_rear: self.auto_switch_rear,
            auto_switch_front: self.auto_switch_front,
            zone_temp: [self.zone_temp_0, self.zone_temp_1, self.zone_temp_2],
            heater_power_cmd: [self.heater_power_cmd_0, self.heater_power_cmd_1, self.heater_power_cmd_2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Transition { from: Phase, to: Phase },
    Alarm { alarm: Alarm },
    Command { command: OperatorCommand },
    Refusal { refusal: Refusal },
    Note { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Sidecar path for the events of a trace file: `run.csv` → `run.events.jsonl`.
pub fn events_path(trace: &Path) -> PathBuf {
    trace.with_extension("events.jsonl")
}

pub struct TraceWriter<W: Write> {
    rows: csv::Writer<W>,
    events: W,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        let rows = BufWriter::new(File::create(path)?);
        let events = BufWriter::new(File::create(events_path(path))?);
        Ok(Self::new(rows, events))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(rows: W, events: W) -> Self {
        Self {
            rows: csv::Writer::from_writer(rows),
            events,
        }
    }

    pub fn record(&mut self, r: &TraceRecord) -> io::Result<()> {
        self.rows.serialize(r).map_err(io::Error::other)
    }

    pub fn event(&mut self, e: &TraceEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.events, e)?;
        self.events.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.rows.flush()?;
        self.events.flush()
    }
}

/// Reads a trace CSV back into records.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
