//! Headless job runs.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::sim::{Disturbance, SimError, Simulation, TickOutput};
use super::trace::TraceWriter;
use crate::alarm::Alarm;
use crate::sequencer::{OperatorCommand, Phase};

/// Something that hands operator input to the loop at tick boundaries.
pub trait CommandSource {
    fn poll(&mut self, t: f64, tick: u64) -> Vec<Input>;

    /// True once the source will never produce anything again.
    fn finished(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Command(OperatorCommand),
    Disturbance { inject: Disturbance },
}

impl From<OperatorCommand> for Input {
    fn from(c: OperatorCommand) -> Self {
        Input::Command(c)
    }
}

impl From<Disturbance> for Input {
    fn from(d: Disturbance) -> Self {
        Input::Disturbance { inject: d }
    }
}

/// Inputs due at fixed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledInput {
    /// s
    pub at: f64,
    #[serde(flatten)]
    pub input: Input,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedCommands {
    pending: VecDeque<ScheduledInput>,
}

impl ScriptedCommands {
    pub fn new(mut items: Vec<ScheduledInput>) -> Self {
        items.sort_by(|a, b| a.at.total_cmp(&b.at));
        Self { pending: items.into() }
    }

    /// Just a start at t = 0.
    pub fn start() -> Self {
        Self::new(vec![ScheduledInput {
            at: 0.0,
            input: OperatorCommand::Start.into(),
        }])
    }

    pub fn then(mut self, at: f64, input: impl Into<Input>) -> Self {
        let mut v: Vec<_> = self.pending.drain(..).collect();
        v.push(ScheduledInput { at, input: input.into() });
        Self::new(v)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }
}

impl CommandSource for ScriptedCommands {
    fn poll(&mut self, t: f64, _tick: u64) -> Vec<Input> {
        let mut out = Vec::new();
        // Half-tick slack so that `at = k·T` lands on tick k despite rounding.
        while self.pending.front().is_some_and(|c| c.at <= t + 1e-9) {
            out.push(self.pending.pop_front().expect("checked").input);
        }
        out
    }

    fn finished(&self) -> bool {
        self.pending.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Stopped,
    NotStarted,
    FaultTimeout,
    MaxTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub index: usize,
    pub length: f64,
    pub laid_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub sim_time: f64,
    pub ticks: u64,
    pub tracks: Vec<TrackSummary>,
    pub time_in_window: f64,
    pub fault_count: usize,
    pub alarms: Vec<Alarm>,
}

/// Steps `sim` until the job completes, a stop has settled, a fault outlives
/// `process.fault_timeout`, or `process.max_time` passes. `sink` sees every tick.
pub fn run_job(
    sim: &mut Simulation,
    source: &mut dyn CommandSource,
    mut sink: impl FnMut(&TickOutput),
) -> RunSummary {
    let process = sim.config().process.clone();
    let retracted = sim.config().sequencer_params().retracted_stroke;
    let mut started = false;
    let mut fault_since: Option<f64> = None;
    let mut alarms = Vec::new();

    let outcome = loop {
        let t = sim.time();
        if t >= process.max_time {
            break Outcome::MaxTime;
        }
        for input in source.poll(t, sim.tick_count()) {
            match input {
                Input::Command(c) => sim.enqueue(c),
                Input::Disturbance { inject } => sim.inject(inject),
            }
        }
        let out = sim.step();
        for e in &out.events {
            if let super::trace::EventKind::Alarm { alarm } = &e.kind {
                alarms.push(alarm.clone());
            }
        }
        sink(&out);

        let seq = sim.sequencer();
        if seq.phase != Phase::Idle {
            started = true;
        }
        if seq.phase == Phase::Fault {
            let since = *fault_since.get_or_insert(sim.time());
            if sim.time() - since > process.fault_timeout {
                break Outcome::FaultTimeout;
            }
        } else {
            fault_since = None;
        }
        let idle = seq.phase == Phase::Idle && seq.manual.is_none() && sim.pending_commands() == 0;
        if idle && started && sim.acf().stroke <= retracted {
            if seq.job_complete {
                break Outcome::Completed;
            }
            if source.finished() {
                break Outcome::Stopped;
            }
        }
        if idle && !started && source.finished() {
            break Outcome::NotStarted;
        }
    };

    RunSummary {
        outcome,
        sim_time: sim.time(),
        ticks: sim.tick_count(),
        tracks: sim
            .job()
            .tracks
            .iter()
            .map(|t| TrackSummary {
                index: t.index,
                length: t.length,
                laid_length: sim.tape().laid_on(t.index),
            })
            .collect(),
        time_in_window: sim.time_in_window(),
        fault_count: sim.fault_count(),
        alarms,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trace: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs a job and writes the trace through `writer`.
pub fn run_with_writer<W: Write>(
    cfg: RunConfig,
    source: &mut dyn CommandSource,
    writer: &mut TraceWriter<W>,
) -> Result<RunSummary, RunError> {
    let mut sim = Simulation::new(cfg)?;
    let mut io_err = None;
    let summary = run_job(&mut sim, source, |out| {
        if io_err.is_some() {
            return;
        }
        let r = writer
            .record(&out.record)
            .and_then(|_| out.events.iter().try_for_each(|e| writer.event(e)));
        if let Err(e) = r {
            io_err = Some(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    writer.flush()?;
    Ok(summary)
}

/// Runs a job with the trace written to `trace` and its events beside it.
pub fn run_to_file(cfg: RunConfig, source: &mut dyn CommandSource, trace: &Path) -> Result<RunSummary, RunError> {
    let mut writer = TraceWriter::create(trace)?;
    run_with_writer(cfg, source, &mut writer)
}
