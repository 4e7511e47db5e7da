#![allow(dead_code)]

use atl_core::runtime::{
    run_job, CommandSource, EventKind, RunConfig, RunSummary, ScriptedCommands, Simulation, TraceEvent, TraceRecord,
    Transport,
};

pub const SCENARIO: &str = include_str!("../../../../configs/plane_three_tracks.json");

/// The shipped three-track plane scenario over real sockets on an ephemeral port.
pub fn scenario() -> RunConfig {
    RunConfig::from_json(SCENARIO).expect("shipped scenario is valid")
}

/// Same scenario without sockets.
pub fn scenario_loopback() -> RunConfig {
    let mut cfg = scenario();
    cfg.modbus.transport = Transport::Loopback;
    cfg
}

pub struct Run {
    pub summary: RunSummary,
    pub records: Vec<TraceRecord>,
    pub events: Vec<TraceEvent>,
}

impl Run {
    pub fn transitions(&self) -> Vec<(u64, atl_core::sequencer::Phase)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Transition { to, .. } => Some((e.tick, to)),
                _ => None,
            })
            .collect()
    }

    /// First tick whose record shows `phase`.
    pub fn first_in(&self, phase: atl_core::sequencer::Phase) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.state == phase)
    }
}

pub fn run(cfg: RunConfig, source: &mut dyn CommandSource) -> Run {
    let mut sim = Simulation::new(cfg).expect("simulation builds");
    run_sim(&mut sim, source)
}

pub fn run_sim(sim: &mut Simulation, source: &mut dyn CommandSource) -> Run {
    let mut records = Vec::new();
    let mut events = Vec::new();
    let summary = run_job(sim, source, |o| {
        records.push(o.record.clone());
        events.extend(o.events.iter().cloned());
    });
    Run {
        summary,
        records,
        events,
    }
}

pub fn run_scenario() -> Run {
    run(scenario_loopback(), &mut ScriptedCommands::start())
}
