//! Subcommands of the `atl` binary.

pub mod server;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use atl_core::planner::{plan_mold_trajectory, write_plan_csv, MoldTrajectory};
use atl_core::runtime::{
    load_config, run_job, EventKind, Outcome, RunConfig, RunSummary, ScriptedCommands, Simulation, TraceWriter,
};

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    load_config(path).with_context(|| format!("config {}", path.display()))
}

/// Trajectories of every track at the control period.
pub fn plan_all(cfg: &RunConfig) -> anyhow::Result<Vec<MoldTrajectory>> {
    cfg.tracks
        .iter()
        .map(|t| {
            plan_mold_trajectory(
                t,
                &cfg.surface,
                &cfg.nip,
                cfg.window.feed_speed,
                cfg.control_period,
                &cfg.kinematics,
                &cfg.ik,
            )
            .with_context(|| format!("planning track {}", t.index))
        })
        .collect()
}

pub fn validate(path: &Path) -> anyhow::Result<String> {
    let cfg = load(path)?;
    let job = cfg.job()?;
    let trajs = plan_all(&cfg)?;
    let samples: usize = trajs.iter().map(|t| t.len()).sum();
    Ok(format!(
        "{}: ok ({} tracks, {:.3} m of tape, {samples} trajectory samples)",
        path.display(),
        job.tracks.len(),
        job.total_requirement()
    ))
}

pub fn plan(config: &Path, out: &Path) -> anyhow::Result<usize> {
    let cfg = load(config)?;
    let trajs = plan_all(&cfg)?;
    let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_plan_csv(&trajs, BufWriter::new(f))?;
    Ok(trajs.iter().map(|t| t.len()).sum())
}

pub fn commands_from(path: Option<&Path>) -> anyhow::Result<ScriptedCommands> {
    match path {
        None => Ok(ScriptedCommands::start()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScriptedCommands::from_json(&text).with_context(|| format!("commands {}", p.display()))
        }
    }
}

/// Runs as fast as possible. Without `quiet`, transitions and alarms go to
/// stderr as they happen.
pub fn run(cfg: RunConfig, commands: &mut ScriptedCommands, trace: Option<&Path>, quiet: bool) -> anyhow::Result<RunSummary> {
    let mut writer = match trace {
        Some(p) => Some(TraceWriter::create(p).with_context(|| format!("creating trace {}", p.display()))?),
        None => None,
    };
    let mut sim = Simulation::new(cfg)?;
    let mut io_err = None;
    let summary = run_job(&mut sim, commands, |out| {
        if let (Some(w), None) = (writer.as_mut(), &io_err) {
            let r = w.record(&out.record).and_then(|_| out.events.iter().try_for_each(|e| w.event(e)));
            io_err = r.err();
        }
        if quiet {
            return;
        }
        for e in &out.events {
            match &e.kind {
                EventKind::Transition { from, to } => eprintln!("{:9.2} s  {from:?} -> {to:?}", e.t),
                EventKind::Alarm { alarm } => eprintln!("{:9.2} s  alarm {alarm:?}", e.t),
                EventKind::Refusal { refusal } => {
                    eprintln!("{:9.2} s  refused {}: {}", e.t, refusal.command, refusal.reason)
                }
                _ => {}
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e).context("writing trace");
    }
    if let Some(w) = writer.as_mut() {
        w.flush().context("writing trace")?;
    }
    Ok(summary)
}

/// Completed, stopped on request, or never started.
pub fn success(outcome: Outcome) -> bool {
    matches!(outcome, Outcome::Completed | Outcome::Stopped | Outcome::NotStarted)
}
