//! Process state machine for one job: feed, heat, approach, tape, cut ahead,
//! finish the tail, retract, index to the next track.
//!
//! The transition function is pure. It reads a snapshot of the process and
//! returns the next state together with the commands for this tick.

use serde::{Deserialize, Serialize};

use super::command::{check_command, OperatorCommand, Refusal};
use super::job::{Job, ProcessWindow};
use crate::alarm::Alarm;
use crate::control::LastRead;
use crate::plant::{BladePhase, ValveCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Feeding,
    Heating,
    Approaching,
    Taping,
    Cutting,
    FinishingTail,
    Retracting,
    Indexing,
    Fault,
}

impl Phase {
    pub const ALL: [Phase; 10] = [
        Phase::Idle,
        Phase::Feeding,
        Phase::Heating,
        Phase::Approaching,
        Phase::Taping,
        Phase::Cutting,
        Phase::FinishingTail,
        Phase::Retracting,
        Phase::Indexing,
        Phase::Fault,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Feeding => "feeding",
            Phase::Heating => "heating",
            Phase::Approaching => "approaching",
            Phase::Taping => "taping",
            Phase::Cutting => "cutting",
            Phase::FinishingTail => "finishing_tail",
            Phase::Retracting => "retracting",
            Phase::Indexing => "indexing",
            Phase::Fault => "fault",
        }
    }

    /// Phases in which the mold may travel along the track.
    pub fn consolidating(self) -> bool {
        matches!(self, Phase::Taping | Phase::Cutting | Phase::FinishingTail)
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where the mold should be. `Raised` is the pose for arc length `s`
/// lifted off the roller by the configured clearance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MoldTarget {
    Hold,
    Raised { track: usize, s: f64 },
    Lowered { track: usize, s: f64 },
    /// Track pose at the current `s_progress`.
    Follow { track: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualOp {
    Feed,
    Cut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequencerParams {
    /// Control period, s.
    pub dt: f64,
    pub cutter_to_nip: f64,
    /// Time both main zones must stay in the window before approaching, s.
    pub heat_settle_time: f64,
    /// ACF stroke regarded as fully retracted, mm.
    pub retracted_stroke: f64,
}

/// Everything the sequencer reads in one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencerInputs {
    pub command: Option<OperatorCommand>,
    pub auto_switch_rear: bool,
    pub auto_switch_front: bool,
    pub blade: BladePhase,
    /// Preheat, tape and substrate zone temperatures, °C.
    pub zone_temps: [f64; 3],
    pub acf: LastRead,
    pub tail_pending: bool,
    pub spool_remaining: f64,
    /// Target the mold motion has settled on, if any.
    pub motion_reached: Option<MoldTarget>,
    pub alarms: Vec<Alarm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencerCommands {
    pub valves: ValveCommand,
    pub heaters_on: bool,
    pub acf_enable: bool,
    pub advance: bool,
    pub mold: MoldTarget,
    pub begin_segment: Option<(usize, f64)>,
    pub end_segment: bool,
    pub jog: Option<[f64; 3]>,
    /// Forward an error acknowledgment to the force device.
    pub ack_device: bool,
    pub refusal: Option<Refusal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencerState {
    pub phase: Phase,
    pub current_track: usize,
    /// Arc length the mold has been commanded to, m.
    pub s_progress: f64,
    /// Latched alarms, cleared by acknowledgment.
    pub alarms: Vec<Alarm>,
    pub heaters_on: bool,
    pub job_complete: bool,
    /// Time spent in the current phase, s.
    pub phase_time: f64,
    pub stage: u8,
    pub manual: Option<(ManualOp, u8)>,
    settle_time: f64,
    segment_open: bool,
}

impl Default for SequencerState {
    fn default() -> Self {
        Self::new()
    }
}

const MAIN_ZONES: [usize; 2] = [1, 2];

impl SequencerState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Idle,
            current_track: 0,
            s_progress: 0.0,
            alarms: Vec::new(),
            heaters_on: false,
            job_complete: false,
            phase_time: 0.0,
            stage: 0,
            manual: None,
            settle_time: 0.0,
            segment_open: false,
        }
    }

    pub fn segment_open(&self) -> bool {
        self.segment_open
    }

    /// Time the main zones have been continuously in window while heating, s.
    pub fn settle_time(&self) -> f64 {
        self.settle_time
    }

    fn enter(&mut self, phase: Phase) {
        log::debug!("sequencer {} -> {}", self.phase, phase);
        self.phase = phase;
        self.stage = 0;
        self.phase_time = 0.0;
        self.settle_time = 0.0;
    }

    fn close_segment(&mut self, cmd: &mut SequencerCommands) {
        if self.segment_open {
            self.segment_open = false;
            cmd.end_segment = true;
        }
    }

    fn fault(&mut self, alarms: impl IntoIterator<Item = Alarm>, cmd: &mut SequencerCommands) {
        self.alarms.extend(alarms);
        if self.phase != Phase::Fault {
            log::warn!("sequencer fault in {}: {:?}", self.phase, self.alarms);
            self.close_segment(cmd);
            self.manual = None;
            self.enter(Phase::Fault);
        }
    }

    fn main_temps_ok(window: &ProcessWindow, inputs: &SequencerInputs) -> Result<(), Alarm> {
        for z in MAIN_ZONES {
            let t = inputs.zone_temps[z];
            if !window.temp_ok(t) {
                return Err(Alarm::TemperatureOutOfWindow { zone: z, temperature: t });
            }
        }
        Ok(())
    }

    fn consolidation_ok(window: &ProcessWindow, inputs: &SequencerInputs) -> Result<(), Alarm> {
        if !inputs.acf.contact {
            return Err(Alarm::ContactLost);
        }
        if inputs.acf.actual_force < window.min_force {
            return Err(Alarm::ForceBelowMinimum {
                force: inputs.acf.actual_force,
            });
        }
        Self::main_temps_ok(window, inputs)
    }

    fn acf_retracted(inputs: &SequencerInputs, params: &SequencerParams) -> bool {
        !inputs.acf.contact && inputs.acf.stroke <= params.retracted_stroke
    }

    fn handle_command(&mut self, cmd_in: &OperatorCommand, inputs: &SequencerInputs, job: &Job, cmd: &mut SequencerCommands) {
        if let Err(r) = check_command(self.phase, self.manual.is_some(), cmd_in) {
            log::info!("refused {}: {}", r.command, r.reason);
            cmd.refusal = Some(r);
            return;
        }
        match cmd_in {
            OperatorCommand::Stop => {
                self.heaters_on = false;
                if self.phase != Phase::Fault {
                    self.close_segment(cmd);
                    self.manual = None;
                    self.enter(Phase::Idle);
                }
            }
            OperatorCommand::AckFault => {
                self.alarms.clear();
                cmd.ack_device = true;
                self.enter(Phase::Idle);
            }
            OperatorCommand::Start => {
                if self.job_complete || self.current_track >= job.len() {
                    self.current_track = 0;
                    self.job_complete = false;
                }
                self.s_progress = 0.0;
                if job.is_empty() {
                    self.job_complete = true;
                    return;
                }
                if let Err(a) = job.check_spool(self.current_track, inputs.spool_remaining) {
                    self.fault([a], cmd);
                    return;
                }
                self.heaters_on = true;
                self.enter(Phase::Feeding);
            }
            OperatorCommand::ManualFeed => self.manual = Some((ManualOp::Feed, 0)),
            OperatorCommand::ManualCut => self.manual = Some((ManualOp::Cut, 0)),
            OperatorCommand::Jog { dx, dy, dz } => cmd.jog = Some([*dx, *dy, *dz]),
            // Setpoints, force and gains are applied by the runtime.
            _ => {}
        }
    }

    fn run_manual(&mut self, inputs: &SequencerInputs, cmd: &mut SequencerCommands) {
        let Some((op, stage)) = self.manual else { return };
        let next = match (op, stage) {
            (ManualOp::Feed, 0) => (inputs.auto_switch_rear && inputs.blade == BladePhase::Retracted).then_some(1),
            (ManualOp::Feed, _) => {
                if inputs.auto_switch_front {
                    None
                } else {
                    cmd.valves.feed_valve = true;
                    Some(1)
                }
            }
            (ManualOp::Cut, 0) => {
                if inputs.blade == BladePhase::Extended {
                    Some(1)
                } else {
                    cmd.valves.blade_valve = true;
                    Some(0)
                }
            }
            (ManualOp::Cut, _) => (inputs.blade != BladePhase::Retracted).then_some(1),
        };
        self.manual = match (op, stage, next) {
            (ManualOp::Feed, 0, None) => Some((op, 0)),
            (_, _, Some(s)) => Some((op, s)),
            (_, _, None) => None,
        };
    }

    /// One control tick.
    pub fn step(
        &mut self,
        inputs: &SequencerInputs,
        window: &ProcessWindow,
        job: &Job,
        params: &SequencerParams,
    ) -> SequencerCommands {
        let mut cmd = SequencerCommands {
            valves: ValveCommand::default(),
            heaters_on: self.heaters_on,
            acf_enable: false,
            advance: false,
            mold: MoldTarget::Hold,
            begin_segment: None,
            end_segment: false,
            jog: None,
            ack_device: false,
            refusal: None,
        };
        self.phase_time += params.dt;

        if let Some(c) = &inputs.command {
            self.handle_command(c, inputs, job, &mut cmd);
        }
        if !inputs.alarms.is_empty() {
            self.fault(inputs.alarms.iter().cloned(), &mut cmd);
        }

        let track = self.current_track;
        let length = job.tracks.get(track).map_or(0.0, |t| t.length);
        match self.phase {
            Phase::Idle => self.run_manual(inputs, &mut cmd),
            Phase::Fault => {}
            Phase::Feeding => {
                if Self::acf_retracted(inputs, params) {
                    cmd.mold = MoldTarget::Raised { track, s: 0.0 };
                }
                if self.stage == 0 && inputs.auto_switch_rear && inputs.blade == BladePhase::Retracted {
                    self.stage = 1;
                }
                if self.stage == 1 {
                    if inputs.auto_switch_front {
                        self.enter(Phase::Heating);
                    } else {
                        cmd.valves.feed_valve = true;
                    }
                }
            }
            Phase::Heating => {
                let target = MoldTarget::Raised { track, s: 0.0 };
                cmd.mold = target;
                if Self::main_temps_ok(window, inputs).is_ok() {
                    self.settle_time += params.dt;
                } else {
                    self.settle_time = 0.0;
                }
                if self.settle_time >= params.heat_settle_time - 1e-12 && inputs.motion_reached == Some(target) {
                    self.enter(Phase::Approaching);
                    cmd.mold = MoldTarget::Lowered { track, s: 0.0 };
                }
            }
            Phase::Approaching => {
                let target = MoldTarget::Lowered { track, s: 0.0 };
                cmd.mold = target;
                if self.stage == 0 && inputs.motion_reached == Some(target) {
                    self.stage = 1;
                }
                if self.stage == 1 {
                    cmd.acf_enable = true;
                    if Self::consolidation_ok(window, inputs).is_ok() {
                        self.enter(Phase::Taping);
                        self.segment_open = true;
                        cmd.begin_segment = Some((track, self.s_progress));
                        cmd.mold = MoldTarget::Follow { track };
                        self.advance(window, params, &mut cmd);
                    }
                }
            }
            Phase::Taping | Phase::Cutting | Phase::FinishingTail => {
                cmd.acf_enable = true;
                cmd.mold = MoldTarget::Follow { track };
                if let Err(a) = Self::consolidation_ok(window, inputs) {
                    self.fault([a], &mut cmd);
                    cmd.acf_enable = false;
                    cmd.mold = MoldTarget::Hold;
                } else {
                    self.consolidate(inputs, window, params, length, &mut cmd);
                }
            }
            Phase::Retracting => {
                cmd.mold = MoldTarget::Follow { track };
                if Self::acf_retracted(inputs, params) {
                    let target = MoldTarget::Raised { track, s: self.s_progress };
                    cmd.mold = target;
                    if inputs.motion_reached == Some(target) {
                        if track + 1 < job.len() {
                            self.current_track += 1;
                            self.s_progress = 0.0;
                            self.enter(Phase::Indexing);
                            cmd.mold = MoldTarget::Raised {
                                track: self.current_track,
                                s: 0.0,
                            };
                        } else {
                            self.job_complete = true;
                            self.heaters_on = false;
                            cmd.heaters_on = false;
                            self.enter(Phase::Idle);
                        }
                    }
                }
            }
            Phase::Indexing => {
                let target = MoldTarget::Raised { track, s: 0.0 };
                cmd.mold = target;
                if inputs.motion_reached == Some(target) {
                    self.enter(Phase::Feeding);
                }
            }
        }
        cmd.heaters_on = self.heaters_on;
        cmd
    }

    fn advance(&mut self, window: &ProcessWindow, params: &SequencerParams, cmd: &mut SequencerCommands) {
        self.s_progress += window.feed_speed * params.dt;
        cmd.advance = true;
    }

    fn consolidate(
        &mut self,
        inputs: &SequencerInputs,
        window: &ProcessWindow,
        params: &SequencerParams,
        length: f64,
        cmd: &mut SequencerCommands,
    ) {
        match self.phase {
            Phase::Taping => {
                if length - self.s_progress <= params.cutter_to_nip + 1e-9 {
                    self.enter(Phase::Cutting);
                    cmd.valves.blade_valve = true;
                }
                self.advance(window, params, cmd);
            }
            Phase::Cutting => {
                if self.stage == 0 {
                    if inputs.blade == BladePhase::Extended {
                        self.stage = 1;
                    } else {
                        cmd.valves.blade_valve = true;
                    }
                }
                if self.stage == 1 && inputs.blade == BladePhase::Retracted {
                    self.enter(Phase::FinishingTail);
                }
                self.advance(window, params, cmd);
            }
            Phase::FinishingTail => {
                if inputs.tail_pending {
                    self.advance(window, params, cmd);
                } else {
                    self.close_segment(cmd);
                    self.enter(Phase::Retracting);
                    cmd.acf_enable = false;
                }
            }
            _ => unreachable!("consolidate called outside a consolidating phase"),
        }
    }
}

/// Value-returning form of [`SequencerState::step`].
pub fn sequencer_step(
    st: &SequencerState,
    inputs: &SequencerInputs,
    window: &ProcessWindow,
    job: &Job,
    params: &SequencerParams,
) -> (SequencerState, SequencerCommands) {
    let mut next = st.clone();
    let cmd = next.step(inputs, window, job, params);
    (next, cmd)
}
