//! Fixed-step simulation of the whole cell.
//!
//! Per control tick: one operator command, sensors into the I/O image, force
//! supervisor round trip, sequencer, temperature loops, motion, trace row.
//! Then the plants advance by `control_period / sim_dt` steps of `sim_dt`.

use std::collections::VecDeque;
use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{RunConfig, Transport};
use super::motion::{MoldMotion, MotionContext};
use super::trace::{EventKind, IoImage, TraceEvent, TraceRecord};
use crate::alarm::Alarm;
use crate::control::{ForceSupervisorState, PidState};
use crate::geometry::Pose;
use crate::modbus::{AcfDevice, LoopbackTransport, ModbusClient, ModbusServer, RegisterTransport, SharedDevice};
use crate::planner::{plan_with_runout, MoldTrajectory, PlanError};
use crate::plant::{AcfState, PneumaticState, TapeState, ThermalZoneState, ValveCommand};
use crate::sequencer::{
    Job, JobError, MoldTarget, OperatorCommand, Phase, ProcessWindow, SequencerCommands, SequencerInputs,
    SequencerParams, SequencerState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Job(#[from] JobError),
    #[error("track {track}: {source}")]
    Plan {
        track: usize,
        #[source]
        source: PlanError,
    },
    #[error("initial pose: {0}")]
    InitialPose(String),
    #[error("modbus: {0}")]
    Modbus(String),
}

/// Faults injected from tests and the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Disturbance {
    /// Jumps a zone (heated spot and sensor path) by `delta` K.
    ZoneTemperatureStep { zone: usize, delta: f64 },
    /// Heater output of a zone stays at 0 W from now on.
    HeaterFailure { zone: usize },
    /// Adds `mm` to the measured roller-to-mold gap.
    GapOffset { mm: f64 },
    /// Shuts the Modbus server down (TCP transport only).
    StopModbusServer,
}

enum Link {
    Tcp {
        server: Option<ModbusServer>,
        client: ModbusClient,
    },
    Loopback(LoopbackTransport),
}

impl Link {
    fn transport(&mut self) -> &mut dyn RegisterTransport {
        match self {
            Link::Tcp { client, .. } => client,
            Link::Loopback(l) => l,
        }
    }
}

/// Result of one tick, handed to whoever drives the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub record: TraceRecord,
    pub events: Vec<TraceEvent>,
}

pub struct Simulation {
    cfg: RunConfig,
    job: Job,
    trajectories: Vec<MoldTrajectory>,
    params: SequencerParams,
    substeps: usize,
    tick: u64,
    window: ProcessWindow,
    zones: [ThermalZoneState; 3],
    pids: [PidState; 3],
    heater_failed: [bool; 3],
    device: SharedDevice,
    link: Link,
    supervisor: ForceSupervisorState,
    pneumatics: PneumaticState,
    tape: TapeState,
    seq: SequencerState,
    motion: MoldMotion,
    io: IoImage,
    gap_offset: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    queue: VecDeque<OperatorCommand>,
    plant_alarms: Vec<Alarm>,
    fault_count: usize,
    time_in_window: f64,
    last: Option<TraceRecord>,
}

impl Simulation {
    /// Builds the cell from a validated config: plans all tracks, starts the
    /// Modbus server (TCP transport) and places the mold above track 0.
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        let job = cfg.job()?;
        let v = cfg.window.feed_speed;
        let runout = 5.0 * v * cfg.control_period;
        let trajectories = cfg
            .tracks
            .iter()
            .map(|t| {
                plan_with_runout(t, &cfg.surface, &cfg.nip, v, cfg.control_period, &cfg.kinematics, &cfg.ik, runout)
                    .map_err(|source| SimError::Plan { track: t.index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let zone_params = cfg.zones.as_array();
        let gains = cfg.initial_gains();
        let zones = zone_params.map(ThermalZoneState::at_ambient);
        let pids: [PidState; 3] = std::array::from_fn(|i| {
            PidState::new(gains[i], 0.0, zone_params[i].max_power).with_alpha(cfg.pid.alpha)
        });

        let a = &cfg.acf;
        // Factory state: nothing configured until the supervisor writes it.
        let device: SharedDevice = Arc::new(Mutex::new(AcfDevice::new(AcfState::new(a.params(), 0.0, 0.0, 0.0))));
        let link = match cfg.modbus.transport {
            Transport::Loopback => Link::Loopback(LoopbackTransport::new(device.clone(), cfg.modbus.unit_id)),
            Transport::Tcp => {
                let server = ModbusServer::bind((cfg.modbus.host.as_str(), cfg.modbus.port), device.clone())
                    .map_err(|e| SimError::Modbus(format!("bind {}:{}: {e}", cfg.modbus.host, cfg.modbus.port)))?;
                let addr = connect_addr(server.local_addr(), &cfg.modbus.host)?;
                let timeout = Duration::from_secs_f64(cfg.modbus.timeout_ms / 1000.0);
                let client = ModbusClient::connect(addr, timeout, cfg.modbus.unit_id)
                    .map_err(|e| SimError::Modbus(e.to_string()))?;
                Link::Tcp {
                    server: Some(server),
                    client,
                }
            }
        };
        let supervisor = ForceSupervisorState::new(a.target_force, a.payload, a.contact_ramp);

        let motion = if trajectories.is_empty() {
            MoldMotion::new(Pose::identity(), cfg.kinematics.home)
        } else {
            let ctx = motion_context(&cfg, &trajectories);
            MoldMotion::at_target(&ctx, MoldTarget::Raised { track: 0, s: 0.0 }).map_err(SimError::InitialPose)?
        };

        let noise = (cfg.sensor_noise > 0.0).then(|| Normal::new(0.0, cfg.sensor_noise).expect("sigma > 0"));
        let mut sim = Self {
            params: cfg.sequencer_params(),
            substeps: cfg.substeps(),
            tick: 0,
            window: cfg.window,
            zones,
            pids,
            heater_failed: [false; 3],
            device,
            link,
            supervisor,
            pneumatics: PneumaticState::new(cfg.pneumatics),
            tape: TapeState::new(cfg.tape.spool_length, cfg.tape.cutter_to_nip),
            seq: SequencerState::new(),
            motion,
            io: IoImage::default(),
            gap_offset: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise,
            queue: VecDeque::new(),
            plant_alarms: Vec::new(),
            fault_count: 0,
            time_in_window: 0.0,
            last: None,
            job,
            trajectories,
            cfg,
        };
        sim.last = Some(sim.record(false));
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn job(&self) -> &Job {
        &self.job
    }

    pub fn trajectories(&self) -> &[MoldTrajectory] {
        &self.trajectories
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.control_period
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn sequencer(&self) -> &SequencerState {
        &self.seq
    }

    pub fn window(&self) -> &ProcessWindow {
        &self.window
    }

    pub fn tape(&self) -> &TapeState {
        &self.tape
    }

    pub fn zones(&self) -> &[ThermalZoneState; 3] {
        &self.zones
    }

    pub fn pids(&self) -> &[PidState; 3] {
        &self.pids
    }

    pub fn supervisor(&self) -> &ForceSupervisorState {
        &self.supervisor
    }

    pub fn pneumatics(&self) -> &PneumaticState {
        &self.pneumatics
    }

    pub fn device(&self) -> SharedDevice {
        self.device.clone()
    }

    pub fn acf(&self) -> AcfState {
        self.device.lock().unwrap_or_else(|e| e.into_inner()).state
    }

    pub fn motion(&self) -> &MoldMotion {
        &self.motion
    }

    /// Address of the in-process Modbus server, if one runs.
    pub fn modbus_addr(&self) -> Option<SocketAddr> {
        match &self.link {
            Link::Tcp { server: Some(s), .. } => Some(s.local_addr()),
            _ => None,
        }
    }

    pub fn fault_count(&self) -> usize {
        self.fault_count
    }

    /// Seconds with both main zones inside the window.
    pub fn time_in_window(&self) -> f64 {
        self.time_in_window
    }

    /// Trace row of the last completed tick (tick 0 before any step).
    pub fn last_record(&self) -> &TraceRecord {
        self.last.as_ref().expect("initialized in new")
    }

    pub fn enqueue(&mut self, cmd: OperatorCommand) {
        self.queue.push_back(cmd);
    }

    pub fn pending_commands(&self) -> usize {
        self.queue.len()
    }

    pub fn inject(&mut self, d: Disturbance) {
        log::info!("disturbance: {d:?}");
        match d {
            Disturbance::ZoneTemperatureStep { zone, delta } => {
                let z = &mut self.zones[zone];
                let t = z.heater_temperature + delta;
                z.set_temperature(t);
            }
            Disturbance::HeaterFailure { zone } => self.heater_failed[zone] = true,
            Disturbance::GapOffset { mm } => self.gap_offset += mm,
            Disturbance::StopModbusServer => {
                if let Link::Tcp { server, .. } = &mut self.link {
                    if let Some(mut s) = server.take() {
                        s.stop();
                    }
                }
            }
        }
    }

    fn zone_setpoints(&self) -> [f64; 3] {
        let sp = self.window.temp_setpoint;
        [sp - self.cfg.process.preheat_margin, sp, sp]
    }

    /// Roller-to-mold distance along the compaction axis for a mold pose, mm.
    pub fn mold_gap(&self, mold: &Pose) -> f64 {
        let nip = &self.cfg.nip;
        let tip = nip.position - nip.compaction_axis * (self.cfg.acf.nominal_gap / 1000.0);
        let inv = mold.inverse();
        let o = inv.transform_point(&tip);
        let d = inv.transform_vector(&nip.compaction_axis);
        let gap = self
            .cfg
            .surface
            .ray_distance(&o, &d)
            .map_or(1e6, |m| m * 1000.0);
        gap + self.gap_offset
    }

    fn event(&self, events: &mut Vec<TraceEvent>, kind: EventKind) {
        events.push(TraceEvent {
            tick: self.tick,
            t: self.time(),
            kind,
        });
    }

    fn apply_runtime_command(&mut self, cmd: &OperatorCommand) {
        match *cmd {
            OperatorCommand::SetSetpoint { value } => self.window.temp_setpoint = value,
            OperatorCommand::SetForce { value } => self.supervisor.set_force(value),
            OperatorCommand::SetGains { zone, kp, ki, kd } => {
                let g = crate::control::PidGains { kp, ki, kd };
                match zone {
                    Some(z) => self.pids[z].set_gains(g),
                    None => self.pids.iter_mut().for_each(|p| p.set_gains(g)),
                }
            }
            _ => {}
        }
    }

    /// Advances one control period.
    pub fn step(&mut self) -> TickOutput {
        let mut events = Vec::new();
        let period = self.cfg.control_period;

        // One queued operator command per tick boundary.
        let command = self.queue.pop_front();
        if let Some(c) = &command {
            if let Err(msg) = c.validate() {
                self.event(&mut events, EventKind::Note {
                    message: format!("invalid {} dropped: {msg}", c.name()),
                });
            } else {
                self.event(&mut events, EventKind::Command { command: c.clone() });
            }
        }
        let command = command.filter(|c| c.validate().is_ok());

        // Sensors.
        for (i, z) in self.zones.iter().enumerate() {
            let noise = self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
            self.io.zone_temp[i] = z.temperature + noise;
        }
        self.io.auto_switch_rear = self.pneumatics.auto_switch_rear;
        self.io.auto_switch_front = self.pneumatics.auto_switch_front;

        let mut alarms = self.supervisor.step(self.link.transport());
        alarms.append(&mut self.plant_alarms);
        for a in &alarms {
            self.event(&mut events, EventKind::Alarm { alarm: a.clone() });
        }

        let inputs = SequencerInputs {
            command: command.clone(),
            auto_switch_rear: self.io.auto_switch_rear,
            auto_switch_front: self.io.auto_switch_front,
            blade: self.pneumatics.blade,
            zone_temps: self.io.zone_temp,
            acf: self.supervisor.last_read,
            tail_pending: self.tape.tail_remaining.is_some(),
            spool_remaining: self.tape.spool_remaining,
            motion_reached: self.motion.reached(),
            alarms,
        };
        let before = self.seq.phase;
        let latched = self.seq.alarms.len();
        let cmd = self.seq.step(&inputs, &self.window, &self.job, &self.params);
        // Alarms the sequencer raised itself (process window, spool precheck).
        if self.seq.alarms.len() > latched {
            for a in &self.seq.alarms[latched..] {
                if !inputs.alarms.contains(a) {
                    events.push(TraceEvent {
                        tick: self.tick,
                        t: self.time(),
                        kind: EventKind::Alarm { alarm: a.clone() },
                    });
                }
            }
        }
        if self.seq.phase != before {
            if self.seq.phase == Phase::Fault {
                self.fault_count += 1;
            }
            self.event(&mut events, EventKind::Transition {
                from: before,
                to: self.seq.phase,
            });
        }
        if let Some(r) = &cmd.refusal {
            self.event(&mut events, EventKind::Refusal { refusal: r.clone() });
        } else if let Some(c) = &command {
            self.apply_runtime_command(c);
        }
        if cmd.ack_device {
            self.supervisor.acknowledge();
        }
        self.supervisor.enable_request = cmd.acf_enable;

        // Temperature loops.
        let setpoints = self.zone_setpoints();
        for (i, (pid, sp)) in self.pids.iter_mut().zip(setpoints).enumerate() {
            self.io.heater_enable[i] = cmd.heaters_on;
            self.io.heater_power_cmd[i] = if cmd.heaters_on {
                pid.update(sp, self.io.zone_temp[i], period)
            } else {
                pid.reset();
                0.0
            };
        }
        self.io.feed_valve = cmd.valves.feed_valve;
        self.io.blade_valve = cmd.valves.blade_valve;
        if [1, 2].iter().all(|&z| self.window.temp_ok(self.io.zone_temp[z])) {
            self.time_in_window += period;
        }

        // Motion for this tick.
        if let Some(d) = cmd.jog {
            if !self.motion.jog(d) {
                self.event(&mut events, EventKind::Note {
                    message: "jog ignored: mold is moving".into(),
                });
            }
        }
        let ctx = motion_context(&self.cfg, &self.trajectories);
        let m = if self.trajectories.is_empty() {
            super::motion::MotionTick {
                start: self.motion.pose,
                end: self.motion.pose,
                error: None,
            }
        } else {
            self.motion.tick(&ctx, &cmd.mold, self.seq.s_progress)
        };
        if let Some(err) = m.error {
            let alarm = Alarm::Motion { detail: err };
            if cmd.jog.is_some() || self.seq.phase == Phase::Idle {
                self.event(&mut events, EventKind::Note {
                    message: format!("{alarm:?}"),
                });
            } else {
                self.plant_alarms.push(alarm);
            }
        }

        if let Some((track, s)) = cmd.begin_segment {
            self.tape.begin_segment(track, s);
        }
        if cmd.end_segment {
            self.tape.end_segment();
        }

        let record = self.record(cmd.advance);
        self.last = Some(record.clone());

        self.plant_substeps(&cmd, m.start, m.end);
        self.tick += 1;
        TickOutput { record, events }
    }

    fn plant_substeps(&mut self, cmd: &SequencerCommands, start: Pose, end: Pose) {
        let n = self.substeps;
        let dt = self.cfg.sim_dt;
        let taping_speed = if cmd.advance { self.window.feed_speed } else { 0.0 };
        let valves = ValveCommand {
            feed_valve: self.io.feed_valve,
            blade_valve: self.io.blade_valve,
        };
        let same_pose = start == end;
        let fixed_gap = same_pose.then(|| self.mold_gap(&start));
        let mut interlock_raised = false;
        for i in 0..n {
            let advance = match self.pneumatics.step(valves, dt) {
                Ok(a) => a,
                Err(e) => {
                    if !interlock_raised {
                        self.plant_alarms.push(Alarm::Interlock { detail: e.to_string() });
                        interlock_raised = true;
                    }
                    0.0
                }
            };
            let gap = fixed_gap.unwrap_or_else(|| {
                let alpha = (i + 1) as f64 / n as f64;
                self.mold_gap(&start.interpolate(&end, alpha))
            });
            self.device.lock().unwrap_or_else(|e| e.into_inner()).state.step(gap, dt);

            let tape_speed = advance / dt + if self.tape.laying() { taping_speed } else { 0.0 };
            for (z, zone) in self.zones.iter_mut().enumerate() {
                let p = if self.heater_failed[z] { 0.0 } else { self.io.heater_power_cmd[z] };
                zone.step(p, tape_speed, dt);
            }
            if let Err(e) = self.tape.step(advance, taping_speed, dt, valves.blade_valve) {
                log::warn!("{e}");
                if !self.plant_alarms.contains(&Alarm::SpoolEmpty) {
                    self.plant_alarms.push(Alarm::SpoolEmpty);
                }
            }
        }
    }

    fn record(&self, advance: bool) -> TraceRecord {
        let acf = self.acf();
        let sp = self.zone_setpoints();
        let p = self.motion.pose.to_array();
        let q = self.motion.joints.0;
        let laid = self.tape.active_segment().map_or(0.0, |s| s.length());
        TraceRecord {
            tick: self.tick,
            t: self.time(),
            state: self.seq.phase,
            track: self.seq.current_track,
            s_progress: self.seq.s_progress,
            advance,
            feed_valve: self.io.feed_valve,
            blade_valve: self.io.blade_valve,
            heater_enable_0: self.io.heater_enable[0],
            heater_enable_1: self.io.heater_enable[1],
            heater_enable_2: self.io.heater_enable[2],
            auto_switch_rear: self.io.auto_switch_rear,
            auto_switch_front: self.io.auto_switch_front,
            zone_temp_0: self.io.zone_temp[0],
            zone_temp_1: self.io.zone_temp[1],
            zone_temp_2: self.io.zone_temp[2],
            heater_power_cmd_0: self.io.heater_power_cmd[0],
            heater_power_cmd_1: self.io.heater_power_cmd[1],
            heater_power_cmd_2: self.io.heater_power_cmd[2],
            setpoint_0: sp[0],
            setpoint_1: sp[1],
            setpoint_2: sp[2],
            acf_enabled: acf.enabled,
            acf_target_force: acf.target_force,
            acf_actual_force: acf.actual_force,
            acf_stroke: acf.stroke,
            acf_contact: acf.contact,
            acf_error: acf.error_code.code(),
            spool_remaining: self.tape.spool_remaining,
            fed_length: self.tape.fed_length,
            tip_offset: self.tape.tip_offset,
            tail_remaining: self.tape.tail_remaining.unwrap_or(0.0),
            laid_length: laid,
            x: p[0],
            y: p[1],
            z: p[2],
            qw: p[3],
            qx: p[4],
            qy: p[5],
            qz: p[6],
            q1: q[0],
            q2: q[1],
            q3: q[2],
            q4: q[3],
            q5: q[4],
            q6: q[5],
        }
    }
}

fn connect_addr(bound: SocketAddr, host: &str) -> Result<SocketAddr, SimError> {
    if bound.ip().is_unspecified() {
        let loopback = if bound.is_ipv4() { "127.0.0.1" } else { "::1" };
        return Ok(SocketAddr::new(loopback.parse().expect("literal"), bound.port()));
    }
    (host, bound.port())
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| SimError::Modbus(format!("cannot resolve {host}")))
}

fn motion_context<'a>(cfg: &'a RunConfig, trajectories: &'a [MoldTrajectory]) -> MotionContext<'a> {
    MotionContext {
        trajectories,
        k: &cfg.kinematics,
        ik: &cfg.ik,
        lift_direction: cfg.nip.compaction_axis,
        clearance: cfg.process.clearance,
        move_speed: cfg.process.move_speed,
        period: cfg.control_period,
    }
}
