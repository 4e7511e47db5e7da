//! Run configuration: JSON on disk, validated in full before anything runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{pid_tune_defaults, PidGains};
use crate::geometry::NipFrame;
use crate::kinematics::{IkOptions, KinematicParams};
use crate::modbus::registers::TARGET_FORCE;
use crate::plant::{AcfParams, PneumaticParams, ThermalParams};
use crate::sequencer::{job_plan, Job, JobError, ProcessWindow, SequencerParams};
use crate::surface::{MoldSurface, TapeTrack, TrackError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub preheat: ThermalParams,
    pub tape: ThermalParams,
    pub substrate: ThermalParams,
}

impl ZoneConfig {
    pub fn as_array(&self) -> [ThermalParams; 3] {
        [self.preheat, self.tape, self.substrate]
    }
}

pub const ZONE_NAMES: [&str; 3] = ["preheat", "tape", "substrate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    /// Per-zone gains; tuned from the plant parameters when absent.
    #[serde(default)]
    pub gains: Option<[PidGains; 3]>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.1
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            gains: None,
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcfConfig {
    pub stroke_max: f64,
    pub stiffness: f64,
    pub extend_speed: f64,
    pub retract_speed: f64,
    pub target_force: f64,
    pub payload: f64,
    pub contact_ramp: f64,
    /// Distance from the retracted roller tip to the nip point, mm.
    pub nominal_gap: f64,
}

impl AcfConfig {
    pub fn params(&self) -> AcfParams {
        AcfParams {
            stroke_max: self.stroke_max,
            stiffness: self.stiffness,
            extend_speed: self.extend_speed,
            retract_speed: self.retract_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapeConfig {
    pub spool_length: f64,
    pub cutter_to_nip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    #[serde(default = "default_preheat_margin")]
    pub preheat_margin: f64,
    #[serde(default = "default_heat_settle")]
    pub heat_settle_time: f64,
    /// Lift of the mold off the roller between tracks, m.
    pub clearance: f64,
    /// Linear speed of approach, lift and index moves, m/s.
    pub move_speed: f64,
    /// Unacknowledged fault ends the run after this long, s.
    #[serde(default = "default_fault_timeout")]
    pub fault_timeout: f64,
    /// Hard cap on simulated time, s.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_preheat_margin() -> f64 {
    20.0
}
fn default_heat_settle() -> f64 {
    1.0
}
fn default_fault_timeout() -> f64 {
    30.0
}
fn default_max_time() -> f64 {
    3600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Real sockets against the in-process server.
    #[default]
    Tcp,
    /// Codec round trip without sockets.
    Loopback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModbusConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: f64,
    #[serde(default = "default_unit")]
    pub unit_id: u8,
    #[serde(default)]
    pub transport: Transport,
}

fn default_port() -> u16 {
    1502
}
fn default_host() -> String {
    "127.0.0.1".into()
}
fn default_timeout_ms() -> f64 {
    8.0
}
fn default_unit() -> u8 {
    1
}

impl Default for ModbusConfig {
    fn default() -> Self {
        Self {
            port: default_port(),
            host: default_host(),
            timeout_ms: default_timeout_ms(),
            unit_id: default_unit(),
            transport: Transport::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Plant step, s.
    pub sim_dt: f64,
    pub control_period: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of temperature sensor noise, K. 0 disables it.
    #[serde(default)]
    pub sensor_noise: f64,
    pub zones: ZoneConfig,
    #[serde(default)]
    pub pid: PidConfig,
    pub acf: AcfConfig,
    pub pneumatics: PneumaticParams,
    pub tape: TapeConfig,
    #[serde(default)]
    pub kinematics: KinematicParams,
    #[serde(default)]
    pub ik: IkOptions,
    pub nip: NipFrame,
    pub surface: MoldSurface,
    pub tracks: Vec<TapeTrack>,
    pub window: ProcessWindow,
    pub process: ProcessConfig,
    #[serde(default)]
    pub modbus: ModbusConfig,
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Plant steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.control_period / self.sim_dt).round() as usize
    }

    pub fn sequencer_params(&self) -> SequencerParams {
        SequencerParams {
            dt: self.control_period,
            cutter_to_nip: self.tape.cutter_to_nip,
            heat_settle_time: self.process.heat_settle_time,
            retracted_stroke: 0.05,
        }
    }

    /// Tape drawn beyond the track length: at most one tick of feed.
    pub fn waste_per_track(&self) -> f64 {
        self.window.feed_speed * self.control_period
    }

    pub fn job(&self) -> Result<Job, JobError> {
        job_plan(&self.tracks, &self.surface, &self.window, self.waste_per_track())
    }

    /// Gains in use at start-up for preheat, tape and substrate zones.
    pub fn initial_gains(&self) -> [PidGains; 3] {
        match self.pid.gains {
            Some(g) => g,
            None => self.zones.as_array().map(|z| {
                pid_tune_defaults(&z, self.window.feed_speed).expect("zones validated before tuning")
            }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sim_dt > 0.0) {
            return Err(invalid("sim_dt", "must be > 0"));
        }
        if !(self.control_period > 0.0) {
            return Err(invalid("control_period", "must be > 0"));
        }
        let ratio = self.control_period / self.sim_dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(
                "control_period",
                format!(
                    "must be an integer multiple of sim_dt ({} / {} = {ratio})",
                    self.control_period, self.sim_dt
                ),
            ));
        }
        if !(self.sensor_noise >= 0.0) {
            return Err(invalid("sensor_noise", "must be >= 0"));
        }
        for (name, z) in ZONE_NAMES.iter().zip(self.zones.as_array()) {
            z.validate().map_err(|m| invalid(format!("zones.{name}"), m))?;
            let bound = z.max_stable_dt();
            if !(self.sim_dt < bound) {
                return Err(invalid(
                    "sim_dt",
                    format!(
                        "{} s violates the explicit-Euler bound 0.1·C/h = {bound} s of zone {name}",
                        self.sim_dt
                    ),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.pid.alpha) {
            return Err(invalid("pid.alpha", "must be within [0, 1]"));
        }
        if let Some(gains) = &self.pid.gains {
            for (i, g) in gains.iter().enumerate() {
                if [g.kp, g.ki, g.kd].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid(format!("pid.gains[{i}]"), "gains must be finite and >= 0"));
                }
            }
        } else {
            for (name, z) in ZONE_NAMES.iter().zip(self.zones.as_array()) {
                pid_tune_defaults(&z, self.window.feed_speed)
                    .map_err(|e| invalid(format!("zones.{name}"), e.to_string()))?;
            }
        }

        let acf = &self.acf;
        acf.params().validate().map_err(|m| invalid("acf", m))?;
        let max_force = u16::MAX as f64 / TARGET_FORCE.scale;
        if !(acf.target_force > 0.0 && acf.target_force <= max_force) {
            return Err(invalid("acf.target_force", format!("must be within (0, {max_force}] N")));
        }
        if acf.target_force < self.window.min_force {
            return Err(invalid(
                "acf.target_force",
                format!("{} N is below window.min_force {} N", acf.target_force, self.window.min_force),
            ));
        }
        if !(acf.payload >= 0.0) {
            return Err(invalid("acf.payload", "must be >= 0"));
        }
        if !(acf.contact_ramp > 0.0) {
            return Err(invalid("acf.contact_ramp", "must be > 0"));
        }
        if !(acf.nominal_gap > 0.0 && acf.nominal_gap < acf.stroke_max) {
            return Err(invalid("acf.nominal_gap", "must be within (0, stroke_max)"));
        }
        self.pneumatics.validate().map_err(|m| invalid("pneumatics", m))?;
        if !(self.tape.spool_length > 0.0) {
            return Err(invalid("tape.spool_length", "must be > 0"));
        }
        if !(self.tape.cutter_to_nip > 0.0) {
            return Err(invalid("tape.cutter_to_nip", "must be > 0"));
        }
        if self.pneumatics.feed_stroke_length < self.tape.cutter_to_nip - 1e-12 {
            return Err(invalid(
                "pneumatics.feed_stroke_length",
                "one feed stroke must bring the tape end from the cutter to the nip",
            ));
        }
        self.kinematics.validate().map_err(|m| invalid("kinematics", m))?;
        if !(self.ik.damping > 0.0 && self.ik.tolerance > 0.0 && self.ik.max_step > 0.0) {
            return Err(invalid("ik", "damping, tolerance and max_step must be > 0"));
        }
        self.nip.validate().map_err(|m| invalid("nip", m))?;
        self.surface.validate().map_err(|m| invalid("surface", m))?;
        self.window.validate().map_err(|m| invalid("window", m))?;
        for (i, t) in self.tracks.iter().enumerate() {
            t.validate(&self.surface).map_err(|e| match e {
                TrackError::WidthOutOfRange { .. } => invalid(format!("tracks[{i}].width"), e.to_string()),
                TrackError::TrackOffSurface { .. } => invalid(format!("tracks[{i}].points"), e.to_string()),
                TrackError::Degenerate { .. } => invalid(format!("tracks[{i}]"), e.to_string()),
            })?;
        }
        let p = &self.process;
        if !(p.preheat_margin >= 0.0) {
            return Err(invalid("process.preheat_margin", "must be >= 0"));
        }
        if !(p.heat_settle_time >= 0.0) {
            return Err(invalid("process.heat_settle_time", "must be >= 0"));
        }
        if !(p.clearance > 0.0) {
            return Err(invalid("process.clearance", "must be > 0"));
        }
        if !(p.move_speed > 0.0) {
            return Err(invalid("process.move_speed", "must be > 0"));
        }
        if !(p.fault_timeout > 0.0 && p.max_time > 0.0) {
            return Err(invalid("process", "fault_timeout and max_time must be > 0"));
        }
        if !(self.modbus.timeout_ms > 0.0 && self.modbus.timeout_ms / 1000.0 < self.control_period) {
            return Err(invalid(
                "modbus.timeout_ms",
                format!(
                    "{} ms must be > 0 and shorter than the control period ({} ms)",
                    self.modbus.timeout_ms,
                    self.control_period * 1000.0
                ),
            ));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_json(&text)
}
