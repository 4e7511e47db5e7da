use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarm::Alarm;
use crate::surface::{MoldSurface, TapeTrack, TrackError};

/// Operator-tuned consolidation conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessWindow {
    /// °C
    pub temp_setpoint: f64,
    /// K
    pub temp_tolerance: f64,
    /// N
    pub min_force: f64,
    /// m/s
    pub feed_speed: f64,
}

impl ProcessWindow {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temp_tolerance > 0.0) {
            return Err("temp_tolerance must be > 0".into());
        }
        if !(self.min_force > 0.0) {
            return Err("min_force must be > 0".into());
        }
        if !(self.feed_speed > 0.0) {
            return Err("feed_speed must be > 0".into());
        }
        if !self.temp_setpoint.is_finite() {
            return Err("temp_setpoint must be finite".into());
        }
        Ok(())
    }

    pub fn temp_ok(&self, t: f64) -> bool {
        (t - self.temp_setpoint).abs() <= self.temp_tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobTrack {
    pub index: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Job {
    pub tracks: Vec<JobTrack>,
    /// Tape consumed per track beyond its length, m.
    pub waste_per_track: f64,
}

impl Job {
    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn total_requirement(&self) -> f64 {
        self.requirement_from(0)
    }

    /// Tape still needed to lay tracks `first..`.
    pub fn requirement_from(&self, first: usize) -> f64 {
        self.tracks
            .iter()
            .skip(first)
            .map(|t| t.length + self.waste_per_track)
            .sum()
    }

    pub fn check_spool(&self, first: usize, remaining: f64) -> Result<(), Alarm> {
        let required = self.requirement_from(first);
        if required > remaining {
            Err(Alarm::SpoolShort { required, remaining })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JobError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("process window: {0}")]
    Window(String),
}

/// Validates the tracks against the surface and the spool width bound and
/// keeps them in the given order.
pub fn job_plan(
    tracks: &[TapeTrack],
    surface: &MoldSurface,
    window: &ProcessWindow,
    waste_per_track: f64,
) -> Result<Job, JobError> {
    window.validate().map_err(JobError::Window)?;
    let mut job = Job {
        tracks: Vec::with_capacity(tracks.len()),
        waste_per_track: waste_per_track.max(0.0),
    };
    for t in tracks {
        t.validate(surface)?;
        job.tracks.push(JobTrack {
            index: t.index,
            length: t.length(),
        });
    }
    Ok(job)
}
