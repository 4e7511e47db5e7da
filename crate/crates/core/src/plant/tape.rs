//! Tape bookkeeping from the spool through the cutter to the nip point.
//!
//! Positions are measured along the tape path relative to the nip: the
//! cutter sits `cutter_to_nip` upstream. Both freewheels make the drawn length
//! monotone, and every metre leaving the spool is accounted for.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "tip has reached the nip".
const TIP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TapeError {
    #[error("spool empty: {requested} m requested, {remaining} m left")]
    SpoolEmpty { requested: f64, remaining: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaidSegment {
    pub track: usize,
    pub s_start: f64,
    pub s_end: f64,
}

impl LaidSegment {
    pub fn length(&self) -> f64 {
        self.s_end - self.s_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeState {
    pub initial_spool: f64,
    pub spool_remaining: f64,
    /// Cumulative tape drawn off the spool, m.
    pub fed_length: f64,
    /// Signed position of the spool-side tape end relative to the nip, m.
    pub tip_offset: f64,
    pub cutter_to_nip: f64,
    /// Length of a severed tail still to pass the nip, m.
    pub tail_remaining: Option<f64>,
    pub laid_segments: Vec<LaidSegment>,
    active_segment: Option<usize>,
    cut_latched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TapeStepOutcome {
    /// Tape pressed onto the mold this step, m.
    pub laid: f64,
    /// The severed tail passed the nip during this step.
    pub tail_finished: bool,
}

impl TapeState {
    /// Fresh spool with the tape end sitting at the cutter.
    pub fn new(spool_length: f64, cutter_to_nip: f64) -> Self {
        Self {
            initial_spool: spool_length,
            spool_remaining: spool_length,
            fed_length: 0.0,
            tip_offset: -cutter_to_nip,
            cutter_to_nip,
            tail_remaining: None,
            laid_segments: Vec::new(),
            active_segment: None,
            cut_latched: false,
        }
    }

    /// Tape end is at (or past) the nip, so mold motion pulls tape.
    pub fn engaged(&self) -> bool {
        self.tip_offset >= -TIP_EPS
    }

    pub fn laying(&self) -> bool {
        self.tail_remaining.is_some() || self.engaged()
    }

    pub fn begin_segment(&mut self, track: usize, s_start: f64) {
        self.laid_segments.push(LaidSegment {
            track,
            s_start,
            s_end: s_start,
        });
        self.active_segment = Some(self.laid_segments.len() - 1);
    }

    pub fn end_segment(&mut self) {
        self.active_segment = None;
    }

    pub fn active_segment(&self) -> Option<&LaidSegment> {
        self.active_segment.map(|i| &self.laid_segments[i])
    }

    /// Total laid on `track` over all its segments.
    pub fn laid_on(&self, track: usize) -> f64 {
        self.laid_segments
            .iter()
            .filter(|s| s.track == track)
            .map(LaidSegment::length)
            .sum()
    }

    /// Advances by `advance` m of pneumatic feed and `taping_speed·dt` m of
    /// mold travel under the roller. `cutting` is the blade command; its
    /// rising edge severs the tape at the cutter.
    pub fn step(
        &mut self,
        advance: f64,
        taping_speed: f64,
        dt: f64,
        cutting: bool,
    ) -> Result<TapeStepOutcome, TapeError> {
        debug_assert!(advance >= 0.0);
        let advance = advance.max(0.0);
        let motion = taping_speed.max(0.0) * dt;

        let mut next_tip = self.tip_offset;
        let mut next_tail = self.tail_remaining;
        let cut_now = cutting && !self.cut_latched;
        if cut_now {
            if self.active_segment.is_some() && self.engaged() && next_tail.is_none() {
                // Tape from the cutter to the nip stays attached to the mold;
                // outside a segment the piece ahead of the blade falls away.
                next_tail = Some(self.cutter_to_nip);
            }
            next_tip = next_tip.min(-self.cutter_to_nip);
        }

        let mut draw = advance;
        let mut outcome = TapeStepOutcome::default();
        if motion > 0.0 {
            if let Some(tail) = next_tail {
                let l = motion.min(tail);
                outcome.laid = l;
                if tail - l <= 0.0 {
                    next_tail = None;
                    outcome.tail_finished = true;
                } else {
                    next_tail = Some(tail - l);
                }
            } else if next_tip >= -TIP_EPS {
                draw += motion;
                outcome.laid = motion;
            }
        }
        if draw > self.spool_remaining {
            return Err(TapeError::SpoolEmpty {
                requested: draw,
                remaining: self.spool_remaining,
            });
        }

        self.cut_latched = cutting;
        self.tip_offset = next_tip + draw;
        self.tail_remaining = next_tail;
        self.spool_remaining -= draw;
        self.fed_length += draw;
        if let Some(i) = self.active_segment {
            self.laid_segments[i].s_end += outcome.laid;
        }
        Ok(outcome)
    }
}

/// Value-returning form of [`TapeState::step`].
pub fn tape_step(
    t: &TapeState,
    advance: f64,
    taping_speed: f64,
    dt: f64,
    cutting: bool,
) -> Result<TapeState, TapeError> {
    let mut next = t.clone();
    next.step(advance, taping_speed, dt, cutting)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn nothing_moves_without_feed_or_motion() {
        let t = TapeState::new(100.0, 0.15);
        assert_eq!(tape_step(&t, 0.0, 0.0, 1e-3, false).unwrap(), t);
    }

    #[test]
    fn cut_lays_exactly_cutter_to_nip_more() {
        let mut t = TapeState::new(100.0, 0.15);
        t.step(0.15, 0.0, 1e-3, false).unwrap();
        assert!(t.engaged());
        t.begin_segment(0, 0.0);
        for _ in 0..1000 {
            t.step(0.0, 0.1, 1e-3, false).unwrap();
        }
        let before_cut = t.laid_on(0);
        let spool_at_cut = t.spool_remaining;
        let mut finished = false;
        let mut cutting = true;
        for i in 0..5000 {
            let out = t.step(0.0, 0.1, 1e-3, cutting).unwrap();
            if i > 100 {
                cutting = false;
            }
            if out.tail_finished {
                finished = true;
                break;
            }
        }
        assert!(finished);
        assert_relative_eq!(t.laid_on(0) - before_cut, 0.15, epsilon = 1e-12);
        assert_eq!(t.spool_remaining, spool_at_cut);
        assert_relative_eq!(t.tip_offset, -0.15, epsilon = 1e-12);
        // Motion after the tail is gone lays nothing.
        let out = t.step(0.0, 0.1, 1e-3, false).unwrap();
        assert_eq!(out.laid, 0.0);
    }

    #[test]
    fn overdraw_reports_spool_empty() {
        let mut t = TapeState::new(0.1, 0.15);
        let before = t.clone();
        assert!(matches!(
            t.step(0.2, 0.0, 1e-3, false),
            Err(TapeError::SpoolEmpty { .. })
        ));
        assert_eq!(t, before);
    }

    #[test]
    fn idle_cut_drops_the_piece_ahead_of_the_blade() {
        let mut t = TapeState::new(10.0, 0.15);
        t.step(0.15, 0.0, 1e-3, false).unwrap();
        t.step(0.0, 0.0, 1e-3, true).unwrap();
        assert_eq!(t.tail_remaining, None);
        assert_relative_eq!(t.tip_offset, -0.15, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn monotone_and_conserved(
            ops in proptest::collection::vec((0.0..0.01f64, 0.0..0.2f64, any::<bool>()), 1..500)
        ) {
            let mut t = TapeState::new(5.0, 0.15);
            for (adv, v, cut) in ops {
                let before = t.fed_length;
                let _ = t.step(adv, v, 1e-2, cut);
                prop_assert!(t.fed_length >= before);
                prop_assert!((t.spool_remaining + t.fed_length - 5.0).abs() < 1e-9);
                prop_assert!(t.spool_remaining >= 0.0);
            }
        }
    }
}
