//! Virtual counting band and the line-crossing baseline.
//!
//! Two mirrored vertical bands sit near the left and right image borders,
//! `[start, end]` and `[1−end, 1−start]` as fractions of the image width. A
//! confirmed track is counted once, on the side it first entered, after it
//! has stayed in that band for `persistence_n` consecutive frames. Tracks
//! still in the band when the sequence ends may be credited if they reached
//! `end_of_video_min` frames. The reported count is the larger side total.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tracker::FrameOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig<T> {
    pub start: T,
    pub end: T,
    pub persistence_n: u32,
    pub end_of_video_min: u32,
    /// Whether prediction-only boxes of briefly missed tracks count as band presence.
    pub count_predicted: bool,
}

impl<T: Real> Default for BandConfig<T> {
    fn default() -> Self {
        Self {
            start: T::lit(0.05),
            end: T::lit(0.20),
            persistence_n: 2,
            end_of_video_min: 1,
            count_predicted: true,
        }
    }
}

impl<T: Real> BandConfig<T> {
    pub fn with_bounds(start: T, end: T) -> Self {
        Self {
            start,
            end,
            ..Self::default()
        }
    }

    /// Accepts `start == end` (the degenerate line setting) as well as proper bands.
    pub fn validate(&self) -> Result<()> {
        if !(self.start >= T::zero() && self.start <= self.end && self.end <= T::one()) {
            return Err(Error::Config("band needs 0 ≤ start ≤ end ≤ 1".into()));
        }
        if self.persistence_n == 0 || self.end_of_video_min == 0 {
            return Err(Error::Config("persistence and end-of-video minimum must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.start == self.end
    }
}

/// Which band, if any, contains a box center. Left wins where the bands overlap.
pub fn band_membership<T: Real>(x_center: T, image_width: T, config: &BandConfig<T>) -> Option<Side> {
    let u = x_center / image_width;
    if u >= config.start && u <= config.end {
        Some(Side::Left)
    } else if u >= T::one() - config.end && u <= T::one() - config.start {
        Some(Side::Right)
    } else {
        None
    }
}

/// Per-track counting state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrackTally {
    pub side: Option<Side>,
    pub consecutive: u32,
    pub counted: bool,
    pub last_frame: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountSummary {
    pub left: u32,
    pub right: u32,
    /// `max(left, right)`.
    pub total: u32,
}

impl CountSummary {
    pub fn new(left: u32, right: u32) -> Self {
        Self {
            left,
            right,
            total: left.max(right),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountLedger {
    tallies: BTreeMap<u64, TrackTally>,
    left: u32,
    right: u32,
    last_frame: Option<u32>,
}

impl CountLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tally(&self, id: u64) -> Option<&TrackTally> {
        self.tallies.get(&id)
    }

    pub fn left(&self) -> u32 {
        self.left
    }

    pub fn right(&self) -> u32 {
        self.right
    }

    /// Feeds one frame of tracker output. Frames at or before the last seen frame are ignored.
    pub fn observe<T: Real>(&mut self, frame: &FrameOutput<T>, image_width: T, config: &BandConfig<T>) {
        if self.last_frame.is_some_and(|last| frame.frame <= last) {
            return;
        }
        self.last_frame = Some(frame.frame);

        let mut seen = BTreeSet::new();
        for entry in frame.confirmed(config.count_predicted) {
            if !seen.insert(entry.id) {
                continue;
            }
            let tally = self.tallies.entry(entry.id).or_default();
            tally.last_frame = frame.frame;
            match band_membership(entry.bbox.x, image_width, config) {
                Some(side) if tally.side.is_none() || tally.side == Some(side) => {
                    tally.side = Some(side);
                    tally.consecutive += 1;
                }
                _ => tally.consecutive = 0,
            }
            if !tally.counted && tally.consecutive >= config.persistence_n {
                tally.counted = true;
                match tally.side {
                    Some(Side::Left) => self.left += 1,
                    Some(Side::Right) => self.right += 1,
                    None => unreachable!("counted track without a side"),
                }
            }
        }
        // Absent tracks lose their streak.
        for (id, tally) in self.tallies.iter_mut() {
            if !seen.contains(id) {
                tally.consecutive = 0;
            }
        }
    }

    pub fn observe_all<'a, T: Real + 'a>(
        &mut self,
        frames: impl IntoIterator<Item = &'a FrameOutput<T>>,
        image_width: T,
        config: &BandConfig<T>,
    ) {
        for f in frames {
            self.observe(f, image_width, config);
        }
    }

    /// Side totals after end-of-video compensation.
    pub fn finalize<T: Real>(&self, config: &BandConfig<T>) -> CountSummary {
        let (mut left, mut right) = (self.left, self.right);
        if let Some(last) = self.last_frame {
            for tally in self.tallies.values() {
                if !tally.counted
                    && tally.last_frame == last
                    && tally.consecutive >= config.end_of_video_min
                {
                    match tally.side {
                        Some(Side::Left) => left += 1,
                        Some(Side::Right) => right += 1,
                        None => {}
                    }
                }
            }
        }
        CountSummary::new(left, right)
    }
}

/// Band count of a whole sequence.
pub fn count_sequence<T: Real>(frames: &[FrameOutput<T>], image_width: T, config: &BandConfig<T>) -> CountSummary {
    let mut ledger = CountLedger::new();
    ledger.observe_all(frames, image_width, config);
    ledger.finalize(config)
}

/// Number of distinct confirmed, detection-backed tracks whose center moves
/// across the vertical line `x = line_x_fraction·W` between two consecutive frames.
pub fn line_crossing_count<T: Real>(frames: &[FrameOutput<T>], line_x_fraction: T, image_width: T) -> u32 {
    let line = line_x_fraction * image_width;
    let mut last: BTreeMap<u64, (u32, T)> = BTreeMap::new();
    let mut crossed = BTreeSet::new();
    for f in frames {
        for entry in f.confirmed(false) {
            let x = entry.bbox.x;
            if let Some(&(prev_frame, prev_x)) = last.get(&entry.id) {
                let adjacent = prev_frame + 1 == f.frame;
                let straddles = (prev_x < line && x >= line) || (prev_x >= line && x < line);
                if adjacent && straddles {
                    crossed.insert(entry.id);
                }
            }
            last.insert(entry.id, (f.frame, x));
        }
    }
    crossed.len() as u32
}

/// Line counts at `f·W` and `(1−f)·W`, aggregated like the band sides.
pub fn mirrored_line_count<T: Real>(frames: &[FrameOutput<T>], line_x_fraction: T, image_width: T) -> CountSummary {
    CountSummary::new(
        line_crossing_count(frames, line_x_fraction, image_width),
        line_crossing_count(frames, T::one() - line_x_fraction, image_width),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HeadBox;
    use crate::tracker::{TrackOutput, TrackStatus};

    fn frame(frame: u32, entries: &[(u64, f64)]) -> FrameOutput<f64> {
        FrameOutput {
            frame,
            tracks: entries
                .iter()
                .map(|&(id, x)| TrackOutput {
                    id,
                    bbox: HeadBox::new(x, 500.0, 0.75, 40.0),
                    status: TrackStatus::Confirmed,
                    predicted: false,
                })
                .collect(),
        }
    }

    #[test]
    fn membership_intervals() {
        let cfg = BandConfig::default();
        assert_eq!(band_membership(100.0, 1000.0, &cfg), Some(Side::Left));
        assert_eq!(band_membership(50.0, 1000.0, &cfg), Some(Side::Left));
        assert_eq!(band_membership(200.0, 1000.0, &cfg), Some(Side::Left));
        assert_eq!(band_membership(900.0, 1000.0, &cfg), Some(Side::Right));
        assert_eq!(band_membership(500.0, 1000.0, &cfg), None);
        assert_eq!(band_membership(20.0, 1000.0, &cfg), None);
        let wide = BandConfig::with_bounds(0.2, 0.7);
        assert_eq!(band_membership(400.0, 1000.0, &wide), Some(Side::Left));
    }

    #[test]
    fn persistence_two_counts_on_second_frame() {
        let cfg = BandConfig::default();
        let mut ledger = CountLedger::new();
        ledger.observe(&frame(1, &[(7, 100.0)]), 1000.0, &cfg);
        assert_eq!(ledger.left(), 0);
        ledger.observe(&frame(2, &[(7, 110.0)]), 1000.0, &cfg);
        assert_eq!(ledger.left(), 1);
        assert!(ledger.tally(7).unwrap().counted);
    }

    #[test]
    fn alternating_presence_never_counts() {
        let cfg = BandConfig {
            end_of_video_min: 5,
            ..BandConfig::default()
        };
        let frames: Vec<_> = (1..=20)
            .map(|f| frame(f, &[(1, if f % 2 == 0 { 100.0 } else { 400.0 })]))
            .collect();
        assert_eq!(count_sequence(&frames, 1000.0, &cfg), CountSummary::new(0, 0));
    }

    #[test]
    fn recounting_is_suppressed() {
        let cfg = BandConfig::default();
        let xs = [100.0, 100.0, 500.0, 500.0, 100.0, 100.0, 100.0];
        let frames: Vec<_> = xs.iter().enumerate().map(|(i, &x)| frame(i as u32 + 1, &[(3, x)])).collect();
        assert_eq!(count_sequence(&frames, 1000.0, &cfg).left, 1);
    }

    #[test]
    fn side_is_locked_at_first_entry() {
        let cfg = BandConfig::default();
        let frames = vec![frame(1, &[(3, 100.0)]), frame(2, &[(3, 900.0)]), frame(3, &[(3, 900.0)])];
        assert_eq!(count_sequence(&frames, 1000.0, &cfg), CountSummary::new(0, 0));
    }

    #[test]
    fn finalize_max_rule_and_compensation() {
        assert_eq!(CountSummary::new(19, 0).total, 19);
        let cfg = BandConfig::default();
        let frames = vec![frame(1, &[(1, 500.0)]), frame(2, &[(1, 950.0)])];
        assert_eq!(count_sequence(&frames, 1000.0, &cfg), CountSummary::new(0, 1));
        let strict = BandConfig {
            end_of_video_min: 2,
            ..cfg
        };
        assert_eq!(count_sequence(&frames, 1000.0, &strict), CountSummary::new(0, 0));
        assert_eq!(CountLedger::new().finalize(&cfg), CountSummary::new(0, 0));
    }

    #[test]
    fn compensation_skips_tracks_gone_before_the_end() {
        let cfg = BandConfig::default();
        let frames = vec![frame(1, &[(1, 100.0), (2, 500.0)]), frame(2, &[(2, 500.0)])];
        assert_eq!(count_sequence(&frames, 1000.0, &cfg).total, 0);
    }

    #[test]
    fn repeated_frames_are_ignored() {
        let cfg = BandConfig::default();
        let mut ledger = CountLedger::new();
        let f = frame(1, &[(1, 100.0)]);
        ledger.observe(&f, 1000.0, &cfg);
        ledger.observe(&f, 1000.0, &cfg);
        assert_eq!(ledger.left(), 0);
        assert_eq!(ledger.tally(1).unwrap().consecutive, 1);
    }

    #[test]
    fn line_crossing_cases() {
        let jitter: Vec<_> = (1..=10)
            .map(|f| frame(f, &[(4, if f % 2 == 0 { 99.0 } else { 101.0 })]))
            .collect();
        assert_eq!(line_crossing_count(&jitter, 0.1, 1000.0), 1);

        // The track is never observed on both sides in consecutive frames.
        let gappy = vec![frame(1, &[(4, 120.0)]), frame(2, &[]), frame(3, &[(4, 80.0)])];
        assert_eq!(line_crossing_count(&gappy, 0.1, 1000.0), 0);
        assert_eq!(line_crossing_count::<f64>(&[], 0.1, 1000.0), 0);
    }
}
