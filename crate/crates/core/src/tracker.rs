//! Per-sequence track management: predict, associate, update, spawn, retire.

use serde::{Deserialize, Serialize};

use crate::association::{AssociationConfig, Associator, Detection, Embedding, TrackView};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, HeadBox};
use crate::motion::{KalmanState, MotionModel, MotionModelKind, MotionNoise};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track<T> {
    pub id: u64,
    pub state: KalmanState<T>,
    pub status: TrackStatus,
    /// Number of detection updates, including the one that created the track.
    pub hits: u32,
    pub time_since_update: u32,
    pub gallery: Vec<Embedding<T>>,
    pub created_frame: u32,
}

impl<T: Real> Track<T> {
    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_deleted(&self) -> bool {
        self.status == TrackStatus::Deleted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig<T> {
    pub model: MotionModelKind,
    pub noise: MotionNoise<T>,
    /// Updates needed to confirm a track.
    pub n_init: u32,
    /// Missed frames after which a confirmed track is deleted.
    pub max_age: u32,
    /// Detections below this confidence are discarded.
    pub min_confidence: T,
    pub association: AssociationConfig<T>,
    pub fps: T,
    /// Confirmed tracks are still reported, from their prediction, this many frames after a miss.
    pub emit_predicted_frames: u32,
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            model: MotionModelKind::Phys3d,
            noise: MotionNoise::default(),
            n_init: 3,
            max_age: 30,
            min_confidence: T::half(),
            association: AssociationConfig::default(),
            fps: T::lit(25.0),
            emit_predicted_frames: 2,
        }
    }
}

impl<T: Real> TrackerConfig<T> {
    pub fn with_model(model: MotionModelKind) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.max_age == 0 {
            return Err(Error::Config("n_init and max_age must be at least 1".into()));
        }
        if !(self.fps > T::zero()) {
            return Err(Error::Config("fps must be positive".into()));
        }
        self.association.validate()
    }

    pub fn dt(&self) -> T {
        T::one() / self.fps
    }
}

/// One reported track in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput<T> {
    pub id: u64,
    pub bbox: HeadBox<T>,
    pub status: TrackStatus,
    /// True when the box comes from the prediction of a track missed this frame.
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput<T> {
    pub frame: u32,
    pub tracks: Vec<TrackOutput<T>>,
}

impl<T: Real> FrameOutput<T> {
    /// Confirmed entries, optionally including predicted ones.
    pub fn confirmed(&self, include_predicted: bool) -> impl Iterator<Item = &TrackOutput<T>> {
        self.tracks
            .iter()
            .filter(move |t| t.status == TrackStatus::Confirmed && (include_predicted || !t.predicted))
    }
}

#[derive(Debug, Clone)]
pub struct Tracker<T> {
    config: TrackerConfig<T>,
    model: MotionModel<T>,
    cam: CameraIntrinsics<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl<T: Real> Tracker<T> {
    pub fn new(config: TrackerConfig<T>, cam: CameraIntrinsics<T>) -> Result<Self> {
        config.validate()?;
        cam.validate()?;
        Ok(Self {
            model: MotionModel::with_noise(config.model, config.noise),
            config,
            cam,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    pub fn model(&self) -> &MotionModel<T> {
        &self.model
    }

    /// Live tracks, ordered by id.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Processes the detections of `frame`, which must exceed the previous frame index.
    pub fn step(&mut self, frame: u32, detections: &[Detection<T>]) -> Result<FrameOutput<T>> {
        let gap = match self.last_frame {
            Some(prev) if frame <= prev => {
                return Err(Error::Sequence {
                    previous: prev,
                    got: frame,
                })
            }
            Some(prev) => frame - prev,
            None => 1,
        };
        self.last_frame = Some(frame);

        let dets: Vec<Detection<T>> = detections
            .iter()
            .filter(|d| d.confidence >= self.config.min_confidence && d.bbox.validate().is_ok())
            .cloned()
            .collect();

        let dt = self.config.dt() * T::from_u32(gap).unwrap_or_else(T::one);
        for track in &mut self.tracks {
            track.state = self.model.predict(&track.state, dt);
            track.time_since_update += gap;
        }

        let views: Vec<TrackView<'_, T>> = self
            .tracks
            .iter()
            .map(|t| TrackView {
                id: t.id,
                state: &t.state,
                time_since_update: t.time_since_update,
                confirmed: t.is_confirmed(),
                gallery: &t.gallery,
            })
            .collect();
        let associator = Associator {
            model: &self.model,
            cam: &self.cam,
            config: &self.config.association,
            dt: self.config.dt(),
        };
        let matched = associator.cascade_match(&views, &dets);
        drop(views);

        for m in &matched.matches {
            let det = &dets[m.detection];
            let track = &mut self.tracks[m.track];
            match self.model.update(&track.state, &det.bbox, &self.cam) {
                Ok(state) => {
                    track.state = state;
                    track.hits += 1;
                    track.time_since_update = 0;
                    if let Some(e) = &det.embedding {
                        track.gallery.push(e.clone());
                        let excess = track.gallery.len().saturating_sub(self.config.association.gallery_size);
                        track.gallery.drain(..excess);
                    }
                }
                Err(_) => track.status = TrackStatus::Deleted,
            }
        }
        for &ti in &matched.unmatched_tracks {
            let track = &mut self.tracks[ti];
            match track.status {
                TrackStatus::Tentative => track.status = TrackStatus::Deleted,
                TrackStatus::Confirmed if track.time_since_update > self.config.max_age => {
                    track.status = TrackStatus::Deleted
                }
                _ => {}
            }
        }
        for &di in &matched.unmatched_detections {
            self.spawn(frame, &dets[di]);
        }
        for track in &mut self.tracks {
            if track.status == TrackStatus::Tentative && track.hits >= self.config.n_init {
                track.status = TrackStatus::Confirmed;
            }
        }

        let mut out = FrameOutput {
            frame,
            tracks: Vec::new(),
        };
        for track in &self.tracks {
            let updated = track.time_since_update == 0;
            let report = match track.status {
                TrackStatus::Confirmed => updated || track.time_since_update <= self.config.emit_predicted_frames,
                TrackStatus::Tentative => updated,
                TrackStatus::Deleted => false,
            };
            if report {
                out.tracks.push(TrackOutput {
                    id: track.id,
                    bbox: self.model.to_box(&track.state, &self.cam),
                    status: track.status,
                    predicted: !updated,
                });
            }
        }
        self.tracks.retain(|t| !t.is_deleted());
        Ok(out)
    }

    fn spawn(&mut self, frame: u32, det: &Detection<T>) {
        let Ok(state) = self.model.initiate(&det.bbox, &self.cam, self.config.dt()) else {
            return;
        };
        let gallery = det.embedding.iter().cloned().collect();
        self.tracks.push(Track {
            id: self.next_id,
            state,
            status: TrackStatus::Tentative,
            hits: 1,
            time_since_update: 0,
            gallery,
            created_frame: frame,
        });
        self.next_id += 1;
    }
}

/// Runs a fresh tracker over `(frame, detections)` pairs given in increasing frame order.
pub fn run_sequence<T: Real>(
    frames: &[(u32, Vec<Detection<T>>)],
    config: &TrackerConfig<T>,
    cam: &CameraIntrinsics<T>,
) -> Result<Vec<FrameOutput<T>>> {
    let mut tracker = Tracker::new(*config, *cam)?;
    frames
        .iter()
        .map(|(frame, dets)| tracker.step(*frame, dets))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64) -> Detection<f64> {
        Detection::new(HeadBox::new(x, 500.0, 0.75, 40.0), 0.9, None)
    }

    fn tracker(kind: MotionModelKind) -> Tracker<f64> {
        Tracker::new(TrackerConfig::with_model(kind), CameraIntrinsics::default()).unwrap()
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let mut t = tracker(MotionModelKind::Phys3d);
        assert!(t.step(1, &[]).unwrap().tracks.is_empty());
    }

    #[test]
    fn stationary_detection_confirms_on_third_frame() {
        for kind in MotionModelKind::ALL {
            let mut t = tracker(kind);
            let o1 = t.step(1, &[det(700.0)]).unwrap();
            let o2 = t.step(2, &[det(700.0)]).unwrap();
            let o3 = t.step(3, &[det(700.0)]).unwrap();
            assert_eq!(o1.tracks[0].status, TrackStatus::Tentative);
            assert_eq!(o2.tracks[0].status, TrackStatus::Tentative);
            assert_eq!(o3.tracks[0].status, TrackStatus::Confirmed);
            assert!(o1.tracks[0].id == 1 && o2.tracks[0].id == 1 && o3.tracks[0].id == 1);
        }
    }

    #[test]
    fn track_expires_and_new_id_is_issued() {
        let mut t = tracker(MotionModelKind::Cv8d);
        let max_age = t.config().max_age;
        for f in 1..=5 {
            t.step(f, &[det(700.0)]).unwrap();
        }
        let mut frame = 5;
        for _ in 0..=max_age {
            frame += 1;
            t.step(frame, &[]).unwrap();
        }
        assert!(t.tracks().is_empty());
        let out = t.step(frame + 1, &[det(700.0)]).unwrap();
        assert_eq!(out.tracks[0].id, 2);
    }

    #[test]
    fn predicted_boxes_are_flagged() {
        let mut t = tracker(MotionModelKind::Phys3d);
        for f in 1..=4 {
            t.step(f, &[det(700.0)]).unwrap();
        }
        let o = t.step(5, &[]).unwrap();
        assert!(o.tracks[0].predicted);
        t.step(6, &[]).unwrap();
        assert!(t.step(7, &[]).unwrap().tracks.is_empty());
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut t = tracker(MotionModelKind::Cv8d);
        t.step(3, &[]).unwrap();
        assert!(matches!(t.step(3, &[]), Err(Error::Sequence { .. })));
        assert!(t.step(2, &[]).is_err());
    }

    #[test]
    fn low_confidence_detections_are_dropped() {
        let mut t = tracker(MotionModelKind::Cv8d);
        let weak = Detection::new(HeadBox::new(700.0, 500.0, 0.75, 40.0), 0.3, None);
        assert!(t.step(1, &[weak]).unwrap().tracks.is_empty());
    }
}
