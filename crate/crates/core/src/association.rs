//! Track-to-detection association.
//!
//! Each frame runs a matching cascade over confirmed tracks ordered by the
//! number of frames since their last update; every level gates candidate
//! pairs (chi-square on the motion innovation, cosine on appearance and, for
//! the 3-D model, a depth-plausibility check) and mixes the two distances
//! linearly before solving an assignment. Leftover detections are then offered
//! to tentative and just-missed tracks by box overlap.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, HeadBox};
use crate::motion::{KalmanState, MotionModel, MotionModelKind, Projection};
use crate::scalar::Real;

/// Embedding length produced by the appearance encoder.
pub const EMBEDDING_DIM: usize = 128;

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;
/// 0.90 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_90_4DOF: f64 = 7.7794;
/// 0.95 quantile of the chi-square distribution with 3 degrees of freedom.
pub const CHI2_95_3DOF: f64 = 7.8147;

/// Frame rate at which `depth_jump_max` is quoted.
const DEPTH_JUMP_REFERENCE_FPS: f64 = 25.0;

/// L2-normalized appearance descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Real> Embedding<T> {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<T>) -> Result<Self> {
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::Domain("embedding has zero or non-finite norm".into()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Accepts `values` only if they already have unit norm within `tolerance`.
    pub fn from_unit(values: Vec<T>, tolerance: T) -> Result<Self> {
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !((norm - T::one()).abs() <= tolerance) {
            return Err(Error::Domain(format!(
                "embedding norm {norm} deviates from 1 by more than {tolerance}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn cast<U: Real>(&self) -> Embedding<U> {
        Embedding {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Smallest cosine distance between `query` and any gallery member; `+∞` for an empty gallery.
pub fn cosine_distance<'a, T: Real>(
    query: &Embedding<T>,
    gallery: impl IntoIterator<Item = &'a Embedding<T>>,
) -> T {
    gallery
        .into_iter()
        .map(|g| T::one() - query.dot(g))
        .fold(T::infinity(), T::min)
}

/// `λ·(d_motion / chi2_gate) + (1−λ)·d_app`.
pub fn combined_cost<T: Real>(d_motion: T, d_app: T, lambda: T, chi2_gate: T) -> T {
    lambda * (d_motion / chi2_gate) + (T::one() - lambda) * d_app
}

/// Chi-square gating thresholds per motion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareGates<T> {
    pub cv8d: T,
    pub ca12d: T,
    pub phys3d: T,
}

impl<T: Real> ChiSquareGates<T> {
    pub fn for_model(&self, kind: MotionModelKind) -> T {
        match kind {
            MotionModelKind::Cv8d => self.cv8d,
            MotionModelKind::Ca12d => self.ca12d,
            MotionModelKind::Phys3d => self.phys3d,
        }
    }
}

impl<T: Real> Default for ChiSquareGates<T> {
    fn default() -> Self {
        Self {
            cv8d: T::lit(CHI2_95_4DOF),
            ca12d: T::lit(CHI2_90_4DOF),
            phys3d: T::lit(CHI2_95_3DOF),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationConfig<T> {
    /// Weight of the motion term in the combined cost.
    pub lambda: T,
    pub chi2_gates: ChiSquareGates<T>,
    /// Largest admissible cosine distance.
    pub appearance_gate: T,
    /// Number of cascade levels (frames since last update).
    pub cascade_depth: u32,
    /// Largest admissible relative depth jump per frame at 25 FPS (3-D model only).
    pub depth_jump_max: T,
    /// Largest admissible `1 − IoU` in the overlap stage.
    pub iou_fallback_threshold: T,
    /// Embeddings kept per track.
    pub gallery_size: usize,
    /// Disables the appearance term and gate when false.
    pub use_appearance: bool,
}

impl<T: Real> Default for AssociationConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::half(),
            chi2_gates: ChiSquareGates::default(),
            appearance_gate: T::lit(0.4),
            cascade_depth: 30,
            depth_jump_max: T::lit(0.25),
            iou_fallback_threshold: T::lit(0.7),
            gallery_size: 50,
            use_appearance: true,
        }
    }
}

impl<T: Real> AssociationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        if self.cascade_depth == 0 {
            return Err(Error::Config("cascade_depth must be at least 1".into()));
        }
        if !(self.appearance_gate >= T::zero()) || !(self.depth_jump_max > T::zero()) {
            return Err(Error::Config("gates must be positive".into()));
        }
        Ok(())
    }

    /// Motion-term weight actually applied: 1 when appearance is disabled.
    pub fn effective_lambda(&self) -> T {
        if self.use_appearance {
            self.lambda
        } else {
            T::one()
        }
    }
}

/// A detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub bbox: HeadBox<T>,
    pub confidence: T,
    pub embedding: Option<Embedding<T>>,
}

impl<T: Real> Detection<T> {
    pub fn new(bbox: HeadBox<T>, confidence: T, embedding: Option<Embedding<T>>) -> Self {
        Self {
            bbox,
            confidence,
            embedding,
        }
    }
}

/// What the association layer needs to know about a track.
#[derive(Debug, Clone, Copy)]
pub struct TrackView<'a, T> {
    pub id: u64,
    pub state: &'a KalmanState<T>,
    pub time_since_update: u32,
    pub confirmed: bool,
    pub gallery: &'a [Embedding<T>],
}

/// Why a candidate pair was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateFailure {
    Motion,
    Appearance,
    Depth,
}

/// Distances of a pair that passed every gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatePass<T> {
    pub d_motion: T,
    pub d_app: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStage {
    Cascade(u32),
    Iou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub track: usize,
    pub detection: usize,
    pub stage: MatchStage,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Gating and matching for one motion model, camera and frame period.
#[derive(Debug, Clone, Copy)]
pub struct Associator<'a, T> {
    pub model: &'a MotionModel<T>,
    pub cam: &'a CameraIntrinsics<T>,
    pub config: &'a AssociationConfig<T>,
    pub dt: T,
}

impl<'a, T: Real> Associator<'a, T> {
    pub fn chi2_gate(&self) -> T {
        self.config.chi2_gates.for_model(self.model.kind)
    }

    /// Largest relative depth deviation tolerated after `frames` predictions.
    pub fn depth_tolerance(&self, frames: u32) -> T {
        let frames = T::from_u32(frames.max(1)).unwrap_or_else(T::one);
        self.config.depth_jump_max * self.dt * T::lit(DEPTH_JUMP_REFERENCE_FPS) * frames
    }

    /// Applies every gate to one pair.
    pub fn gate(&self, track: &TrackView<'_, T>, det: &Detection<T>) -> std::result::Result<GatePass<T>, GateFailure> {
        let proj = self.model.project(track.state, self.cam).map_err(|_| GateFailure::Motion)?;
        self.gate_projected(track, &proj, det)
    }

    fn gate_projected(
        &self,
        track: &TrackView<'_, T>,
        proj: &Projection<T>,
        det: &Detection<T>,
    ) -> std::result::Result<GatePass<T>, GateFailure> {
        let d_motion = proj.distance(&self.model.measurement(&det.bbox));
        if !(d_motion <= self.chi2_gate()) {
            return Err(GateFailure::Motion);
        }
        if let (Some(z_pred), Some(hh)) = (self.model.depth(track.state), self.model.head_height(track.state)) {
            let z_det = self.cam.fy * hh / det.bbox.h;
            if !((z_det - z_pred).abs() / z_pred <= self.depth_tolerance(track.time_since_update)) {
                return Err(GateFailure::Depth);
            }
        }
        let d_app = match (&det.embedding, self.config.use_appearance) {
            (Some(e), true) if !track.gallery.is_empty() => {
                let d = cosine_distance(e, track.gallery);
                if !(d <= self.config.appearance_gate) {
                    return Err(GateFailure::Appearance);
                }
                d
            }
            _ => T::zero(),
        };
        Ok(GatePass { d_motion, d_app })
    }

    /// Upper bound of the combined cost over gated-in pairs.
    fn max_cascade_cost(&self) -> T {
        let lambda = self.config.effective_lambda();
        lambda + (T::one() - lambda) * self.config.appearance_gate
    }

    fn cascade_costs(&self, tracks: &[TrackView<'_, T>], rows: &[usize], dets: &[Detection<T>], cols: &[usize]) -> CostMatrix<T> {
        let lambda = self.config.effective_lambda();
        let chi2 = self.chi2_gate();
        let mut costs = CostMatrix::gated(rows.len(), cols.len());
        for (r, &ti) in rows.iter().enumerate() {
            let track = &tracks[ti];
            let Ok(proj) = self.model.project(track.state, self.cam) else {
                continue;
            };
            for (c, &di) in cols.iter().enumerate() {
                if let Ok(pass) = self.gate_projected(track, &proj, &dets[di]) {
                    costs.set(r, c, combined_cost(pass.d_motion, pass.d_app, lambda, chi2));
                }
            }
        }
        costs
    }

    /// Cascade over confirmed tracks followed by the overlap stage.
    ///
    /// `tracks` should be ordered by id; ties are then resolved towards
    /// lower ids and lower detection indices.
    pub fn cascade_match(&self, tracks: &[TrackView<'_, T>], dets: &[Detection<T>]) -> MatchResult {
        let mut result = MatchResult::default();
        let mut remaining: Vec<usize> = (0..dets.len()).collect();
        let mut track_matched = vec![false; tracks.len()];
        let max_cost = self.max_cascade_cost();

        for level in 1..=self.config.cascade_depth {
            if remaining.is_empty() {
                break;
            }
            let rows: Vec<usize> = (0..tracks.len())
                .filter(|&i| tracks[i].confirmed && tracks[i].time_since_update == level)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let costs = self.cascade_costs(tracks, &rows, dets, &remaining);
            let solved = solve_assignment(&costs, max_cost);
            let mut taken = vec![false; remaining.len()];
            for &(r, c) in &solved.pairs {
                track_matched[rows[r]] = true;
                taken[c] = true;
                result.matches.push(Match {
                    track: rows[r],
                    detection: remaining[c],
                    stage: MatchStage::Cascade(level),
                });
            }
            remaining = remaining
                .into_iter()
                .zip(taken)
                .filter_map(|(d, t)| (!t).then_some(d))
                .collect();
        }

        let iou_rows: Vec<usize> = (0..tracks.len())
            .filter(|&i| !track_matched[i] && (!tracks[i].confirmed || tracks[i].time_since_update == 1))
            .collect();
        if !iou_rows.is_empty() && !remaining.is_empty() {
            let boxes: Vec<HeadBox<T>> = iou_rows
                .iter()
                .map(|&i| self.model.to_box(tracks[i].state, self.cam))
                .collect();
            let threshold = self.config.iou_fallback_threshold;
            let costs = CostMatrix::from_fn(iou_rows.len(), remaining.len(), |r, c| {
                let cost = T::one() - boxes[r].iou(&dets[remaining[c]].bbox);
                if cost <= threshold {
                    cost
                } else {
                    T::infinity()
                }
            });
            let solved = solve_assignment(&costs, threshold);
            let mut taken = vec![false; remaining.len()];
            for &(r, c) in &solved.pairs {
                track_matched[iou_rows[r]] = true;
                taken[c] = true;
                result.matches.push(Match {
                    track: iou_rows[r],
                    detection: remaining[c],
                    stage: MatchStage::Iou,
                });
            }
            remaining = remaining
                .into_iter()
                .zip(taken)
                .filter_map(|(d, t)| (!t).then_some(d))
                .collect();
        }

        result.unmatched_tracks = (0..tracks.len()).filter(|&i| !track_matched[i]).collect();
        result.unmatched_detections = remaining;
        result.matches.sort_by_key(|m| (m.track, m.detection));
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;

    fn unit(dim: usize, axis: usize, sign: f64) -> Embedding<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = sign;
        Embedding::normalized(v).unwrap()
    }

    #[test]
    fn cosine_distance_cases() {
        let a = unit(4, 0, 1.0);
        let b = unit(4, 1, 1.0);
        assert_eq!(cosine_distance(&a, [&a]), 0.0);
        assert_eq!(cosine_distance(&a, [&b]), 1.0);
        let neg = unit(4, 0, -1.0);
        assert_eq!(cosine_distance(&a, [&a, &neg]), 0.0);
        assert_eq!(cosine_distance(&a, [&neg]), 2.0);
        assert_eq!(cosine_distance(&a, std::iter::empty()), f64::INFINITY);
    }

    #[test]
    fn combined_cost_cases() {
        assert_eq!(combined_cost(4.0, 0.9, 1.0, 8.0), 0.5);
        assert_eq!(combined_cost(4.0, 0.9, 0.0, 8.0), 0.9);
        let c = combined_cost::<f64>(0.4 * 9.4877, 0.4, 0.5, 9.4877);
        assert!((c - 0.4).abs() < 1e-12);
    }

    #[test]
    fn embedding_validation() {
        assert!(Embedding::<f64>::normalized(vec![0.0; 3]).is_err());
        assert!(Embedding::from_unit(vec![0.6, 0.8], 1e-6).is_ok());
        assert!(Embedding::from_unit(vec![0.6, 0.9], 1e-6).is_err());
    }

    fn setup(kind: MotionModelKind) -> (MotionModel<f64>, CameraIntrinsics<f64>, AssociationConfig<f64>) {
        (MotionModel::new(kind), CameraIntrinsics::default(), AssociationConfig::default())
    }

    #[test]
    fn gate_passes_zero_innovation() {
        let (model, cam, cfg) = setup(MotionModelKind::Cv8d);
        let det_box = HeadBox::new(500.0, 400.0, 0.75, 40.0);
        let state = model.initiate(&det_box, &cam, 0.04).unwrap();
        let emb = unit(8, 2, 1.0);
        let gallery = vec![emb.clone()];
        let view = TrackView {
            id: 1,
            state: &state,
            time_since_update: 1,
            confirmed: true,
            gallery: &gallery,
        };
        let assoc = Associator {
            model: &model,
            cam: &cam,
            config: &cfg,
            dt: 0.04,
        };
        let pass = assoc.gate(&view, &Detection::new(det_box, 0.9, Some(emb))).unwrap();
        assert_eq!(pass.d_motion, 0.0);
        assert_eq!(pass.d_app, 0.0);
        let other = unit(8, 3, 1.0);
        assert_eq!(
            assoc.gate(&view, &Detection::new(det_box, 0.9, Some(other))),
            Err(GateFailure::Appearance)
        );
    }

    #[test]
    fn depth_gate_rejects_implausible_jump() {
        let (model, cam, mut cfg) = setup(MotionModelKind::Phys3d);
        cfg.depth_jump_max = 0.3;
        // Predicted Z = 10 m; a detection with half the height implies Z = 20 m.
        let state = model
            .initiate(&HeadBox::new(960.0, 540.0, 0.75, 30.0), &cam, 0.04)
            .unwrap();
        let view = TrackView {
            id: 1,
            state: &state,
            time_since_update: 1,
            confirmed: true,
            gallery: &[],
        };
        let assoc = Associator {
            model: &model,
            cam: &cam,
            config: &cfg,
            dt: 0.04,
        };
        let far = Detection::new(HeadBox::new(960.0, 540.0, 0.75, 15.0), 0.9, None);
        let verdict = assoc.gate(&view, &far);
        assert!(matches!(verdict, Err(GateFailure::Depth) | Err(GateFailure::Motion)));

        // With the chi-square gate opened, the depth check alone rejects it.
        let mut open = cfg;
        open.chi2_gates.phys3d = 1e9;
        let assoc = Associator { config: &open, ..assoc };
        assert_eq!(assoc.gate(&view, &far), Err(GateFailure::Depth));
        assert!((assoc.depth_tolerance(1) - 0.3).abs() < 1e-12);
    }
}
