//! Crowd tracking and counting from a moving, decelerating camera.
//!
//! Detections of heads are associated into tracks by a Kalman-filter
//! tracker with one of three motion models, and tracks are counted when
//! they persist inside virtual bands near the image borders. The crate also
//! ships the evaluation metrics, a seeded scene simulator and readers and
//! writers for the MOT text formats.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod association;
pub mod counting;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod scalar;
pub mod simulator;
pub mod tracker;

pub use assignment::{solve_assignment, Assignment, CostMatrix};
pub use association::{AssociationConfig, Detection, Embedding};
pub use counting::{BandConfig, CountLedger, CountSummary, Side};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, HeadBox, Point3D};
pub use metrics::{clear_mot, counting_metrics, identity_metrics, CountReport, MotReport, Trajectories};
pub use motion::{KalmanState, MotionModel, MotionModelKind, MotionNoise};
pub use scalar::Real;
pub use simulator::{generate, scripted_scenarios, NoiseConfig, SceneConfig, SimulatedSequence};
pub use tracker::{run_sequence, FrameOutput, Track, TrackOutput, Tracker, TrackerConfig};

pub type Camera64 = CameraIntrinsics<f64>;
pub type Camera32 = CameraIntrinsics<f32>;
pub type HeadBox64 = HeadBox<f64>;
pub type HeadBox32 = HeadBox<f32>;
pub type Detection64 = Detection<f64>;
pub type Detection32 = Detection<f32>;
pub type Tracker64 = Tracker<f64>;
pub type Tracker32 = Tracker<f32>;
pub type TrackerConfig64 = TrackerConfig<f64>;
pub type TrackerConfig32 = TrackerConfig<f32>;
pub type BandConfig64 = BandConfig<f64>;
pub type BandConfig32 = BandConfig<f32>;
pub type FrameOutput64 = FrameOutput<f64>;
pub type FrameOutput32 = FrameOutput<f32>;
