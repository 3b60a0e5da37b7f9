//! Kalman state-space models: image-plane constant velocity (8-D), image-plane
//! constant acceleration (12-D) and the physics-constrained 3-D model.
//!
//! The 3-D model keeps `[X, Y, H, Z, Ż, Z̈]`: lateral/vertical head position,
//! physical head height and the depth kinematics driven by the camera's
//! ego-motion. It observes `[x, y, h]` through the pinhole maps in
//! [`crate::geometry`] and is corrected with a linearized (extended) update.
//! The box aspect ratio is not part of that state; it is smoothed separately.
//!
//! Derivative entries are expressed per second; `dt` is the frame period.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, CameraIntrinsics, HeadBox, DEFAULT_HEAD_HEIGHT, MIN_DEPTH};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Smallest head height the 3-D state may hold, in meters.
const MIN_HEAD_HEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionModelKind {
    Cv8d,
    Ca12d,
    Phys3d,
}

impl MotionModelKind {
    pub const ALL: [MotionModelKind; 3] = [Self::Cv8d, Self::Ca12d, Self::Phys3d];

    pub fn state_dim(self) -> usize {
        match self {
            Self::Cv8d => 8,
            Self::Ca12d => 12,
            Self::Phys3d => 6,
        }
    }

    pub fn measurement_dim(self) -> usize {
        match self {
            Self::Cv8d | Self::Ca12d => 4,
            Self::Phys3d => 3,
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Cv8d => "CV-8D",
            Self::Ca12d => "CA-12D",
            Self::Phys3d => "Phys-3D",
        }
    }
}

impl fmt::Display for MotionModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cv8d => "cv8d",
            Self::Ca12d => "ca12d",
            Self::Phys3d => "phys3d",
        })
    }
}

impl FromStr for MotionModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cv8d" => Ok(Self::Cv8d),
            "ca12d" => Ok(Self::Ca12d),
            "phys3d" => Ok(Self::Phys3d),
            other => Err(Error::Config(format!("unknown motion model '{other}'"))),
        }
    }
}

/// Noise scales for all three models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise<T> {
    /// Position std per frame as a fraction of box height.
    pub std_weight_position: T,
    /// Velocity std per frame as a fraction of box height.
    pub std_weight_velocity: T,
    /// Acceleration std per frame as a fraction of box height (12-D only).
    pub std_weight_acceleration: T,
    /// Aspect ratio process std per frame.
    pub std_aspect: T,
    /// Aspect ratio derivative process std per frame.
    pub std_aspect_rate: T,
    /// 3-D process stds per √s: X, Y (m), H (m), Z (m), Ż (m/s), Z̈ (m/s²).
    pub phys_sigma_x: T,
    pub phys_sigma_y: T,
    pub phys_sigma_h: T,
    pub phys_sigma_z: T,
    pub phys_sigma_zdot: T,
    pub phys_sigma_zddot: T,
    /// Measurement std of x, y and h as a fraction of box height ...
    pub meas_weight: T,
    /// ... floored at this many pixels.
    pub meas_floor_px: T,
    /// Measurement std of the aspect ratio.
    pub meas_aspect: T,
    /// Smoothing weight of the aspect-ratio EMA carried by the 3-D model.
    pub aspect_beta: T,
    /// Physical head height used to initialize the 3-D state, in meters.
    pub head_height: T,
    /// Optional seed for the initial depth velocity Ż (m/s, negative when approaching).
    pub ego_velocity_prior: Option<T>,
}

impl<T: Real> Default for MotionNoise<T> {
    fn default() -> Self {
        Self {
            std_weight_position: T::lit(1.0 / 20.0),
            std_weight_velocity: T::lit(1.0 / 160.0),
            std_weight_acceleration: T::lit(1.0 / 320.0),
            std_aspect: T::lit(1e-2),
            std_aspect_rate: T::lit(1e-5),
            phys_sigma_x: T::lit(0.05),
            phys_sigma_y: T::lit(0.05),
            phys_sigma_h: T::lit(0.01),
            phys_sigma_z: T::lit(0.1),
            phys_sigma_zdot: T::lit(0.5),
            phys_sigma_zddot: T::lit(0.5),
            meas_weight: T::lit(0.05),
            meas_floor_px: T::one(),
            meas_aspect: T::lit(0.1),
            aspect_beta: T::lit(0.3),
            head_height: T::lit(DEFAULT_HEAD_HEIGHT),
            ego_velocity_prior: None,
        }
    }
}

/// Filter mean and covariance, plus the smoothed aspect ratio used by the 3-D model.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
    pub aspect_ema: T,
}

/// Predicted measurement and the factorized innovation covariance.
#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
    chol: Cholesky<T>,
}

impl<T: Real> Projection<T> {
    /// Squared Mahalanobis distance of a measurement vector.
    pub fn distance(&self, measurement: &[T]) -> T {
        let nu: Vec<T> = measurement
            .iter()
            .zip(&self.mean)
            .map(|(&z, &m)| z - m)
            .collect();
        self.chol.mahalanobis_sq(&nu)
    }
}

/// A motion model of a given kind with its noise configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel<T> {
    pub kind: MotionModelKind,
    pub noise: MotionNoise<T>,
}

impl<T: Real> MotionModel<T> {
    pub fn new(kind: MotionModelKind) -> Self {
        Self {
            kind,
            noise: MotionNoise::default(),
        }
    }

    pub fn with_noise(kind: MotionModelKind, noise: MotionNoise<T>) -> Self {
        Self { kind, noise }
    }

    /// Measurement vector of a box in this model's measurement space.
    pub fn measurement(&self, bx: &HeadBox<T>) -> Vec<T> {
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => vec![bx.x, bx.y, bx.a, bx.h],
            MotionModelKind::Phys3d => vec![bx.x, bx.y, bx.h],
        }
    }

    pub fn initiate(&self, det: &HeadBox<T>, cam: &CameraIntrinsics<T>, dt: T) -> Result<KalmanState<T>> {
        det.validate()?;
        let n = &self.noise;
        let h = det.h;
        let two = T::two();
        let ten = T::lit(10.0);
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => {
                let dim = self.kind.state_dim();
                let mut mean = vec![T::zero(); dim];
                mean[..4].copy_from_slice(&[det.x, det.y, det.a, det.h]);
                let pos = two * n.std_weight_position * h;
                let vel = ten * n.std_weight_velocity * h / dt;
                let mut std = vec![pos, pos, n.std_aspect, pos, vel, vel, n.std_aspect_rate / dt, vel];
                if self.kind == MotionModelKind::Ca12d {
                    let acc = ten * n.std_weight_acceleration * h / (dt * dt);
                    std.extend([acc, acc, n.std_aspect_rate / (dt * dt), acc]);
                }
                Ok(KalmanState {
                    mean,
                    covariance: diag_sq(&std),
                    aspect_ema: det.a,
                })
            }
            MotionModelKind::Phys3d => {
                let p = geometry::backproject(det, n.head_height, cam)?;
                let zdot = n.ego_velocity_prior.unwrap_or_else(T::zero);
                let mean = vec![p.x, p.y, n.head_height, p.z, zdot, T::zero()];
                let std = [
                    T::lit(0.5),
                    T::lit(0.5),
                    T::lit(0.05),
                    T::lit(0.2) * p.z,
                    T::lit(2.0),
                    T::one(),
                ];
                Ok(KalmanState {
                    mean,
                    covariance: diag_sq(&std),
                    aspect_ema: det.a,
                })
            }
        }
    }

    /// State transition matrix for a step of `dt` seconds.
    pub fn transition(&self, dt: T) -> Matrix<T> {
        let dim = self.kind.state_dim();
        let mut f = Matrix::identity(dim);
        let half_dt2 = T::half() * dt * dt;
        match self.kind {
            MotionModelKind::Cv8d => {
                for i in 0..4 {
                    f[(i, i + 4)] = dt;
                }
            }
            MotionModelKind::Ca12d => {
                for i in 0..4 {
                    f[(i, i + 4)] = dt;
                    f[(i, i + 8)] = half_dt2;
                    f[(i + 4, i + 8)] = dt;
                }
            }
            MotionModelKind::Phys3d => {
                f[(3, 4)] = dt;
                f[(3, 5)] = half_dt2;
                f[(4, 5)] = dt;
            }
        }
        f
    }

    /// Process noise covariance for a step of `dt` seconds around `state`.
    pub fn process_noise(&self, state: &KalmanState<T>, dt: T) -> Matrix<T> {
        let n = &self.noise;
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => {
                let h = state.mean[3].abs();
                let pos = n.std_weight_position * h;
                let vel = n.std_weight_velocity * h / dt;
                let mut std = vec![pos, pos, n.std_aspect, pos, vel, vel, n.std_aspect_rate / dt, vel];
                if self.kind == MotionModelKind::Ca12d {
                    let acc = n.std_weight_acceleration * h / (dt * dt);
                    std.extend([acc, acc, n.std_aspect_rate / (dt * dt), acc]);
                }
                diag_sq(&std)
            }
            MotionModelKind::Phys3d => {
                let std = [
                    n.phys_sigma_x,
                    n.phys_sigma_y,
                    n.phys_sigma_h,
                    n.phys_sigma_z,
                    n.phys_sigma_zdot,
                    n.phys_sigma_zddot,
                ];
                Matrix::from_diagonal(&std.map(|s| s * s * dt))
            }
        }
    }

    pub fn predict(&self, state: &KalmanState<T>, dt: T) -> KalmanState<T> {
        let f = self.transition(dt);
        let q = self.process_noise(state, dt);
        let mut mean = f.mul_vec(&state.mean);
        let covariance = f.congruence(&state.covariance).add(&q).symmetrized();
        if self.kind == MotionModelKind::Phys3d {
            clamp_physical(&mut mean);
        }
        KalmanState {
            mean,
            covariance,
            aspect_ema: state.aspect_ema,
        }
    }

    /// Box height implied by the state, in pixels.
    pub fn predicted_height(&self, state: &KalmanState<T>, cam: &CameraIntrinsics<T>) -> T {
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => state.mean[3],
            MotionModelKind::Phys3d => cam.fy * state.mean[2] / state.mean[3],
        }
    }

    fn measurement_noise(&self, h: T) -> Matrix<T> {
        let n = &self.noise;
        let s = (n.meas_weight * h.abs()).max(n.meas_floor_px);
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => {
                diag_sq(&[s, s, n.meas_aspect, s])
            }
            MotionModelKind::Phys3d => diag_sq(&[s, s, s]),
        }
    }

    /// Measurement function and its Jacobian at the state mean.
    fn linearize(&self, state: &KalmanState<T>, cam: &CameraIntrinsics<T>) -> Result<(Vec<T>, Matrix<T>)> {
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => {
                let mut obs = Matrix::zeros(4, self.kind.state_dim());
                for i in 0..4 {
                    obs[(i, i)] = T::one();
                }
                Ok((state.mean[..4].to_vec(), obs))
            }
            MotionModelKind::Phys3d => {
                let m = &state.mean;
                let (x, y, hh, z) = (m[0], m[1], m[2], m[3]);
                if !(z > T::zero()) {
                    return Err(Error::Domain("point behind camera".into()));
                }
                let predicted = vec![cam.cx + cam.fx * x / z, cam.cy + cam.fy * y / z, cam.fy * hh / z];
                Ok((predicted, geometry::measurement_jacobian(m, cam)?))
            }
        }
    }

    /// Predicted measurement distribution.
    pub fn project(&self, state: &KalmanState<T>, cam: &CameraIntrinsics<T>) -> Result<Projection<T>> {
        let (mean, jac) = self.linearize(state, cam)?;
        let r = self.measurement_noise(self.predicted_height(state, cam));
        let covariance = jac.congruence(&state.covariance).add(&r).symmetrized();
        let chol = Cholesky::new(&covariance)?;
        Ok(Projection {
            mean,
            covariance,
            chol,
        })
    }

    /// Kalman correction with a detected box. The posterior uses the Joseph form.
    pub fn update(
        &self,
        state: &KalmanState<T>,
        meas: &HeadBox<T>,
        cam: &CameraIntrinsics<T>,
    ) -> Result<KalmanState<T>> {
        meas.validate()?;
        let (predicted, jac) = self.linearize(state, cam)?;
        let r = self.measurement_noise(self.predicted_height(state, cam));
        let p = &state.covariance;
        let s = jac.congruence(p).add(&r).symmetrized();
        let chol = Cholesky::new(&s)?;

        // K = P Jᵀ S⁻¹, assembled through Kᵀ = S⁻¹ (J P).
        let jp = jac.mul(p);
        let n = p.rows();
        let m = s.rows();
        let mut gain = Matrix::zeros(n, m);
        let mut column = vec![T::zero(); m];
        for j in 0..n {
            for (i, c) in column.iter_mut().enumerate() {
                *c = jp[(i, j)];
            }
            let solved = chol.solve(&column);
            for (i, v) in solved.into_iter().enumerate() {
                gain[(j, i)] = v;
            }
        }

        let z = self.measurement(meas);
        let innovation: Vec<T> = z.iter().zip(&predicted).map(|(&a, &b)| a - b).collect();
        let correction = gain.mul_vec(&innovation);
        let mut mean: Vec<T> = state.mean.iter().zip(&correction).map(|(&a, &b)| a + b).collect();

        let ikh = Matrix::identity(n).sub(&gain.mul(&jac));
        let covariance = ikh.congruence(p).add(&gain.congruence(&r)).symmetrized();

        let beta = self.noise.aspect_beta;
        let aspect_ema = (T::one() - beta) * state.aspect_ema + beta * meas.a;
        if self.kind == MotionModelKind::Phys3d {
            clamp_physical(&mut mean);
        }
        Ok(KalmanState {
            mean,
            covariance,
            aspect_ema,
        })
    }

    /// Squared Mahalanobis distance between the predicted and the detected box;
    /// `+∞` if the innovation covariance cannot be factorized.
    pub fn gating_distance(&self, state: &KalmanState<T>, meas: &HeadBox<T>, cam: &CameraIntrinsics<T>) -> T {
        match self.project(state, cam) {
            Ok(proj) => proj.distance(&self.measurement(meas)),
            Err(_) => T::infinity(),
        }
    }

    /// Box readout of the state.
    pub fn to_box(&self, state: &KalmanState<T>, cam: &CameraIntrinsics<T>) -> HeadBox<T> {
        let m = &state.mean;
        match self.kind {
            MotionModelKind::Cv8d | MotionModelKind::Ca12d => HeadBox::new(m[0], m[1], m[2], m[3]),
            MotionModelKind::Phys3d => {
                let z = m[3].max(T::lit(MIN_DEPTH));
                HeadBox::new(
                    cam.cx + cam.fx * m[0] / z,
                    cam.cy + cam.fy * m[1] / z,
                    state.aspect_ema,
                    cam.fy * m[2] / z,
                )
            }
        }
    }

    /// Depth estimate of the 3-D model, `None` for image-plane models.
    pub fn depth(&self, state: &KalmanState<T>) -> Option<T> {
        (self.kind == MotionModelKind::Phys3d).then(|| state.mean[3])
    }

    /// Physical head height estimate of the 3-D model.
    pub fn head_height(&self, state: &KalmanState<T>) -> Option<T> {
        (self.kind == MotionModelKind::Phys3d).then(|| state.mean[2])
    }
}

fn clamp_physical<T: Real>(mean: &mut [T]) {
    mean[2] = mean[2].max(T::lit(MIN_HEAD_HEIGHT));
    mean[3] = mean[3].max(T::lit(MIN_DEPTH));
}

fn diag_sq<T: Real>(std: &[T]) -> Matrix<T> {
    Matrix::from_diagonal(&std.iter().map(|&s| s * s).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 1.0 / 25.0;

    fn cam() -> CameraIntrinsics<f64> {
        CameraIntrinsics::default()
    }

    #[test]
    fn phys_initiation_backprojects() {
        let m = MotionModel::new(MotionModelKind::Phys3d);
        let s = m.initiate(&HeadBox::new(960.0, 540.0, 0.7, 30.0), &cam(), DT).unwrap();
        assert_eq!(s.mean, vec![0.0, 0.0, 0.3, 10.0, 0.0, 0.0]);
        assert_eq!(s.aspect_ema, 0.7);
    }

    #[test]
    fn image_plane_initiation_has_zero_derivatives() {
        let det = HeadBox::new(100.0, 50.0, 0.7, 30.0);
        let cv = MotionModel::new(MotionModelKind::Cv8d).initiate(&det, &cam(), DT).unwrap();
        assert_eq!(cv.mean, vec![100.0, 50.0, 0.7, 30.0, 0.0, 0.0, 0.0, 0.0]);
        let ca = MotionModel::new(MotionModelKind::Ca12d).initiate(&det, &cam(), DT).unwrap();
        assert_eq!(&ca.mean[..4], &[100.0, 50.0, 0.7, 30.0]);
        assert!(ca.mean[4..].iter().all(|&v| v == 0.0));
        assert_eq!(ca.mean.len(), 12);
    }

    #[test]
    fn initiation_rejects_degenerate_boxes() {
        let m = MotionModel::new(MotionModelKind::Phys3d);
        assert!(m.initiate(&HeadBox::new(0.0, 0.0, 0.7, 0.0), &cam(), DT).is_err());
    }

    #[test]
    fn depth_kinematics_step() {
        let m = MotionModel::new(MotionModelKind::Phys3d);
        let mut s = m.initiate(&HeadBox::new(960.0, 540.0, 0.7, 30.0), &cam(), DT).unwrap();
        s.mean[4] = -2.0;
        s.mean[5] = 0.5;
        let p = m.predict(&s, 1.0);
        assert_eq!(&p.mean[3..], &[8.25, -1.5, 0.5]);
        assert_eq!(&p.mean[..3], &[0.0, 0.0, 0.3]);
    }

    #[test]
    fn constant_velocity_step() {
        let m = MotionModel::new(MotionModelKind::Cv8d);
        let mut s = m.initiate(&HeadBox::new(100.0, 50.0, 0.7, 30.0), &cam(), DT).unwrap();
        s.mean[4] = 2.0;
        assert_eq!(m.predict(&s, 1.0).mean[0], 102.0);
    }

    #[test]
    fn stationary_state_is_a_fixed_point_of_the_mean() {
        let det = HeadBox::new(400.0, 300.0, 0.75, 40.0);
        for kind in MotionModelKind::ALL {
            let m = MotionModel::new(kind);
            let s = m.initiate(&det, &cam(), DT).unwrap();
            let p = m.predict(&s, DT);
            assert_eq!(p.mean, s.mean, "{kind}");
            assert!(p.covariance.trace() > s.covariance.trace());
        }
    }

    #[test]
    fn phys_depth_is_clamped() {
        let m = MotionModel::new(MotionModelKind::Phys3d);
        let mut s = m.initiate(&HeadBox::new(960.0, 540.0, 0.7, 300.0), &cam(), DT).unwrap();
        s.mean[4] = -20.0;
        let p = m.predict(&s, 1.0);
        assert_eq!(p.mean[3], MIN_DEPTH);
    }

    #[test]
    fn zero_innovation_update_keeps_mean_and_shrinks_covariance() {
        let det = HeadBox::new(700.0, 500.0, 0.75, 36.0);
        for kind in MotionModelKind::ALL {
            let m = MotionModel::new(kind);
            let s = m.predict(&m.initiate(&det, &cam(), DT).unwrap(), DT);
            let predicted = m.to_box(&s, &cam());
            let meas = HeadBox::new(predicted.x, predicted.y, s.aspect_ema, predicted.h);
            let meas = if kind == MotionModelKind::Phys3d {
                meas
            } else {
                predicted
            };
            let u = m.update(&s, &meas, &cam()).unwrap();
            for (a, b) in u.mean.iter().zip(&s.mean) {
                assert!((a - b).abs() < 1e-9, "{kind}: mean moved");
            }
            assert!(u.covariance.trace() < s.covariance.trace(), "{kind}");
            assert_eq!(m.gating_distance(&s, &meas, &cam()), 0.0);
        }
    }

    #[test]
    fn scalar_kalman_gain() {
        // Prior variance 4 on x, measurement variance 1 → gain 0.8.
        let noise = MotionNoise {
            meas_weight: 0.0,
            meas_floor_px: 1.0,
            ..MotionNoise::default()
        };
        let m = MotionModel::with_noise(MotionModelKind::Cv8d, noise);
        let mut cov = Matrix::identity(8).scale(1e-12);
        cov[(0, 0)] = 4.0;
        let s = KalmanState {
            mean: vec![0.0, 0.0, 1.0, 30.0, 0.0, 0.0, 0.0, 0.0],
            covariance: cov,
            aspect_ema: 1.0,
        };
        let u = m.update(&s, &HeadBox::new(1.0, 0.0, 1.0, 30.0), &cam()).unwrap();
        assert!((u.mean[0] - 0.8).abs() < 1e-9);
        assert!((u.covariance[(0, 0)] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn readout_of_constructed_states() {
        let m = MotionModel::new(MotionModelKind::Phys3d);
        let s = KalmanState {
            mean: vec![0.0, 0.0, 0.3, 10.0, 0.0, 0.0],
            covariance: Matrix::identity(6),
            aspect_ema: 0.7,
        };
        let b = m.to_box(&s, &cam());
        assert_eq!((b.x, b.y, b.h), (960.0, 540.0, 30.0));

        let det = HeadBox::new(1500.0, 200.0, 0.8, 55.0);
        let b = m.to_box(&m.initiate(&det, &cam(), DT).unwrap(), &cam());
        assert!((b.x - det.x).abs() < 1e-9 && (b.y - det.y).abs() < 1e-9 && (b.h - det.h).abs() < 1e-9);

        let cv = MotionModel::new(MotionModelKind::Cv8d);
        let s = KalmanState {
            mean: vec![1.0, 2.0, 0.5, 4.0, 9.0, 9.0, 9.0, 9.0],
            covariance: Matrix::identity(8),
            aspect_ema: 0.1,
        };
        assert_eq!(cv.to_box(&s, &cam()), HeadBox::new(1.0, 2.0, 0.5, 4.0));
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("phys3d".parse::<MotionModelKind>().unwrap(), MotionModelKind::Phys3d);
        assert_eq!("CV-8D".parse::<MotionModelKind>().unwrap(), MotionModelKind::Cv8d);
        assert_eq!("ca12d".parse::<MotionModelKind>().unwrap(), MotionModelKind::Ca12d);
        assert!("kalman".parse::<MotionModelKind>().is_err());
    }
}
