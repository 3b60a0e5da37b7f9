//! Pinhole projection and the depth-from-head-height relation.
//!
//! A head of physical height `H` at depth `Z` images to a box of height
//! `h = fy·H/Z`; its center projects to `(cx + fx·X/Z, cy + fy·Y/Z)`.
//! These two maps tie the pixel boxes produced by a detector to the 3-D
//! state used by the physics-constrained motion model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Nominal head height used to initialize depth, in meters.
pub const DEFAULT_HEAD_HEIGHT: f64 = 0.3;

/// Depth floor applied to every geometric inversion, in meters.
pub const MIN_DEPTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub image_width: T,
    pub image_height: T,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, image_width: T, image_height: T) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.fx > zero && self.fy > zero) {
            return Err(Error::Domain("focal lengths must be positive".into()));
        }
        if !(self.image_width > zero && self.image_height > zero) {
            return Err(Error::Domain("image size must be positive".into()));
        }
        if !(self.cx >= zero && self.cx <= self.image_width) {
            return Err(Error::Domain("cx outside the image".into()));
        }
        if !(self.cy >= zero && self.cy <= self.image_height) {
            return Err(Error::Domain("cy outside the image".into()));
        }
        Ok(())
    }

    /// Multiplies every pixel quantity by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            image_width: self.image_width * s,
            image_height: self.image_height * s,
        }
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            image_width: U::lit(self.image_width.as_f64()),
            image_height: U::lit(self.image_height.as_f64()),
        }
    }
}

impl Default for CameraIntrinsics<f64> {
    /// 1920×1080 camera with a 1000 px focal length.
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
            image_width: 1920.0,
            image_height: 1080.0,
        }
    }
}

/// Camera-frame point: `x` lateral, `y` vertical (down), `z` along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3D<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3D<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }
}

/// Center-based head box: center `(x, y)`, aspect ratio `a = w/h`, height `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadBox<T> {
    pub x: T,
    pub y: T,
    pub a: T,
    pub h: T,
}

impl<T: Real> HeadBox<T> {
    pub fn new(x: T, y: T, a: T, h: T) -> Self {
        Self { x, y, a, h }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > T::zero()) || !(self.a > T::zero()) {
            return Err(Error::Domain("non-positive box dimension".into()));
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::Domain("non-finite box center".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> T {
        self.a * self.h
    }

    /// Top-left corner plus size.
    pub fn to_tlwh(&self) -> [T; 4] {
        let w = self.width();
        [
            self.x - w * T::half(),
            self.y - self.h * T::half(),
            w,
            self.h,
        ]
    }

    pub fn from_tlwh(left: T, top: T, width: T, height: T) -> Result<Self> {
        if !(width > T::zero()) || !(height > T::zero()) {
            return Err(Error::Domain("non-positive box dimension".into()));
        }
        Ok(Self {
            x: left + width * T::half(),
            y: top + height * T::half(),
            a: width / height,
            h: height,
        })
    }

    pub fn area(&self) -> T {
        self.width() * self.h
    }

    pub fn iou(&self, other: &Self) -> T {
        let [l1, t1, w1, h1] = self.to_tlwh();
        let [l2, t2, w2, h2] = other.to_tlwh();
        let iw = ((l1 + w1).min(l2 + w2) - l1.max(l2)).max(T::zero());
        let ih = ((t1 + h1).min(t2 + h2) - t1.max(t2)).max(T::zero());
        let inter = iw * ih;
        let union = w1 * h1 + w2 * h2 - inter;
        if union > T::zero() {
            inter / union
        } else {
            T::zero()
        }
    }

    pub fn cast<U: Real>(&self) -> HeadBox<U> {
        HeadBox {
            x: U::lit(self.x.as_f64()),
            y: U::lit(self.y.as_f64()),
            a: U::lit(self.a.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project<T: Real>(p: &Point3D<T>, cam: &CameraIntrinsics<T>) -> Result<(T, T)> {
    if !(p.z > T::zero()) {
        return Err(Error::Domain("point behind camera".into()));
    }
    Ok((cam.cx + cam.fx * p.x / p.z, cam.cy + cam.fy * p.y / p.z))
}

/// Depth of a head of physical height `head_height` imaged with box height `h`.
pub fn depth_from_height<T: Real>(h: T, head_height: T, cam: &CameraIntrinsics<T>) -> Result<T> {
    if !(h > T::zero()) {
        return Err(Error::Domain("box height must be positive".into()));
    }
    if !(head_height > T::zero()) {
        return Err(Error::Domain("head height must be positive".into()));
    }
    Ok(cam.fy * head_height / h)
}

/// Image height of a head of physical height `head_height` at depth `z`.
pub fn height_at_depth<T: Real>(head_height: T, z: T, cam: &CameraIntrinsics<T>) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::Domain("point behind camera".into()));
    }
    Ok(cam.fy * head_height / z)
}

/// Lifts a head box into the camera frame assuming physical head height `head_height`.
///
/// The recovered depth is clamped to [`MIN_DEPTH`].
pub fn backproject<T: Real>(
    bx: &HeadBox<T>,
    head_height: T,
    cam: &CameraIntrinsics<T>,
) -> Result<Point3D<T>> {
    let z = depth_from_height(bx.h, head_height, cam)?.max(T::lit(MIN_DEPTH));
    Ok(Point3D {
        x: (bx.x - cam.cx) * z / cam.fx,
        y: (bx.y - cam.cy) * z / cam.fy,
        z,
    })
}

/// Jacobian of the measurement `[x, y, h]` with respect to the state
/// `[X, Y, H, Z, Ż, Z̈]`.
pub fn measurement_jacobian<T: Real>(state: &[T], cam: &CameraIntrinsics<T>) -> Result<Matrix<T>> {
    if state.len() != 6 {
        return Err(Error::Domain(format!(
            "physics state has 6 entries, got {}",
            state.len()
        )));
    }
    let (x, y, hh, z) = (state[0], state[1], state[2], state[3]);
    if !(z > T::zero()) {
        return Err(Error::Domain("point behind camera".into()));
    }
    let z2 = z * z;
    let mut j = Matrix::zeros(3, 6);
    j[(0, 0)] = cam.fx / z;
    j[(0, 3)] = -cam.fx * x / z2;
    j[(1, 1)] = cam.fy / z;
    j[(1, 3)] = -cam.fy * y / z2;
    j[(2, 2)] = cam.fy / z;
    j[(2, 3)] = -cam.fy * hh / z2;
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(cx: f64, cy: f64) -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(1000.0, 1000.0, cx, cy, 1920.0, 1080.0).unwrap()
    }

    #[test]
    fn on_axis_point_hits_principal_point() {
        let p = project(&Point3D::new(0.0, 0.0, 10.0), &cam(960.0, 540.0)).unwrap();
        assert_eq!(p, (960.0, 540.0));
    }

    #[test]
    fn projection_arithmetic() {
        let c = cam(0.0, 0.0);
        assert_eq!(project(&Point3D::new(1.0, 0.5, 10.0), &c).unwrap(), (100.0, 50.0));
        assert_eq!(project(&Point3D::new(1.0, 0.5, 5.0), &c).unwrap(), (200.0, 100.0));
    }

    #[test]
    fn behind_camera_is_rejected() {
        let c = cam(0.0, 0.0);
        assert!(matches!(
            project(&Point3D::new(1.0, 0.5, 0.0), &c),
            Err(Error::Domain(_))
        ));
        assert!(project(&Point3D::new(1.0, 0.5, -3.0), &c).is_err());
    }

    #[test]
    fn depth_from_height_values() {
        let c = cam(0.0, 0.0);
        assert_eq!(depth_from_height(30.0, 0.3, &c).unwrap(), 10.0);
        assert_eq!(depth_from_height(300.0, 0.3, &c).unwrap(), 1.0);
        assert_eq!(depth_from_height(60.0, 0.3, &c).unwrap(), 5.0);
        assert!(depth_from_height(0.0, 0.3, &c).is_err());
        assert!(depth_from_height(-1.0, 0.3, &c).is_err());
    }

    #[test]
    fn backprojection_values() {
        let p = backproject(&HeadBox::new(960.0, 540.0, 0.7, 30.0), 0.3, &cam(960.0, 540.0)).unwrap();
        assert_eq!(p, Point3D::new(0.0, 0.0, 10.0));
        let q = backproject(&HeadBox::new(100.0, 50.0, 0.7, 30.0), 0.3, &cam(0.0, 0.0)).unwrap();
        assert!((q.x - 1.0).abs() < 1e-12 && (q.y - 0.5).abs() < 1e-12 && q.z == 10.0);
    }

    #[test]
    fn backprojection_round_trip() {
        let c = cam(960.0, 540.0);
        let b = HeadBox::new(1234.5, 321.0, 0.8, 42.0);
        let p = backproject(&b, 0.3, &c).unwrap();
        let (x, y) = project(&p, &c).unwrap();
        assert!((x - b.x).abs() < 1e-9 && (y - b.y).abs() < 1e-9);
        assert!((height_at_depth(0.3, p.z, &c).unwrap() - b.h).abs() < 1e-9);
    }

    #[test]
    fn backprojection_clamps_depth() {
        // h = 1000 px at H = 0.3 m would put the head at 0.3 m.
        let p = backproject(&HeadBox::new(960.0, 540.0, 0.7, 1000.0), 0.3, &cam(960.0, 540.0)).unwrap();
        assert_eq!(p.z, MIN_DEPTH);
    }

    #[test]
    fn jacobian_closed_form_entries() {
        let c = cam(960.0, 540.0);
        let j = measurement_jacobian(&[0.0, 0.0, 0.3, 10.0, 0.0, 0.0], &c).unwrap();
        assert_eq!(j[(0, 3)], 0.0);
        assert_eq!(j[(1, 3)], 0.0);
        let j = measurement_jacobian(&[1.0, 0.0, 0.3, 10.0, 0.0, 0.0], &c).unwrap();
        assert!((j[(0, 3)] + 10.0).abs() < 1e-12);
        for col in 4..6 {
            for row in 0..3 {
                assert_eq!(j[(row, col)], 0.0);
            }
        }
        assert!(measurement_jacobian(&[1.0, 0.0, 0.3, 0.0, 0.0, 0.0], &c).is_err());
    }

    #[test]
    fn iou_of_tlwh_boxes() {
        let a = HeadBox::<f64>::from_tlwh(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = HeadBox::<f64>::from_tlwh(5.0, 0.0, 10.0, 10.0).unwrap();
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        let far = HeadBox::from_tlwh(100.0, 100.0, 1.0, 1.0).unwrap();
        assert_eq!(a.iou(&far), 0.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 2.0, 2.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.0, 1.0, 2.0, 2.0).is_err());
        assert!(CameraIntrinsics::default().validate().is_ok());
    }
}
