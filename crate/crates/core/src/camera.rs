//! Pinhole cameras and their JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Se3, Vec3};
use crate::scalar::Scalar;

/// Pinhole camera. Pixel centers sit at integer coordinates; the camera looks down `+z`
/// with image `y` pointing down.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T> {
    pub intrinsics: Mat3<T>,
    pub pose_world_to_cam: Se3<T>,
    pub width: usize,
    pub height: usize,
    pub near: T,
    pub far: T,
}

impl<T: Scalar> Camera<T> {
    pub fn new(
        intrinsics: Mat3<T>,
        pose_world_to_cam: Se3<T>,
        width: usize,
        height: usize,
        near: T,
        far: T,
    ) -> Result<Self> {
        let cam = Self {
            intrinsics,
            pose_world_to_cam,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Intrinsics with square pixels and the principal point at the image center.
    pub fn centered_intrinsics(focal: T, width: usize, height: usize) -> Mat3<T> {
        let half = T::lit(0.5);
        let cx = (T::from_usize(width) - T::one()) * half;
        let cy = (T::from_usize(height) - T::one()) * half;
        let (z, o) = (T::zero(), T::one());
        Mat3::from_rows([[focal, z, cx], [z, focal, cy], [z, z, o]])
    }

    /// Camera at `position` looking at `target`, with `up` giving the world up direction.
    pub fn look_at(
        position: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        intrinsics: Mat3<T>,
        width: usize,
        height: usize,
        near: T,
        far: T,
    ) -> Result<Self> {
        let rotation = look_rotation(position, target, up)
            .ok_or_else(|| Error::Camera("forward and up directions are degenerate".into()))?;
        let translation = -rotation.mul_vec(position);
        Self::new(
            intrinsics,
            Se3::new(rotation, translation),
            width,
            height,
            near,
            far,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics.m;
        let tol = T::lit(1e-6);
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera("image dimensions must be positive".into()));
        }
        if !(k[0][0] > T::zero() && k[1][1] > T::zero()) {
            return Err(Error::Camera("focal lengths must be positive".into()));
        }
        if k[1][0] != T::zero()
            || k[2][0] != T::zero()
            || k[2][1] != T::zero()
            || k[2][2] != T::one()
        {
            return Err(Error::Camera(
                "intrinsics must be upper-triangular with K[2][2] = 1".into(),
            ));
        }
        let r = &self.pose_world_to_cam.rotation;
        if r.transpose().matmul(r).max_abs_diff(&Mat3::identity()) > tol
            || (r.determinant() - T::one()).abs() > tol
        {
            return Err(Error::Camera(
                "rotation is not orthonormal with det +1".into(),
            ));
        }
        if !(T::zero() < self.near && self.near < self.far) {
            return Err(Error::Camera(format!(
                "clip planes must satisfy 0 < near < far (near {}, far {})",
                self.near, self.far
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn fx(&self) -> T {
        self.intrinsics.m[0][0]
    }
    #[inline]
    pub fn fy(&self) -> T {
        self.intrinsics.m[1][1]
    }
    #[inline]
    pub fn cx(&self) -> T {
        self.intrinsics.m[0][2]
    }
    #[inline]
    pub fn cy(&self) -> T {
        self.intrinsics.m[1][2]
    }
    #[inline]
    pub fn skew(&self) -> T {
        self.intrinsics.m[0][1]
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3<T> {
        let r = &self.pose_world_to_cam.rotation;
        -r.transpose().mul_vec(self.pose_world_to_cam.translation)
    }

    #[inline]
    pub fn world_to_cam(&self, p: Vec3<T>) -> Vec3<T> {
        self.pose_world_to_cam.apply(p)
    }

    /// Back-projects pixel `(u, v)` to the camera-space ray point with `z = 1`.
    pub fn unproject_unit_depth(&self, u: T, v: T) -> Vec3<T> {
        let y = (v - self.cy()) / self.fy();
        let x = (u - self.cx() - self.skew() * y) / self.fx();
        Vec3::new(x, y, T::one())
    }

    /// Whether a world point projects inside the image between the clip planes.
    pub fn sees(&self, p: Vec3<T>) -> bool {
        let c = self.world_to_cam(p);
        if c.z < self.near || c.z > self.far {
            return false;
        }
        let u = self.fx() * c.x / c.z + self.skew() * c.y / c.z + self.cx();
        let v = self.fy() * c.y / c.z + self.cy();
        let half = T::lit(0.5);
        u >= -half
            && v >= -half
            && u <= T::from_usize(self.width) - half
            && v <= T::from_usize(self.height) - half
    }

    /// Whether two cameras have the same pose within `tol` elementwise.
    pub fn same_pose(&self, o: &Self, tol: T) -> bool {
        self.pose_world_to_cam
            .rotation
            .max_abs_diff(&o.pose_world_to_cam.rotation)
            <= tol
            && self
                .pose_world_to_cam
                .translation
                .max_abs_diff(o.pose_world_to_cam.translation)
                <= tol
    }

    pub fn cast<U: Scalar>(&self) -> Camera<U> {
        Camera {
            intrinsics: self.intrinsics.cast(),
            pose_world_to_cam: self.pose_world_to_cam.cast(),
            width: self.width,
            height: self.height,
            near: U::lit(self.near.as_f64()),
            far: U::lit(self.far.as_f64()),
        }
    }

    pub fn to_json(&self) -> CameraJson {
        let r = &self.pose_world_to_cam.rotation.m;
        let t = self.pose_world_to_cam.translation;
        let mut w2c = Vec::with_capacity(12);
        for i in 0..3 {
            w2c.extend(r[i].iter().map(|v| v.as_f64()));
            w2c.push(t[i].as_f64());
        }
        CameraJson {
            w: self.width,
            h: self.height,
            k: self
                .intrinsics
                .to_row_vec()
                .iter()
                .map(|v| v.as_f64())
                .collect(),
            w2c,
            near: self.near.as_f64(),
            far: self.far.as_f64(),
        }
    }

    pub fn from_json(j: &CameraJson) -> Result<Self> {
        if j.k.len() != 9 {
            return Err(Error::Camera(format!(
                "K needs 9 values, got {}",
                j.k.len()
            )));
        }
        if j.w2c.len() != 12 {
            return Err(Error::Camera(format!(
                "w2c needs 12 values, got {}",
                j.w2c.len()
            )));
        }
        let k: Vec<T> = j.k.iter().map(|&v| T::lit(v)).collect();
        let mut r = [[T::zero(); 3]; 3];
        let mut t = Vec3::zeros();
        for i in 0..3 {
            for c in 0..3 {
                r[i][c] = T::lit(j.w2c[4 * i + c]);
            }
            t[i] = T::lit(j.w2c[4 * i + 3]);
        }
        Self::new(
            Mat3::from_row_slice(&k),
            Se3::new(Mat3::from_rows(r), t),
            j.w,
            j.h,
            T::lit(j.near),
            T::lit(j.far),
        )
    }
}

/// World-to-camera rotation whose `+z` axis points from `position` to `target` and whose
/// image `-y` axis is the projection of `up`. `None` when the directions are degenerate.
pub fn look_rotation<T: Scalar>(
    position: Vec3<T>,
    target: Vec3<T>,
    up: Vec3<T>,
) -> Option<Mat3<T>> {
    let fwd = target - position;
    let fwd_len = fwd.norm();
    if !(fwd_len > T::lit(1e-9)) {
        return None;
    }
    let z = fwd * (T::one() / fwd_len);
    let up_len = up.norm();
    if !(up_len > T::zero()) {
        return None;
    }
    let u = up * (T::one() / up_len);
    let ortho = u - z * u.dot(z);
    // |ortho| = sin(angle between up and forward)
    if !(ortho.norm() > T::lit(1e-4).sin()) {
        return None;
    }
    let y = -ortho.normalized();
    let x = y.cross(z);
    Some(Mat3::from_rows([x.to_array(), y.to_array(), z.to_array()]))
}

/// Serialized camera: `{"w","h","K":[9 row-major],"w2c":[12 row-major R|t],"near","far"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub w: usize,
    pub h: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub w2c: Vec<f64>,
    pub near: f64,
    pub far: f64,
}

pub fn cameras_to_json<T: Scalar>(cams: &[Camera<T>]) -> String {
    let js: Vec<CameraJson> = cams.iter().map(Camera::to_json).collect();
    serde_json::to_string_pretty(&js).expect("camera json serializes")
}

pub fn cameras_from_json<T: Scalar>(text: &str) -> Result<Vec<Camera<T>>> {
    let js: Vec<CameraJson> = serde_json::from_str(text)?;
    js.iter().map(Camera::from_json).collect()
}

pub fn read_cameras<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Camera<T>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    cameras_from_json(&text)
}

pub fn write_cameras<T: Scalar>(path: impl AsRef<Path>, cams: &[Camera<T>]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cameras_to_json(cams)).map_err(|e| Error::io(path, e))
}
