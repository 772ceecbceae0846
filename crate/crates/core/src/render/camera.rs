use serde::{Deserialize, Serialize};

use super::geometry::{add, cross, dot, norm, normalize, sub, Vec3};
use crate::{Error, Result};

/// Pinhole camera. `transform` is camera-to-world, row-major; the camera
/// looks down its local −z axis with +y up (OpenGL / NeRF-synthetic).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub transform: [[f64; 4]; 4],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        super::geometry::at(self.origin, self.direction, t)
    }
}

impl Camera {
    pub fn new(
        transform: [[f64; 4]; 4],
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Self {
            transform,
            focal,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let back = normalize(sub(eye, target));
        let right = cross(up, back);
        if norm(right) < 1e-9 {
            return Err(Error::Camera("up vector parallel to view axis".into()));
        }
        let right = normalize(right);
        let true_up = cross(back, right);
        let mut t = [[0.0; 4]; 4];
        for r in 0..3 {
            t[r][0] = right[r];
            t[r][1] = true_up[r];
            t[r][2] = back[r];
            t[r][3] = eye[r];
        }
        t[3][3] = 1.0;
        Self::new(t, focal, width, height, near, far)
    }

    /// Focal length in pixels from a horizontal field of view in radians.
    pub fn focal_from_fov(width: usize, fov_x: f64) -> f64 {
        0.5 * width as f64 / (0.5 * fov_x).tan()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::Camera(format!("focal must be positive, got {}", self.focal)));
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(Error::Camera(format!(
                "need 0 <= near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera("image has zero size".into()));
        }
        if self.transform.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Camera("transform has non-finite entries".into()));
        }
        let r = self.rotation();
        let det = dot(r[0], cross(r[1], r[2]));
        if det.abs() < 1e-8 {
            return Err(Error::Camera("singular camera-to-world transform".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let col_i = [r[0][i], r[1][i], r[2][i]];
                let col_j = [r[0][j], r[1][j], r[2][j]];
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(col_i, col_j) - want).abs() > 1e-4 {
                    return Err(Error::Camera(format!(
                        "rotation block is not orthonormal (columns {i},{j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rotation block as rows.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let t = &self.transform;
        [
            [t[0][0], t[0][1], t[0][2]],
            [t[1][0], t[1][1], t[1][2]],
            [t[2][0], t[2][1], t[2][2]],
        ]
    }

    pub fn origin(&self) -> Vec3 {
        [self.transform[0][3], self.transform[1][3], self.transform[2][3]]
    }

    fn cam_to_world_dir(&self, d: Vec3) -> Vec3 {
        let r = self.rotation();
        [dot(r[0], d), dot(r[1], d), dot(r[2], d)]
    }

    fn world_to_cam_dir(&self, d: Vec3) -> Vec3 {
        let r = self.rotation();
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
        }
        out
    }

    /// Ray through continuous pixel coordinate `(x, y)`; pixel `(i, j)` has
    /// its center at `(i + 0.5, j + 0.5)`.
    pub fn ray_at(&self, x: f64, y: f64) -> Ray {
        let d = [
            (x - 0.5 * self.width as f64) / self.focal,
            -(y - 0.5 * self.height as f64) / self.focal,
            -1.0,
        ];
        Ray {
            origin: self.origin(),
            direction: normalize(self.cam_to_world_dir(d)),
            t_near: self.near,
            t_far: self.far,
        }
    }

    pub fn pixel_ray(&self, px: usize, py: usize) -> Ray {
        self.ray_at(px as f64 + 0.5, py as f64 + 0.5)
    }

    /// Continuous pixel coordinate of a world point and its distance from
    /// the camera center; `None` when the point is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<([f64; 2], f64)> {
        let rel = sub(p, self.origin());
        let c = self.world_to_cam_dir(rel);
        if c[2] >= -1e-12 {
            return None;
        }
        let z = -c[2];
        let x = self.focal * c[0] / z + 0.5 * self.width as f64;
        let y = -self.focal * c[1] / z + 0.5 * self.height as f64;
        Some(([x, y], norm(rel)))
    }

    pub fn contains(&self, xy: [f64; 2]) -> bool {
        xy[0] >= 0.0
            && xy[1] >= 0.0
            && xy[0] < self.width as f64
            && xy[1] < self.height as f64
    }

    /// Same pose, image resolution divided by `factor`.
    pub fn downscaled(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            focal: self.focal / f as f64,
            width: (self.width / f).max(1),
            height: (self.height / f).max(1),
            ..self.clone()
        }
    }

    /// Moves the camera center by `delta` in world space.
    pub fn translated(&self, delta: Vec3) -> Self {
        let o = add(self.origin(), delta);
        let mut t = self.transform;
        for r in 0..3 {
            t[r][3] = o[r];
        }
        Self {
            transform: t,
            ..self.clone()
        }
    }

    pub fn identity(focal: f64, width: usize, height: usize, near: f64, far: f64) -> Self {
        let mut t = [[0.0; 4]; 4];
        for (i, row) in t.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            transform: t,
            focal,
            width,
            height,
            near,
            far,
        }
    }
}

/// Rays through the given continuous pixel coordinates.
pub fn generate_rays(camera: &Camera, pixels: &[[f64; 2]]) -> Result<Vec<Ray>> {
    camera.validate()?;
    pixels
        .iter()
        .map(|&xy| {
            let inside = (0.0..=camera.width as f64).contains(&xy[0])
                && (0.0..=camera.height as f64).contains(&xy[1]);
            if !inside {
                return Err(Error::Camera(format!(
                    "pixel {xy:?} outside {}x{} image",
                    camera.width, camera.height
                )));
            }
            Ok(camera.ray_at(xy[0], xy[1]))
        })
        .collect()
}
