//! Analytic sphere/box scene rendered with a pinhole ray tracer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, SceneDataset};
use crate::constraints::Aabb;
use crate::render::geometry::{dot, normalize, sub, Vec3};
use crate::render::{Camera, DepthMap, Ray, RgbImage};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
        albedo: [f64; 3],
    },
    Box {
        min: Vec3,
        max: Vec3,
        albedo: [f64; 3],
    },
}

/// Directional light; `direction` points from the surface toward the
/// light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Light {
    pub direction: Vec3,
    pub ambient: f64,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            direction: [0.4, -0.3, 0.85],
            ambient: 0.25,
        }
    }
}

/// Cameras on a circle around the origin, looking at it with +z up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub azimuth_offset_deg: f64,
    /// Uniform azimuth perturbation, ± degrees.
    pub jitter_deg: f64,
}

impl Default for CameraRing {
    fn default() -> Self {
        Self {
            count: 8,
            radius: 4.0,
            elevation_deg: 30.0,
            azimuth_offset_deg: 0.0,
            jitter_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySceneSpec {
    pub primitives: Vec<Primitive>,
    pub light: Light,
    pub train_ring: CameraRing,
    pub test_ring: CameraRing,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub near: f64,
    pub far: f64,
    pub bounds: Aabb,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        Self {
            primitives: vec![
                Primitive::Sphere {
                    center: [-0.35, 0.2, 0.1],
                    radius: 0.6,
                    albedo: [0.9, 0.35, 0.25],
                },
                Primitive::Box {
                    min: [0.05, -0.8, -0.6],
                    max: [0.85, 0.0, 0.3],
                    albedo: [0.2, 0.5, 0.9],
                },
            ],
            light: Light::default(),
            train_ring: CameraRing {
                jitter_deg: 5.0,
                ..CameraRing::default()
            },
            test_ring: CameraRing {
                azimuth_offset_deg: 22.5,
                elevation_deg: 15.0,
                ..CameraRing::default()
            },
            width: 64,
            height: 64,
            fov_deg: 40.0,
            near: 2.0,
            far: 6.0,
            bounds: Aabb::cube(1.5),
            background: [1.0; 3],
            seed: 0,
        }
    }
}

impl ToySceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("toy image size must be positive".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) || !(0.0 <= self.near && self.near < self.far) {
            return Err(Error::Config("invalid toy camera intrinsics".into()));
        }
        if self.train_ring.count < 2 {
            return Err(Error::Config("toy scene needs at least two training views".into()));
        }
        for p in &self.primitives {
            let (lo, hi) = match p {
                Primitive::Sphere { center, radius, .. } => (
                    center.map(|c| c - radius),
                    center.map(|c| c + radius),
                ),
                Primitive::Box { min, max, .. } => (*min, *max),
            };
            if !(self.bounds.contains(lo) && self.bounds.contains(hi)) {
                return Err(Error::Config(format!("primitive {p:?} leaves the scene bounds")));
            }
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        Camera::focal_from_fov(self.width, self.fov_deg.to_radians())
    }

    fn ring_cameras(&self, ring: &CameraRing, rng: &mut ChaCha8Rng) -> Result<Vec<Camera>> {
        let elev = ring.elevation_deg.to_radians();
        (0..ring.count)
            .map(|i| {
                let jitter = if ring.jitter_deg > 0.0 {
                    rng.gen_range(-ring.jitter_deg..=ring.jitter_deg)
                } else {
                    0.0
                };
                let az = (ring.azimuth_offset_deg + 360.0 * i as f64 / ring.count as f64 + jitter)
                    .to_radians();
                let eye = [
                    ring.radius * elev.cos() * az.cos(),
                    ring.radius * elev.cos() * az.sin(),
                    ring.radius * elev.sin(),
                ];
                Camera::look_at(
                    eye,
                    [0.0; 3],
                    [0.0, 0.0, 1.0],
                    self.focal(),
                    self.width,
                    self.height,
                    self.near,
                    self.far,
                )
            })
            .collect()
    }

    /// Nearest hit in `[ray.t_near, ray.t_far]`: distance, unit normal and
    /// albedo.
    pub fn trace(&self, ray: &Ray) -> Option<(f64, Vec3, [f64; 3])> {
        let mut best: Option<(f64, Vec3, [f64; 3])> = None;
        for p in &self.primitives {
            let hit = match p {
                Primitive::Sphere {
                    center,
                    radius,
                    albedo,
                } => hit_sphere(ray, *center, *radius).map(|t| {
                    (t, normalize(sub(ray.at(t), *center)), *albedo)
                }),
                Primitive::Box { min, max, albedo } => {
                    hit_box(ray, *min, *max).map(|(t, n)| (t, n, *albedo))
                }
            };
            if let Some(h) = hit {
                if best.is_none_or(|b| h.0 < b.0) {
                    best = Some(h);
                }
            }
        }
        best
    }

    /// Lambertian color and depth of one ray; misses return the background
    /// at `t_far`.
    pub fn shade(&self, ray: &Ray) -> ([f64; 3], f64) {
        match self.trace(ray) {
            None => (self.background, ray.t_far),
            Some((t, n, albedo)) => {
                let l = normalize(self.light.direction);
                let diffuse = dot(n, l).max(0.0);
                let k = self.light.ambient + (1.0 - self.light.ambient) * diffuse;
                (albedo.map(|a| (a * k).clamp(0.0, 1.0)), t)
            }
        }
    }
}

fn hit_sphere(ray: &Ray, center: Vec3, radius: f64) -> Option<f64> {
    let oc = sub(ray.origin, center);
    let b = dot(oc, ray.direction);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [-b - s, -b + s]
        .into_iter()
        .find(|&t| t >= ray.t_near && t <= ray.t_far)
}

/// Slab test; the normal is the axis of the entering face.
fn hit_box(ray: &Ray, min: Vec3, max: Vec3) -> Option<(f64, Vec3)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    let mut sign = 1.0;
    for i in 0..3 {
        let inv = 1.0 / ray.direction[i];
        let (mut a, mut b) = ((min[i] - ray.origin[i]) * inv, (max[i] - ray.origin[i]) * inv);
        let mut s = -1.0;
        if a > b {
            std::mem::swap(&mut a, &mut b);
            s = 1.0;
        }
        if a > t0 {
            t0 = a;
            axis = i;
            sign = s;
        }
        t1 = t1.min(b);
    }
    if t0 > t1 || t0 < ray.t_near || t0 > ray.t_far {
        return None;
    }
    let mut n = [0.0; 3];
    n[axis] = sign;
    Some((t0, n))
}

/// Generated dataset plus exact depth for every frame. Training frames
/// carry their exact depth as the depth prior.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyScene {
    pub dataset: SceneDataset,
    pub train_depth: Vec<DepthMap>,
    pub test_depth: Vec<DepthMap>,
}

/// Renders every ring camera. Colors are quantized to 8 bits so the
/// dataset survives a PNG round trip unchanged.
pub fn generate_toy_scene(spec: &ToySceneSpec) -> Result<ToyScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_cams = spec.ring_cameras(&spec.train_ring, &mut rng)?;
    let test_cams = spec.ring_cameras(&spec.test_ring, &mut rng)?;
    let render = |cams: Vec<Camera>, with_prior: bool| {
        let mut frames = Vec::with_capacity(cams.len());
        let mut depths = Vec::with_capacity(cams.len());
        for (i, camera) in cams.into_iter().enumerate() {
            let (image, depth) = render_view(spec, &camera);
            frames.push(Frame {
                name: format!("r_{i}"),
                image,
                camera,
                depth_prior: with_prior.then(|| depth.clone()),
            });
            depths.push(depth);
        }
        (frames, depths)
    };
    let (train, train_depth) = render(train_cams, true);
    let (test, test_depth) = render(test_cams, false);
    Ok(ToyScene {
        dataset: SceneDataset {
            train,
            test,
            bounds: spec.bounds,
            background: spec.background,
        },
        train_depth,
        test_depth,
    })
}

pub(crate) fn render_view(spec: &ToySceneSpec, camera: &Camera) -> (RgbImage, DepthMap) {
    let (w, h) = (camera.width, camera.height);
    let mut pixels = Vec::with_capacity(w * h);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (c, t) = spec.shade(&camera.pixel_ray(x, y));
            pixels.push(c.map(|v| (v * 255.0).round() as f32 / 255.0));
            values.push(t as f32);
        }
    }
    (
        RgbImage {
            width: w,
            height: h,
            pixels,
        },
        DepthMap {
            width: w,
            height: h,
            values,
        },
    )
}
