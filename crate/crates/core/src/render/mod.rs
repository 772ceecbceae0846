//! Cameras, ray sampling and differentiable volume rendering.

mod camera;
pub mod geometry;
mod raster;
mod sampling;
mod volume;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use camera::{generate_rays, Camera, Ray};
pub use raster::{DepthMap, RgbImage};
pub use sampling::{sample_along_ray, sample_interval, RaySamples};
pub use volume::{composite, volume_render, RenderOutput, RenderVars, DEPTH_EPS, EMPTY_ACC};

use crate::diffmath::Real;
use crate::field::RadianceField;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub n_samples: usize,
    pub stratified: bool,
    pub seed: u64,
    pub background: [f64; 3],
    /// Rays per field evaluation chunk.
    pub chunk_rays: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            stratified: false,
            seed: 0,
            background: [1.0; 3],
            chunk_rays: 256,
        }
    }
}

/// Renders rays without recording gradients. With stratified sampling ray
/// `i` draws from stream `i` of the configured seed, so results do not
/// depend on chunking.
pub fn render_rays<F: Real>(
    field: &RadianceField<F>,
    rays: &[Ray],
    config: &RenderConfig,
) -> Result<Vec<RenderOutput<F>>> {
    let chunk = config.chunk_rays.max(1);
    let samples = rays
        .iter()
        .enumerate()
        .map(|(i, ray)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            sample_along_ray(ray, config.n_samples, config.stratified, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    render_with_samples(field, rays, &samples, config.background, chunk)
}

/// Renders rays at given sample positions without recording gradients,
/// `chunk` rays per field evaluation.
pub fn render_with_samples<F: Real>(
    field: &RadianceField<F>,
    rays: &[Ray],
    samples: &[RaySamples],
    background: [f64; 3],
    chunk: usize,
) -> Result<Vec<RenderOutput<F>>> {
    let bg = background.map(F::c);
    let mut out = Vec::with_capacity(rays.len());
    for (rays, samples) in rays.chunks(chunk.max(1)).zip(samples.chunks(chunk.max(1))) {
        let mut positions = Vec::new();
        let mut dirs = Vec::new();
        for (ray, s) in rays.iter().zip(samples) {
            positions.extend(s.positions(ray));
            dirs.extend(std::iter::repeat_n(ray.direction, s.len()));
        }
        let field_out = field.query(&positions, &dirs, positions.len())?;
        let mut offset = 0;
        for s in samples {
            let pts = &field_out[offset..offset + s.len()];
            let sigma: Vec<F> = pts.iter().map(|p| p.sigma).collect();
            let rgb: Vec<[F; 3]> = pts.iter().map(|p| p.rgb).collect();
            out.push(volume_render(s, &sigma, &rgb, bg)?);
            offset += s.len();
        }
    }
    Ok(out)
}

/// Full-frame render: color image and expected-depth raster.
pub fn render_image<F: Real>(
    camera: &Camera,
    field: &RadianceField<F>,
    config: &RenderConfig,
) -> Result<(RgbImage, DepthMap)> {
    camera.validate()?;
    let rays: Vec<Ray> = (0..camera.height)
        .flat_map(|y| (0..camera.width).map(move |x| (x, y)))
        .map(|(x, y)| camera.pixel_ray(x, y))
        .collect();
    let outputs = render_rays(field, &rays, config)?;
    let pixels = outputs
        .iter()
        .map(|o| o.color.map(|c| c.f64() as f32))
        .collect();
    let values = outputs.iter().map(|o| o.depth.f64() as f32).collect();
    Ok((
        RgbImage {
            width: camera.width,
            height: camera.height,
            pixels,
        },
        DepthMap {
            width: camera.width,
            height: camera.height,
            values,
        },
    ))
}
