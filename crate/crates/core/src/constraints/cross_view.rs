//! Multi-view agreement between rays of different cameras that meet at the
//! same surface point.

use serde::{Deserialize, Serialize};

use crate::diffmath::{Real, Tape, Var};
use crate::render::geometry::Vec3;
use crate::render::{Camera, Ray};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossViewConfig {
    /// Weight of the rendered-color difference.
    pub color_weight: f64,
    /// Weight of the density difference at the two lifted surface points.
    pub density_weight: f64,
    /// Relative depth tolerance of the occlusion test.
    pub occlusion_tol: f64,
    /// Source rays lifted per step.
    pub rays_per_step: usize,
}

impl Default for CrossViewConfig {
    fn default() -> Self {
        Self {
            color_weight: 1.0,
            density_weight: 1.0,
            occlusion_tol: 0.05,
            rays_per_step: 32,
        }
    }
}

impl CrossViewConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.color_weight) || !ok(self.density_weight) || !ok(self.occlusion_tol) {
            return Err(Error::Config(
                "cross-view weights and tolerance must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A view-A ray and the view-B ray that sees the same lifted point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    /// Index into the view-A ray list.
    pub source: usize,
    pub point: Vec3,
    /// Continuous pixel coordinate in view B.
    pub pixel: [f64; 2],
    pub ray: Ray,
    /// Distance from the view-B center to `point`.
    pub distance: f64,
    /// Expected depth rendered along `ray`.
    pub depth_b: f64,
}

/// Source ray `i` with its expected depth and accumulated opacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedRay {
    pub ray: Ray,
    pub depth: f64,
    pub acc: f64,
}

/// Lifts each non-empty view-A ray to its expected surface point and keeps
/// those that land inside view B and are not occluded there.
///
/// `depth_b` renders view-B expected depth for a batch of rays; it is
/// called once with every in-bounds candidate. A candidate survives when
/// `|depth_b − distance| ≤ tol · distance`.
pub fn find_correspondences(
    lifted: &[LiftedRay],
    camera_b: &Camera,
    occlusion_tol: f64,
    empty_acc: f64,
    depth_b: impl FnOnce(&[Ray]) -> Result<Vec<f64>>,
) -> Result<Vec<Correspondence>> {
    let mut candidates = Vec::new();
    for (i, l) in lifted.iter().enumerate() {
        if l.acc < empty_acc || !l.depth.is_finite() {
            continue;
        }
        let point = l.ray.at(l.depth);
        let Some((pixel, distance)) = camera_b.project(point) else {
            continue;
        };
        if !camera_b.contains(pixel) {
            continue;
        }
        candidates.push(Correspondence {
            source: i,
            point,
            pixel,
            ray: camera_b.ray_at(pixel[0], pixel[1]),
            distance,
            depth_b: f64::NAN,
        });
    }
    if candidates.is_empty() {
        return Ok(candidates);
    }
    let rays: Vec<Ray> = candidates.iter().map(|c| c.ray).collect();
    let depths = depth_b(&rays)?;
    if depths.len() != rays.len() {
        return Err(Error::Invalid(format!(
            "depth callback returned {} values for {} rays",
            depths.len(),
            rays.len()
        )));
    }
    Ok(candidates
        .into_iter()
        .zip(depths)
        .filter(|(c, d)| (d - c.distance).abs() <= occlusion_tol * c.distance)
        .map(|(c, d)| Correspondence { depth_b: d, ..c })
        .collect())
}

/// `mean_k( w_c·‖c₁ − c₂‖² + w_d·(σ₁ − σ₂)² )`. Colors are `K×3`; densities,
/// if given, `K×1`. Returns `None` when `K = 0`.
pub fn cross_view_loss<F: Real>(
    tape: &mut Tape<F>,
    color_a: Var,
    color_b: Var,
    density: Option<(Var, Var)>,
    config: &CrossViewConfig,
) -> Result<Option<Var>> {
    let (k, _) = tape.shape(color_a);
    if k == 0 {
        return Ok(None);
    }
    let dc = tape.sub(color_a, color_b)?;
    let dc2 = tape.square(dc);
    let mut per = tape.row_sum(dc2);
    per = tape.scale(per, F::c(config.color_weight));
    if let Some((sa, sb)) = density {
        if config.density_weight != 0.0 {
            let ds = tape.sub(sa, sb)?;
            let ds2 = tape.square(ds);
            let ds2 = tape.scale(ds2, F::c(config.density_weight));
            per = tape.add(per, ds2)?;
        }
    }
    Ok(Some(tape.mean(per)))
}
