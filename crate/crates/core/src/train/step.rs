//! One optimisation step, split into a random plan (which rays, samples,
//! pairs and points) and a deterministic loss evaluation of that plan.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::constraints::{
    cross_view_loss, depth_ranking_loss, find_correspondences, rgb_loss, sample_pair_candidates,
    sample_points, smoothness_loss, sparsity_loss, total_loss, Diagnostics, LiftedRay, LossBreakdown,
    LossTerms, PairSet, PatchLayout,
};
use crate::data::SceneDataset;
use crate::diffmath::{Real, Tape, Var};
use crate::field::{BoundField, RadianceField};
use crate::render::geometry::Vec3;
use crate::render::{
    composite, render_with_samples, sample_along_ray, Ray, RaySamples, EMPTY_ACC,
};
use crate::{Error, Result};

/// Everything random about a step. Rays `0..batch` are the patch batch in
/// patch-major order; the remaining rays are cross-view partners.
#[derive(Clone, Debug)]
pub struct StepPlan {
    pub step: u64,
    pub rays: Vec<Ray>,
    pub samples: Vec<RaySamples>,
    pub batch: usize,
    /// `batch × 3` target colors.
    pub targets: Vec<f64>,
    pub layout: PatchLayout,
    pub pairs: PairSet,
    /// For partner ray `batch + k`, the batch ray it corresponds to.
    pub partners: Vec<usize>,
    pub sparsity_points: Vec<Vec3>,
    pub background: [f64; 3],
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Draws the plan of step `step`. Only terms with a nonzero weight are
/// planned. Cross-view partners are found by rendering the chosen batch
/// rays and the candidate partner rays with `field`, without gradients.
pub fn build_plan<F: Real>(
    field: &RadianceField<F>,
    data: &SceneDataset,
    config: &TrainConfig,
    step: u64,
) -> Result<StepPlan> {
    let mut rng = step_rng(config.seed, step);
    let s = config.patch_size;
    let n_views = data.train.len();
    let (w, h) = data
        .image_size()
        .ok_or_else(|| Error::Invalid("dataset has no frames".into()))?;
    if w < s || h < s {
        return Err(Error::Config(format!("patch size {s} exceeds the {w}x{h} images")));
    }

    let patches = config.patches_per_batch();
    let batch = patches * s * s;
    let mut rays = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch * 3);
    let mut origin = Vec::with_capacity(batch);
    for _ in 0..patches {
        let f = rng.gen_range(0..n_views);
        let x0 = rng.gen_range(0..=w - s);
        let y0 = rng.gen_range(0..=h - s);
        let frame = &data.train[f];
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                rays.push(frame.camera.pixel_ray(x, y));
                targets.extend(frame.image.get(x, y).map(|c| c as f64));
                origin.push((f, x, y));
            }
        }
    }
    let mut samples = rays
        .iter()
        .map(|r| sample_along_ray(r, config.n_samples, config.stratified, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let settings = &config.constraints;
    let pairs = if config.weights.lambda_depth > 0.0 {
        let mut groups = vec![Vec::new(); n_views];
        for (k, &(f, _, _)) in origin.iter().enumerate() {
            if data.train[f].depth_prior.is_some() {
                groups[f].push(k);
            }
        }
        let candidates = sample_pair_candidates(&groups, settings.ranking_pairs, &mut rng);
        PairSet::from_priors(
            &candidates,
            |k| {
                let (f, x, y) = origin[k];
                data.train[f].depth_prior.as_ref().map(|d| d.get(x, y) as f64)
            },
            settings.ranking_margin,
            settings.prior_tie_eps,
        )
    } else {
        PairSet::default()
    };

    let mut partners = Vec::new();
    let cv = &settings.cross_view;
    if config.weights.lambda_cv > 0.0 && n_views >= 2 && cv.rays_per_step > 0 {
        let k = cv.rays_per_step.min(batch);
        let mut chosen = sample_indices(&mut rng, batch, k).into_vec();
        chosen.sort_unstable();
        let targets_view: Vec<usize> = chosen
            .iter()
            .map(|&i| {
                let own = origin[i].0;
                let other = rng.gen_range(0..n_views - 1);
                if other >= own {
                    other + 1
                } else {
                    other
                }
            })
            .collect();
        let src_rays: Vec<Ray> = chosen.iter().map(|&i| rays[i]).collect();
        let src_samples: Vec<RaySamples> = chosen.iter().map(|&i| samples[i].clone()).collect();
        let rendered = render_with_samples(field, &src_rays, &src_samples, data.background, 256)?;
        for view in 0..n_views {
            let members: Vec<usize> = (0..k).filter(|&j| targets_view[j] == view).collect();
            if members.is_empty() {
                continue;
            }
            let lifted: Vec<LiftedRay> = members
                .iter()
                .map(|&j| LiftedRay {
                    ray: src_rays[j],
                    depth: rendered[j].depth.f64(),
                    acc: rendered[j].acc.f64(),
                })
                .collect();
            let cam = &data.train[view].camera;
            let found = find_correspondences(&lifted, cam, cv.occlusion_tol, EMPTY_ACC, |cand| {
                let smp = cand
                    .iter()
                    .map(|r| sample_along_ray(r, config.n_samples, false, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let out = render_with_samples(field, cand, &smp, data.background, 256)?;
                Ok(out.iter().map(|o| o.depth.f64()).collect())
            })?;
            for c in found {
                partners.push(chosen[members[c.source]]);
                rays.push(c.ray);
            }
        }
        for r in &rays[batch..] {
            samples.push(sample_along_ray(r, config.n_samples, config.stratified, &mut rng)?);
        }
    }

    let sparsity_points = if config.weights.lambda_sparse > 0.0 {
        sample_points(&data.bounds, settings.sparsity_points, &mut rng)?
    } else {
        Vec::new()
    };

    Ok(StepPlan {
        step,
        rays,
        samples,
        batch,
        targets,
        layout: PatchLayout::contiguous(s, patches),
        pairs,
        partners,
        sparsity_points,
        background: data.background,
    })
}

/// Records the full objective of `plan` on `tape`.
pub fn record_loss<F: Real>(
    tape: &mut Tape<F>,
    field: &RadianceField<F>,
    bound: &BoundField,
    plan: &StepPlan,
    config: &TrainConfig,
    diagnostics: &mut Diagnostics,
) -> Result<(Var, LossBreakdown)> {
    let mut positions = Vec::new();
    let mut dirs = Vec::new();
    for (ray, s) in plan.rays.iter().zip(&plan.samples) {
        positions.extend(s.positions(ray));
        dirs.extend(std::iter::repeat_n(ray.direction, s.len()));
    }
    let out = field.forward(tape, bound, &positions, &dirs)?;
    let rv = composite(tape, out.sigma, out.rgb, &plan.samples, plan.background)?;

    let b = plan.batch;
    let color = if plan.rays.len() == b {
        rv.color
    } else {
        let idx: Vec<usize> = (0..b).collect();
        tape.gather_rows(rv.color, &idx)?
    };
    let target = tape.constant((b, 3), plan.targets.iter().map(|&v| F::c(v)).collect());
    let rgb = rgb_loss(tape, color, target)?;

    let weights = &config.weights;
    let depth = if weights.lambda_depth > 0.0 {
        let acc = tape.value(rv.acc);
        let kept: Vec<_> = plan
            .pairs
            .pairs()
            .iter()
            .filter(|p| acc[p.i].f64() >= EMPTY_ACC && acc[p.j].f64() >= EMPTY_ACC)
            .copied()
            .collect();
        let pairs = PairSet::from_pairs(kept, plan.pairs.margin);
        depth_ranking_loss(tape, rv.depth, &pairs)?
    } else {
        None
    };

    let cross_view = if weights.lambda_cv > 0.0 && !plan.partners.is_empty() {
        let cv = &config.constraints.cross_view;
        let k = plan.partners.len();
        let partner_rows: Vec<usize> = (b..b + k).collect();
        let ca = tape.gather_rows(rv.color, &plan.partners)?;
        let cb = tape.gather_rows(rv.color, &partner_rows)?;
        // Density agreement compares the rendered opacity of the two rays.
        let density = if cv.density_weight > 0.0 {
            Some((
                tape.gather_rows(rv.acc, &plan.partners)?,
                tape.gather_rows(rv.acc, &partner_rows)?,
            ))
        } else {
            None
        };
        cross_view_loss(tape, ca, cb, density, cv)?
    } else {
        None
    };

    let sparsity = if weights.lambda_sparse > 0.0 && !plan.sparsity_points.is_empty() {
        Some(sparsity_loss(tape, field, bound, &plan.sparsity_points)?)
    } else {
        None
    };

    let smoothness = if weights.lambda_reg > 0.0 {
        let n = plan.layout.starts.len() * plan.layout.size * plan.layout.size;
        if n > b {
            None
        } else {
            smoothness_loss(tape, rv.color, rv.depth, &plan.layout)?
        }
    } else {
        None
    };

    let terms = LossTerms {
        rgb,
        depth,
        cross_view,
        sparsity,
        smoothness,
    };
    total_loss(
        tape,
        plan.step,
        &terms,
        weights,
        &config.schedule,
        diagnostics,
    )
}

/// Loss of `plan` without gradients.
pub fn plan_loss<F: Real>(
    field: &RadianceField<F>,
    plan: &StepPlan,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let bound = field.bind_frozen(&mut tape)?;
    let (_, breakdown) = record_loss(&mut tape, field, &bound, plan, config, &mut Diagnostics::default())?;
    Ok(breakdown)
}

/// Loss of `plan` with gradients written into `field`'s parameters.
pub fn plan_loss_and_grads<F: Real>(
    field: &mut RadianceField<F>,
    plan: &StepPlan,
    config: &TrainConfig,
    diagnostics: &mut Diagnostics,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let bound = field.bind(&mut tape)?;
    let (loss, breakdown) = record_loss(&mut tape, field, &bound, plan, config, diagnostics)?;
    if !breakdown.is_finite() {
        return Err(Error::Diverged {
            step: plan.step,
            breakdown: breakdown.to_string(),
        });
    }
    tape.backward(loss)?;
    field.collect_grads(&tape, &bound);
    Ok(breakdown)
}
