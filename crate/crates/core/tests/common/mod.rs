#![allow(dead_code)]

use pgnerf::constraints::{ConstraintSettings, ConstraintWeights, CrossViewConfig, Diagnostics};
use pgnerf::data::{generate_toy_scene, SceneDataset, ToySceneSpec};
use pgnerf::field::{EncodingConfig, FieldConfig, RadianceField};
use pgnerf::train::{build_plan, plan_loss, plan_loss_and_grads, TrainConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_field(seed: u64) -> FieldConfig {
    FieldConfig {
        hidden_width: 8,
        depth: 3,
        skip_layer: 1,
        color_head_width: 6,
        position_encoding: EncodingConfig {
            num_frequencies: 3,
            ..Default::default()
        },
        direction_frequencies: 1,
        init_seed: seed,
    }
}

pub fn small_scene(size: usize) -> SceneDataset {
    let mut spec = ToySceneSpec {
        width: size,
        height: size,
        ..Default::default()
    };
    spec.test_ring.count = 2;
    generate_toy_scene(&spec).unwrap().dataset
}

/// 64 rays as four 4×4 patches, every auxiliary term switched on, at a step
/// past the last schedule breakpoint.
pub fn gradcheck_config(seed: u64) -> TrainConfig {
    TrainConfig {
        rays_per_batch: 64,
        n_samples: 8,
        seed,
        weights: ConstraintWeights {
            lambda_depth: 0.5,
            lambda_cv: 0.5,
            lambda_sparse: 0.5,
            lambda_reg: 0.5,
        },
        constraints: ConstraintSettings {
            ranking_pairs: 48,
            ranking_margin: 0.05,
            sparsity_points: 32,
            cross_view: CrossViewConfig {
                rays_per_step: 16,
                // Untrained densities rarely pass a tight occlusion test.
                occlusion_tol: 10.0,
                ..Default::default()
            },
            ..Default::default()
        },
        ..TrainConfig::desk(1)
    }
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates that needed a stencil narrower than `h`.
    pub refined: usize,
    pub terms: [f64; 5],
}

/// Analytic gradient of the full objective against central differences on
/// `n_coords` randomly chosen parameters, in f64.
pub fn gradient_check(seed: u64, n_coords: usize, h: f64) -> GradCheck {
    gradient_check_with(&gradcheck_config(seed), n_coords, h)
}

pub fn gradient_check_with(cfg: &TrainConfig, n_coords: usize, h: f64) -> GradCheck {
    let seed = cfg.seed;
    let cfg = cfg.clone();
    let data = small_scene(16);
    let step = 20_000;
    let mut field = RadianceField::<f64>::new(tiny_field(seed)).unwrap();
    // Zero-initialised biases put dead-input units exactly on a ReLU kink.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let jittered: Vec<f64> = field
        .flat_values()
        .iter()
        .map(|v| v + rng.gen_range(-0.05..0.05))
        .collect();
    field.set_flat_values(&jittered);
    let plan = build_plan(&field, &data, &cfg, step).unwrap();
    let loss = plan_loss_and_grads(&mut field, &plan, &cfg, &mut Diagnostics::default()).unwrap();
    let terms = [loss.rgb, loss.depth, loss.cross_view, loss.sparsity, loss.smoothness];
    let analytic = field.flat_grads();
    let base = field.flat_values();
    let mut max_rel_err: f64 = 0.0;
    let mut refined = 0;
    let coords = sample(&mut rng, base.len(), n_coords.min(base.len()));
    let mut probe_at = |k: usize, h: f64| {
        let mut probe = base.clone();
        probe[k] = base[k] + h;
        field.set_flat_values(&probe);
        let up = plan_loss(&field, &plan, &cfg).unwrap().total;
        probe[k] = base[k] - h;
        field.set_flat_values(&probe);
        let down = plan_loss(&field, &plan, &cfg).unwrap().total;
        (up, down)
    };
    for k in coords.iter() {
        let (numeric, narrowed) = settled_central(|w| probe_at(k, w), h);
        refined += usize::from(narrowed);
        max_rel_err = max_rel_err.max(rel_err(analytic[k], numeric));
    }
    field.set_flat_values(&base);
    GradCheck {
        max_rel_err,
        checked: n_coords.min(base.len()),
        refined,
        terms,
    }
}

/// Central difference that tolerates a ReLU kink inside the stencil.
///
/// A kink biases the difference by roughly half its slope change, whatever
/// the width, until the width drops below the kink's distance. The stencil
/// starting at `h` is narrowed by 10× (at most four times) until two
/// successive widths agree up to cancellation noise. `probe(w)` returns the
/// objective at `x + w` and `x - w`; the flag reports whether any narrowing
/// happened.
pub fn settled_central(mut probe: impl FnMut(f64) -> (f64, f64), h: f64) -> (f64, bool) {
    let mut central = |w: f64| {
        let (up, down) = probe(w);
        let noise = 8.0 * f64::EPSILON * up.abs().max(down.abs()) / w;
        ((up - down) / (2.0 * w), noise)
    };
    let mut width = h;
    let (mut numeric, _) = central(width);
    let mut narrowed = false;
    for _ in 0..4 {
        let (next, noise) = central(width / 10.0);
        if (next - numeric).abs() <= 1e-6 * next.abs().max(numeric.abs()) + noise {
            break;
        }
        narrowed = true;
        width /= 10.0;
        numeric = next;
    }
    (numeric, narrowed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// A few-millisecond step with every term active and frequent logging.
pub fn tiny_train_config(iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        rays_per_batch: 32,
        n_samples: 8,
        log_every: 1,
        eval_every: 3,
        eval_downscale: 4,
        constraints: ConstraintSettings {
            ranking_pairs: 16,
            sparsity_points: 16,
            cross_view: CrossViewConfig {
                rays_per_step: 8,
                occlusion_tol: 10.0,
                ..Default::default()
            },
            ..Default::default()
        },
        weights: ConstraintWeights {
            lambda_depth: 1.0,
            lambda_cv: 1.0,
            lambda_sparse: 1.0,
            lambda_reg: 1.0,
        },
        ..TrainConfig::desk(iterations)
    }
}
