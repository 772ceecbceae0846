//! Tape gradients against central finite differences in f64, per primitive
//! and through the whole field network.

mod common;

use common::{rel_err, settled_central};
use pgnerf::diffmath::{Shape, Tape, Var};
use pgnerf::field::{BoundField, EncodingConfig, FieldConfig, RadianceField};
use pgnerf::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 100;
const H: f64 = 1e-4;

#[derive(Clone, Copy)]
enum Domain {
    /// Uniform on `[lo, hi]`.
    Range(f64, f64),
    /// Magnitude in `[0.1, 1]` with a random sign, clear of a kink at zero.
    AwayFromZero,
}

fn draw(rng: &mut ChaCha8Rng, shape: Shape, domain: Domain) -> Vec<f64> {
    (0..shape.0 * shape.1)
        .map(|_| match domain {
            Domain::Range(lo, hi) => rng.gen_range(lo..=hi),
            Domain::AwayFromZero => {
                let m = rng.gen_range(0.1..=1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
        })
        .collect()
}

/// Weighted sum of `out` with fixed weights of magnitude in `[0.5, 1.5]`, so
/// every output element contributes with a distinct nonzero weight.
fn weighted_loss(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let shape = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let w = draw(&mut rng, shape, Domain::Range(0.5, 1.5))
        .into_iter()
        .map(|v| if rng.gen_bool(0.5) { v } else { -v })
        .collect();
    let w = tape.constant(shape, w);
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

/// Largest relative error between the tape gradient and central differences
/// over every input element of `op`.
fn check_op(
    seed: u64,
    inputs: &[(Shape, Domain)],
    op: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Vec<f64>> = inputs.iter().map(|&(s, d)| draw(&mut rng, s, d)).collect();
    let eval = |values: &[Vec<f64>], grads: bool| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .zip(values)
            .map(|(&(s, _), v)| tape.leaf(s, v.clone(), true))
            .collect();
        let out = op(&mut tape, &vars).unwrap();
        let loss = weighted_loss(&mut tape, out, seed);
        let value = tape.item(loss);
        let g = if grads {
            tape.backward(loss).unwrap();
            vars.iter()
                .map(|&v| {
                    tape.grad(v)
                        .map_or_else(|| vec![0.0; tape.value(v).len()], <[f64]>::to_vec)
                })
                .collect()
        } else {
            Vec::new()
        };
        (value, g)
    };
    let (_, analytic) = eval(&values, true);
    let mut worst: f64 = 0.0;
    for (i, v) in values.iter().enumerate() {
        for k in 0..v.len() {
            let probe = |w: f64| {
                let mut moved = values.clone();
                moved[i][k] = v[k] + w;
                let up = eval(&moved, false).0;
                moved[i][k] = v[k] - w;
                let down = eval(&moved, false).0;
                (up, down)
            };
            let (numeric, _) = settled_central(probe, H);
            worst = worst.max(rel_err(analytic[i][k], numeric));
        }
    }
    worst
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;
type Case = (&'static str, Vec<(Shape, Domain)>, OpFn);

/// Every differentiable primitive with operand shapes drawn from `rng`.
fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let m = rng.gen_range(1..=4);
    let n = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=4);
    let wide = Domain::Range(-2.0, 2.0);
    let unary = |d| vec![((m, n), d)];
    let pair = vec![((m, n), wide), ((m, n), wide)];
    let gather: Vec<usize> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..m)).collect();
    let group = rng.gen_range(1..=3);
    let (lo, hi) = {
        let a = rng.gen_range(0..n);
        (a, rng.gen_range(a + 1..=n))
    };
    let floor = rng.gen_range(-0.5..0.5);
    vec![
        ("add", pair.clone(), Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", pair.clone(), Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul", pair.clone(), Box::new(|t, v| t.mul(v[0], v[1]))),
        (
            "div",
            vec![((m, n), wide), ((m, n), Domain::Range(0.5, 2.0))],
            Box::new(|t, v| t.div(v[0], v[1])),
        ),
        (
            "add scalar",
            vec![((m, n), wide), ((1, 1), wide)],
            Box::new(|t, v| t.add(v[0], v[1])),
        ),
        (
            "mul scalar",
            vec![((1, 1), wide), ((m, n), wide)],
            Box::new(|t, v| t.mul(v[0], v[1])),
        ),
        ("scale", unary(wide), Box::new(|t, v| Ok(t.scale(v[0], -1.7)))),
        ("offset", unary(wide), Box::new(|t, v| Ok(t.offset(v[0], 0.3)))),
        ("neg", unary(wide), Box::new(|t, v| Ok(t.neg(v[0])))),
        (
            "matmul",
            vec![((m, k), wide), ((k, n), wide)],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        ),
        (
            "add_row",
            vec![((m, n), wide), ((1, n), wide)],
            Box::new(|t, v| t.add_row(v[0], v[1])),
        ),
        (
            "mul_col",
            vec![((m, n), wide), ((m, 1), wide)],
            Box::new(|t, v| t.mul_col(v[0], v[1])),
        ),
        (
            "linear",
            vec![((m, k), wide), ((k, n), wide), ((1, n), wide)],
            Box::new(|t, v| t.linear(v[0], v[1], v[2])),
        ),
        (
            "concat_cols",
            vec![((m, n), wide), ((m, k), wide)],
            Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]])),
        ),
        ("slice_cols", unary(wide), Box::new(move |t, v| t.slice_cols(v[0], lo, hi))),
        ("reshape", unary(wide), Box::new(move |t, v| t.reshape(v[0], (n, m)))),
        ("gather_rows", unary(wide), Box::new(move |t, v| t.gather_rows(v[0], &gather))),
        (
            "group_sum_rows",
            vec![((m * group, n), wide)],
            Box::new(move |t, v| t.group_sum_rows(v[0], group)),
        ),
        ("row_sum", unary(wide), Box::new(|t, v| Ok(t.row_sum(v[0])))),
        ("exclusive_cumsum", unary(wide), Box::new(|t, v| Ok(t.exclusive_cumsum(v[0])))),
        ("sin", unary(Domain::Range(-1.2, 1.2)), Box::new(|t, v| Ok(t.sin(v[0])))),
        ("cos", unary(Domain::Range(0.3, 2.8)), Box::new(|t, v| Ok(t.cos(v[0])))),
        ("exp", unary(wide), Box::new(|t, v| Ok(t.exp(v[0])))),
        ("sigmoid", unary(Domain::Range(-6.0, 6.0)), Box::new(|t, v| Ok(t.sigmoid(v[0])))),
        ("relu", unary(Domain::AwayFromZero), Box::new(|t, v| Ok(t.relu(v[0])))),
        ("max0", unary(Domain::AwayFromZero), Box::new(|t, v| Ok(t.max0(v[0])))),
        ("softplus", unary(Domain::Range(-8.0, 8.0)), Box::new(|t, v| Ok(t.softplus(v[0])))),
        ("sqrt", unary(Domain::Range(0.2, 3.0)), Box::new(|t, v| Ok(t.sqrt(v[0])))),
        ("square", unary(wide), Box::new(|t, v| Ok(t.square(v[0])))),
        (
            "clamp_min",
            unary(Domain::AwayFromZero),
            Box::new(move |t, v| {
                // Keep inputs clear of the floor.
                let shifted = t.offset(v[0], floor);
                Ok(t.clamp_min(shifted, floor))
            }),
        ),
        ("sum", unary(wide), Box::new(|t, v| Ok(t.sum(v[0])))),
        ("mean", unary(wide), Box::new(|t, v| Ok(t.mean(v[0])))),
    ]
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, (name, inputs, op)) in primitive_cases(&mut rng).into_iter().enumerate() {
            let err = check_op(seed * 1000 + i as u64, &inputs, op);
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err:e}");
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some((_, w)) => *w = w.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    assert_eq!(worst.len(), 32);
}

/// Seven layers per branch with the skip at layer 4, shrunk in width.
fn seven_layer_field(seed: u64) -> FieldConfig {
    FieldConfig {
        hidden_width: 6,
        depth: 7,
        skip_layer: 4,
        color_head_width: 5,
        position_encoding: EncodingConfig {
            num_frequencies: 2,
            ..Default::default()
        },
        direction_frequencies: 1,
        init_seed: seed,
    }
}

fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
    v.map(|c| c / n)
}

/// Weighted sum of color and density at a few points, recorded on `tape`.
fn field_loss(
    field: &RadianceField<f64>,
    tape: &mut Tape<f64>,
    bound: &BoundField,
    positions: &[[f64; 3]],
    dirs: &[[f64; 3]],
    seed: u64,
) -> Var {
    let out = field.forward(tape, bound, positions, dirs).unwrap();
    let rgb = weighted_loss(tape, out.rgb, seed);
    let sigma = weighted_loss(tape, out.sigma, seed + 1);
    tape.add(rgb, sigma).unwrap()
}

/// Largest relative error over every parameter of a jittered seven-layer
/// field.
fn field_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = RadianceField::<f64>::new(seven_layer_field(seed)).unwrap();
    // Zero-initialised biases put dead units exactly on a ReLU kink.
    let jittered: Vec<f64> = field
        .flat_values()
        .iter()
        .map(|v| v + rng.gen_range(-0.05..0.05))
        .collect();
    field.set_flat_values(&jittered);
    let positions: Vec<[f64; 3]> = (0..4)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.5..1.5)))
        .collect();
    let dirs: Vec<[f64; 3]> = (0..4).map(|_| unit(&mut rng)).collect();

    let mut tape = Tape::new();
    let bound = field.bind(&mut tape).unwrap();
    let loss = field_loss(&field, &mut tape, &bound, &positions, &dirs, seed);
    tape.backward(loss).unwrap();
    field.collect_grads(&tape, &bound);
    let analytic = field.flat_grads();
    let base = field.flat_values();

    let frozen_loss = |field: &RadianceField<f64>| {
        let mut tape = Tape::new();
        let bound = field.bind_frozen(&mut tape).unwrap();
        let loss = field_loss(field, &mut tape, &bound, &positions, &dirs, seed);
        tape.item(loss)
    };
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let probe = |w: f64| {
            let mut moved = base.clone();
            moved[k] = base[k] + w;
            field.set_flat_values(&moved);
            let up = frozen_loss(&field);
            moved[k] = base[k] - w;
            field.set_flat_values(&moved);
            let down = frozen_loss(&field);
            (up, down)
        };
        let (numeric, _) = settled_central(probe, H);
        worst = worst.max(rel_err(analytic[k], numeric));
    }
    worst
}

#[test]
fn seven_layer_field_matches_central_differences() {
    let cfg = seven_layer_field(0);
    assert_eq!(cfg.layer_shapes().len(), 2 * (2 * 7) + 2 * 5);
    for seed in 0..SEEDS {
        let err = field_check(seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn off_path_parameters_get_zero_gradients() {
    let mut field = RadianceField::<f64>::new(seven_layer_field(3)).unwrap();
    let mut tape = Tape::new();
    let bound = field.bind(&mut tape).unwrap();
    // Density alone never reaches the color head.
    let (_, sigma) = field.density(&mut tape, &bound, &[[0.1, -0.2, 0.3]]).unwrap();
    let loss = tape.sum(sigma);
    tape.backward(loss).unwrap();
    field.collect_grads(&tape, &bound);
    for (name, p) in field.named() {
        let g = p.grad().unwrap();
        assert_eq!(g.len(), p.len());
        if name.starts_with("color") || name.starts_with("feature") {
            assert!(g.iter().all(|&v| v == 0.0), "{name} has a gradient");
        }
    }
}
