use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_into, encoded_dim, EncodingConfig};
use crate::diffmath::{softplus, ParamTensor, Real, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub hidden_width: usize,
    /// Linear layers per branch.
    pub depth: usize,
    /// Branch layer that re-consumes the encoding; 0 disables the skip.
    pub skip_layer: usize,
    pub color_head_width: usize,
    pub position_encoding: EncodingConfig,
    /// Frequencies for the view-direction encoding (single scale).
    pub direction_frequencies: usize,
    pub init_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            hidden_width: 192,
            depth: 7,
            skip_layer: 4,
            color_head_width: 96,
            position_encoding: EncodingConfig::default(),
            direction_frequencies: 4,
            init_seed: 0,
        }
    }
}

impl FieldConfig {
    /// A reduced network that trains on the toy scene in minutes on one core.
    pub fn desk() -> Self {
        Self {
            hidden_width: 32,
            depth: 4,
            skip_layer: 2,
            color_head_width: 16,
            position_encoding: EncodingConfig {
                num_frequencies: 6,
                ..EncodingConfig::default()
            },
            direction_frequencies: 2,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.position_encoding.validate()?;
        if self.hidden_width == 0 || self.color_head_width == 0 || self.depth == 0 {
            return Err(Error::Config(
                "field widths and depth must be positive".into(),
            ));
        }
        if self.skip_layer >= self.depth {
            return Err(Error::Config(format!(
                "skip_layer {} must be below depth {}",
                self.skip_layer, self.depth
            )));
        }
        Ok(())
    }

    pub fn direction_dim(&self) -> usize {
        encoded_dim(self.direction_frequencies, true)
    }

    /// Names and shapes of every trainable tensor, in storage order.
    /// Weights are `[fan_in, fan_out]`.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let w = self.hidden_width;
        let enc = self.position_encoding.dim();
        let mut out = Vec::new();
        let mut linear = |name: String, fan_in: usize, fan_out: usize| {
            out.push((format!("{name}.weight"), vec![fan_in, fan_out]));
            out.push((format!("{name}.bias"), vec![fan_out]));
        };
        for b in 0..2 {
            for i in 0..self.depth {
                let fan_in = if i == 0 {
                    enc
                } else if i == self.skip_layer {
                    w + enc
                } else {
                    w
                };
                linear(format!("branch{b}.layer{i}"), fan_in, w);
            }
        }
        linear("fusion".into(), 2 * w, w);
        linear("density".into(), w, 1);
        linear("feature".into(), w, w);
        linear("color0".into(), w + self.direction_dim(), self.color_head_width);
        linear("color1".into(), self.color_head_width, 3);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Density and color at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<F> {
    pub sigma: F,
    pub raw_sigma: F,
    pub rgb: [F; 3],
}

/// Tape handles for one batched forward pass. Each is `M×k` with `M` the
/// number of query points.
#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    pub raw_sigma: Var,
    pub sigma: Var,
    pub rgb: Var,
}

/// Parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundField {
    vars: Vec<Var>,
}

impl BoundField {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

const FUSION: usize = 0;
const DENSITY: usize = 1;
const FEATURE: usize = 2;
const COLOR0: usize = 3;
const COLOR1: usize = 4;

/// Dual-branch radiance field. Branch 0 consumes the scale-1 encoding and
/// branch 1 the scale-2 encoding; the two feature vectors are fused by a
/// linear layer that feeds a view-independent density head and a
/// view-dependent color head.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField<F: Real> {
    config: FieldConfig,
    names: Vec<String>,
    params: Vec<ParamTensor<F>>,
}

impl<F: Real> RadianceField<F> {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in config.layer_shapes() {
            let n: usize = shape.iter().product();
            let values = if shape.len() == 2 {
                let bound = (6.0 / shape[0] as f64).sqrt();
                (0..n)
                    .map(|_| F::c(rng.gen_range(-bound..bound)))
                    .collect()
            } else {
                vec![F::zero(); n]
            };
            names.push(name);
            params.push(ParamTensor::new(shape, values));
        }
        Ok(Self {
            config,
            names,
            params,
        })
    }

    /// Builds a field from named tensors, e.g. a loaded checkpoint. Every
    /// tensor the config expects must be present with the right size.
    pub fn from_named(config: FieldConfig, named: &[(String, Vec<F>)]) -> Result<Self> {
        config.validate()?;
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in config.layer_shapes() {
            let n: usize = shape.iter().product();
            let (_, values) = named
                .iter()
                .find(|(k, _)| *k == name)
                .ok_or_else(|| Error::Invalid(format!("missing tensor {name}")))?;
            if values.len() != n {
                return Err(Error::Invalid(format!(
                    "tensor {name} has {} elements, expected {n}",
                    values.len()
                )));
            }
            names.push(name);
            params.push(ParamTensor::new(shape, values.clone()));
        }
        Ok(Self {
            config,
            names,
            params,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[ParamTensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor<F>] {
        &mut self.params
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &ParamTensor<F>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    /// All parameter values concatenated in storage order.
    pub fn flat_values(&self) -> Vec<F> {
        self.params
            .iter()
            .flat_map(|p| p.values().iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[F]) {
        assert_eq!(flat.len(), self.parameter_count());
        let mut off = 0;
        for p in &mut self.params {
            let n = p.len();
            p.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// All gradients concatenated in storage order (zeros where absent).
    pub fn flat_grads(&self) -> Vec<F> {
        self.params
            .iter()
            .flat_map(|p| match p.grad() {
                Some(g) => g.to_vec(),
                None => vec![F::zero(); p.len()],
            })
            .collect()
    }

    /// Records every parameter on `tape`. Fails on the first non-finite
    /// parameter, naming its tensor.
    pub fn bind(&self, tape: &mut Tape<F>) -> Result<BoundField> {
        self.bind_with(tape, true)
    }

    /// Like [`bind`](Self::bind) but as constants, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape<F>) -> Result<BoundField> {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape<F>, trainable: bool) -> Result<BoundField> {
        let mut vars = Vec::with_capacity(self.params.len());
        for (name, p) in self.names.iter().zip(&self.params) {
            if let Some(bad) = p.values().iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {name} ({bad})")));
            }
            vars.push(tape.leaf(
                p.matrix_shape(),
                p.values().to_vec(),
                trainable && p.requires_grad,
            ));
        }
        Ok(BoundField { vars })
    }

    /// Copies gradients from the last `backward` on `tape` into the
    /// parameters; parameters off the loss path get zeros.
    pub fn collect_grads(&mut self, tape: &Tape<F>, bound: &BoundField) {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            p.grad_mut();
            p.set_grad(tape.grad(v));
        }
    }

    fn branch_offset(&self, branch: usize) -> usize {
        branch * self.config.depth * 2
    }

    fn head_offset(&self, head: usize) -> usize {
        self.branch_offset(2) + head * 2
    }

    fn linear(&self, tape: &mut Tape<F>, bound: &BoundField, at: usize, x: Var) -> Result<Var> {
        tape.linear(x, bound.vars[at], bound.vars[at + 1])
    }

    fn encode_positions(&self, positions: &[[f64; 3]]) -> Result<[Vec<F>; 2]> {
        let enc = &self.config.position_encoding;
        let mut blocks: [Vec<f64>; 2] = Default::default();
        for (s, block) in blocks.iter_mut().enumerate() {
            block.reserve(positions.len() * enc.dim());
            for p in positions {
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite(format!("input position {p:?}")));
                }
                encode_into(
                    *p,
                    enc.num_frequencies,
                    enc.scales[s],
                    enc.include_input,
                    block,
                );
            }
        }
        Ok(blocks.map(|b| b.into_iter().map(F::c).collect()))
    }

    fn trunk(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundField,
        positions: &[[f64; 3]],
    ) -> Result<Var> {
        let m = positions.len();
        let dim = self.config.position_encoding.dim();
        let blocks = self.encode_positions(positions)?;
        let mut branch_out = [None, None];
        for (b, block) in blocks.into_iter().enumerate() {
            let enc = tape.constant((m, dim), block);
            let base = self.branch_offset(b);
            let mut h = enc;
            for i in 0..self.config.depth {
                if i > 0 && i == self.config.skip_layer {
                    h = tape.concat_cols(&[h, enc])?;
                }
                h = self.linear(tape, bound, base + 2 * i, h)?;
                h = tape.relu(h);
            }
            branch_out[b] = Some(h);
        }
        let fused = tape.concat_cols(&[branch_out[0].unwrap(), branch_out[1].unwrap()])?;
        let fused = self.linear(tape, bound, self.head_offset(FUSION), fused)?;
        Ok(tape.relu(fused))
    }

    fn density_head(&self, tape: &mut Tape<F>, bound: &BoundField, trunk: Var) -> Result<(Var, Var)> {
        let raw = self.linear(tape, bound, self.head_offset(DENSITY), trunk)?;
        let sigma = tape.softplus(raw);
        Ok((raw, sigma))
    }

    /// Raw and activated density only; skips the color head.
    pub fn density(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundField,
        positions: &[[f64; 3]],
    ) -> Result<(Var, Var)> {
        let trunk = self.trunk(tape, bound, positions)?;
        self.density_head(tape, bound, trunk)
    }

    /// Batched evaluation on the tape. `dirs` must be unit vectors.
    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundField,
        positions: &[[f64; 3]],
        dirs: &[[f64; 3]],
    ) -> Result<FieldOutput> {
        if positions.len() != dirs.len() {
            return Err(Error::Invalid(format!(
                "{} positions but {} view directions",
                positions.len(),
                dirs.len()
            )));
        }
        let m = positions.len();
        let trunk = self.trunk(tape, bound, positions)?;
        let (raw_sigma, sigma) = self.density_head(tape, bound, trunk)?;

        let ddim = self.config.direction_dim();
        let mut denc = Vec::with_capacity(m * ddim);
        for d in dirs {
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "view direction {d:?} is not unit length"
                )));
            }
            encode_into(*d, self.config.direction_frequencies, 1.0, true, &mut denc);
        }
        let denc = tape.constant((m, ddim), denc.into_iter().map(F::c).collect());
        let feature = self.linear(tape, bound, self.head_offset(FEATURE), trunk)?;
        let h = tape.concat_cols(&[feature, denc])?;
        let h = self.linear(tape, bound, self.head_offset(COLOR0), h)?;
        let h = tape.relu(h);
        let h = self.linear(tape, bound, self.head_offset(COLOR1), h)?;
        let rgb = tape.sigmoid(h);
        Ok(FieldOutput {
            raw_sigma,
            sigma,
            rgb,
        })
    }

    /// Inference over arbitrarily many points, in chunks of `chunk` rows.
    pub fn query(
        &self,
        positions: &[[f64; 3]],
        dirs: &[[f64; 3]],
        chunk: usize,
    ) -> Result<Vec<FieldSample<F>>> {
        let mut out = Vec::with_capacity(positions.len());
        for (p, d) in positions.chunks(chunk.max(1)).zip(dirs.chunks(chunk.max(1))) {
            let mut tape = Tape::new();
            let bound = self.bind_frozen(&mut tape)?;
            let o = self.forward(&mut tape, &bound, p, d)?;
            let raw = tape.value(o.raw_sigma);
            let sigma = tape.value(o.sigma);
            let rgb = tape.value(o.rgb);
            out.extend((0..p.len()).map(|i| FieldSample {
                sigma: sigma[i],
                raw_sigma: raw[i],
                rgb: [rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]],
            }));
        }
        Ok(out)
    }

    /// Raw (pre-softplus) density at many points.
    pub fn query_raw_density(&self, positions: &[[f64; 3]], chunk: usize) -> Result<Vec<F>> {
        let mut out = Vec::with_capacity(positions.len());
        for p in positions.chunks(chunk.max(1)) {
            let mut tape = Tape::new();
            let bound = self.bind_frozen(&mut tape)?;
            let (raw, _) = self.density(&mut tape, &bound, p)?;
            out.extend_from_slice(tape.value(raw));
        }
        Ok(out)
    }

    /// Single-point evaluation.
    pub fn eval(&self, position: [f64; 3], view_dir: [f64; 3]) -> Result<FieldSample<F>> {
        Ok(self.query(&[position], &[view_dir], 1)?[0])
    }
}

/// Activated density from a raw value, matching the density head.
pub fn activate_density<F: Real>(raw: F) -> F {
    softplus(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small() -> RadianceField<f32> {
        RadianceField::new(FieldConfig {
            init_seed: 7,
            ..FieldConfig::desk()
        })
        .unwrap()
    }

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|c| c / n)
    }

    #[test]
    fn default_parameter_count_is_in_budget() {
        let cfg = FieldConfig::default();
        let n = cfg.parameter_count();
        assert!((600_000..=750_000).contains(&n), "{n}");
        assert_eq!(RadianceField::<f32>::new(cfg).unwrap().parameter_count(), n);
        assert_eq!(FieldConfig::desk().parameter_count(), 15_380);
    }

    #[test]
    fn density_ignores_view_direction() {
        let field = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = [0.2, -0.4, 0.1];
        let dirs: Vec<[f64; 3]> = (0..100)
            .map(|_| unit(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
            .collect();
        let out = field.query(&vec![p; 100], &dirs, 100).unwrap();
        assert!(out.iter().all(|s| s.sigma.to_bits() == out[0].sigma.to_bits()));
        assert!(out.iter().any(|s| s.rgb != out[0].rgb));
    }

    #[test]
    fn rejects_non_unit_directions() {
        let err = small().eval([0.0; 3], [1.0, 1.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("unit length"), "{err}");
    }

    #[test]
    fn non_finite_parameter_names_its_layer() {
        let mut field = small();
        let k = field.names().iter().position(|n| n == "fusion.bias").unwrap();
        field.params_mut()[k].values_mut()[0] = f32::NAN;
        let err = field.eval([0.0; 3], [0.0, 0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("fusion.bias"), "{err}");
    }

    #[test]
    fn named_tensors_round_trip() {
        let field = small();
        let back = RadianceField::<f32>::from_named_f32(field.config().clone(), &field.to_named_f32()).unwrap();
        assert_eq!(back.flat_values(), field.flat_values());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn outputs_stay_in_range(
            p in prop::array::uniform3(-1e3f64..1e3),
            d in prop::array::uniform3(-1.0f64..1.0),
            seed in 0u64..1000,
        ) {
            prop_assume!(d.iter().map(|c| c * c).sum::<f64>() > 1e-4);
            let field = RadianceField::<f32>::new(FieldConfig { init_seed: seed, ..FieldConfig::desk() }).unwrap();
            let s = field.eval(p, unit(d)).unwrap();
            prop_assert!(s.sigma >= 0.0 && s.sigma.is_finite());
            prop_assert!(s.rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
