//! Emission-absorption compositing.
//!
//! For densities `σᵢ` over bins `δᵢ`: `αᵢ = 1 − exp(−σᵢδᵢ)`,
//! `Tᵢ = exp(−Σ_{j<i} σⱼδⱼ)`, `wᵢ = Tᵢαᵢ`. Color is `Σwᵢcᵢ + (1 − Σwᵢ)·bg`
//! and expected depth is `Σwᵢtᵢ / max(Σwᵢ, ε)`.

use super::RaySamples;
use crate::diffmath::{Real, Tape, Var};
use crate::{Error, Result};

/// Floor on accumulated opacity in the expected-depth denominator.
pub const DEPTH_EPS: f64 = 1e-8;
/// Rays with less accumulated opacity count as empty.
pub const EMPTY_ACC: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput<F> {
    pub color: [F; 3],
    /// Expected depth; `t_far` for empty rays.
    pub depth: F,
    pub acc: F,
    pub weights: Vec<F>,
    /// Transmittance past the last sample.
    pub transmittance: F,
}

/// Composites one ray.
pub fn volume_render<F: Real>(
    samples: &RaySamples,
    sigma: &[F],
    rgb: &[[F; 3]],
    background: [F; 3],
) -> Result<RenderOutput<F>> {
    let n = samples.len();
    if sigma.len() != n || rgb.len() != n {
        return Err(Error::Invalid(format!(
            "{n} samples but {} densities and {} colors",
            sigma.len(),
            rgb.len()
        )));
    }
    if sigma.iter().any(|s| !s.is_finite())
        || rgb.iter().flatten().any(|c| !c.is_finite())
        || background.iter().any(|c| !c.is_finite())
    {
        return Err(Error::NonFinite("volume_render input".into()));
    }
    if let Some(s) = sigma.iter().find(|&&s| s < F::zero()) {
        return Err(Error::Invalid(format!("negative density {s}")));
    }
    if let Some(d) = samples.delta.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::Invalid(format!("non-positive interval {d}")));
    }

    let mut weights = Vec::with_capacity(n);
    let mut color = [F::zero(); 3];
    let mut depth_num = F::zero();
    let mut optical = F::zero();
    for i in 0..n {
        let tau = sigma[i] * F::c(samples.delta[i]);
        let trans = (-optical).exp();
        let w = trans * (F::one() - (-tau).exp());
        for c in 0..3 {
            color[c] = color[c] + w * rgb[i][c];
        }
        depth_num = depth_num + w * F::c(samples.t[i]);
        weights.push(w);
        optical = optical + tau;
    }
    let acc = weights.iter().fold(F::zero(), |a, &w| a + w);
    for c in 0..3 {
        color[c] = color[c] + (F::one() - acc) * background[c];
    }
    let depth = if acc.f64() < EMPTY_ACC {
        F::c(samples.t_far)
    } else {
        depth_num / acc.max(F::c(DEPTH_EPS))
    };
    Ok(RenderOutput {
        color,
        depth,
        acc,
        weights,
        transmittance: (-optical).exp(),
    })
}

/// Tape handles for a batch of `R` rays with `S` samples each.
#[derive(Clone, Copy, Debug)]
pub struct RenderVars {
    /// `R×3`
    pub color: Var,
    /// `R×1`, `Σwt / max(Σw, ε)`
    pub depth: Var,
    /// `R×1`
    pub acc: Var,
    /// `R×S`
    pub weights: Var,
}

/// Differentiable compositing. `sigma` is `(R·S)×1` and `rgb` `(R·S)×3`,
/// laid out ray-major; every ray must have the same sample count.
pub fn composite<F: Real>(
    tape: &mut Tape<F>,
    sigma: Var,
    rgb: Var,
    samples: &[RaySamples],
    background: [f64; 3],
) -> Result<RenderVars> {
    let r = samples.len();
    let s = samples.first().map_or(0, RaySamples::len);
    if samples.iter().any(|x| x.len() != s) {
        return Err(Error::Invalid("rays in a batch must share the sample count".into()));
    }
    if tape.shape(sigma) != (r * s, 1) || tape.shape(rgb) != (r * s, 3) {
        return Err(Error::Shape {
            op: "composite",
            lhs: tape.shape(sigma),
            rhs: tape.shape(rgb),
        });
    }
    let delta: Vec<F> = samples
        .iter()
        .flat_map(|x| x.delta.iter().map(|&d| F::c(d)))
        .collect();
    let tvals: Vec<F> = samples
        .iter()
        .flat_map(|x| x.t.iter().map(|&t| F::c(t)))
        .collect();

    let sigma = tape.reshape(sigma, (r, s))?;
    let delta = tape.constant((r, s), delta);
    let tau = tape.mul(sigma, delta)?;
    let neg_tau = tape.neg(tau);
    let survive = tape.exp(neg_tau);
    let neg_survive = tape.neg(survive);
    let alpha = tape.offset(neg_survive, F::one());
    let optical = tape.exclusive_cumsum(tau);
    let neg_optical = tape.neg(optical);
    let trans = tape.exp(neg_optical);
    let weights = tape.mul(trans, alpha)?;

    let wcol = tape.reshape(weights, (r * s, 1))?;
    let weighted = tape.mul_col(rgb, wcol)?;
    let mut color = tape.group_sum_rows(weighted, s)?;
    let acc = tape.row_sum(weights);
    if background.iter().any(|&b| b != 0.0) {
        let bg: Vec<F> = (0..r).flat_map(|_| background.map(F::c)).collect();
        let bg = tape.constant((r, 3), bg);
        let neg_acc = tape.neg(acc);
        let remaining = tape.offset(neg_acc, F::one());
        let fill = tape.mul_col(bg, remaining)?;
        color = tape.add(color, fill)?;
    }

    let tvals = tape.constant((r, s), tvals);
    let wt = tape.mul(weights, tvals)?;
    let num = tape.row_sum(wt);
    let den = tape.clamp_min(acc, F::c(DEPTH_EPS));
    let depth = tape.div(num, den)?;
    Ok(RenderVars {
        color,
        depth,
        acc,
        weights,
    })
}
