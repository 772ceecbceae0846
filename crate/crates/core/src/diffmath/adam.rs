use log::warn;
use serde::{Deserialize, Serialize};

use super::{ParamTensor, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `lr0 · γ^t`, evaluated in double precision.
pub fn decayed_lr(lr0: f64, gamma: f64, step: u64) -> f64 {
    lr0 * gamma.powf(step as f64)
}

/// Incremental form of [`decayed_lr`]: each call to `next` yields the rate
/// for the current step and then multiplies by γ.
#[derive(Clone, Debug)]
pub struct LrSchedule {
    gamma: f64,
    current: f64,
}

impl LrSchedule {
    pub fn new(lr0: f64, gamma: f64) -> Self {
        Self {
            gamma,
            current: lr0,
        }
    }
}

impl Iterator for LrSchedule {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let lr = self.current;
        self.current *= self.gamma;
        Some(lr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; nothing was changed.
    SkippedNonFinite,
}

/// First and second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F: Real> {
    pub config: AdamConfig,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    /// Number of applied updates; drives bias correction.
    pub t: u64,
    pub skipped: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig, params: &[&ParamTensor<F>]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            t: 0,
            skipped: 0,
        }
    }

    /// One Adam update with bias correction. Parameters without a gradient
    /// buffer are treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut ParamTensor<F>], lr: f64) -> StepOutcome {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        let finite = params
            .iter()
            .all(|p| p.grad().is_none_or(|g| g.iter().all(|x| x.is_finite())));
        if !finite {
            self.skipped += 1;
            warn!(
                "non-finite gradient, skipping update ({} skipped so far)",
                self.skipped
            );
            return StepOutcome::SkippedNonFinite;
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        let (b1, b2) = (F::c(beta1), F::c(beta2));
        let (one_b1, one_b2) = (F::c(1.0 - beta1), F::c(1.0 - beta2));
        let step_size = F::c(lr / bc1);
        let inv_sqrt_bc2 = F::c(1.0 / bc2.sqrt());
        let eps = F::c(eps);

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), m.len(), "moment buffer shape mismatch");
            let grad = p.grad().map(|g| g.to_vec());
            let values = p.values_mut();
            for k in 0..values.len() {
                let g = grad.as_ref().map_or(F::zero(), |g| g[k]);
                m[k] = b1 * m[k] + one_b1 * g;
                v[k] = b2 * v[k] + one_b2 * g * g;
                let denom = v[k].sqrt() * inv_sqrt_bc2 + eps;
                values[k] = values[k] - step_size * m[k] / denom;
            }
        }
        StepOutcome::Applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decayed_rate_after_thousand_steps() {
        let lr = decayed_lr(5e-4, 0.998, 1000);
        let oracle = 5e-4 * (1000.0 * 0.998f64.ln()).exp();
        assert!((lr - oracle).abs() < 1e-12 * oracle, "{lr} vs {oracle}");
        assert!((lr - 6.7532e-5).abs() < 1e-9, "{lr}");
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = ParamTensor::new(vec![2], vec![1.0f64, -2.0]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        state.m[0] = vec![0.5, 0.5];
        state.v[0] = vec![0.25, 0.25];
        p.grad_mut().fill(0.0);
        // with nonzero first moment the param still moves; isolate the zero
        // moment case first
        let mut fresh = AdamState::new(AdamConfig::default(), &[&p]);
        fresh.step(&mut [&mut p], 1e-3);
        assert_eq!(p.values(), &[1.0, -2.0]);
        assert_eq!(fresh.m[0], vec![0.0, 0.0]);

        let mut q = ParamTensor::new(vec![2], vec![1.0f64, -2.0]);
        q.grad_mut().fill(0.0);
        state.step(&mut [&mut q], 0.0);
        assert_eq!(q.values(), &[1.0, -2.0]);
        assert!(state.m[0].iter().all(|&m| (m - 0.45).abs() < 1e-15));
        assert!(state.v[0].iter().all(|&v| (v - 0.25 * 0.999).abs() < 1e-15));
    }

    #[test]
    fn three_constant_gradient_steps_match_hand_iterates() {
        // Hand computation with g = 1, β1 = 0.9, β2 = 0.999, lr = 0.1, ε = 1e-8:
        // m_t = 1 - 0.9^t, v_t = 1 - 0.999^t, so m̂ = v̂ = 1 and every step
        // moves by lr / (1 + ε).
        let lr = 0.1;
        let mut p = ParamTensor::new(vec![1], vec![0.0f64]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        let mut expected = 0.0;
        for t in 1..=3 {
            p.grad_mut()[0] = 1.0;
            assert_eq!(state.step(&mut [&mut p], lr), StepOutcome::Applied);
            let m = 1.0 - 0.9f64.powi(t);
            let v = 1.0 - 0.999f64.powi(t);
            assert!((state.m[0][0] - m).abs() < 1e-15);
            assert!((state.v[0][0] - v).abs() < 1e-15);
            expected -= lr * (m / (1.0 - 0.9f64.powi(t)))
                / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((p.values()[0] - expected).abs() < 1e-12, "step {t}");
        }
        assert!((p.values()[0] + 0.3).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut p = ParamTensor::new(vec![2], vec![1.0f32, 2.0]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        p.grad_mut().copy_from_slice(&[f32::NAN, 1.0]);
        assert_eq!(
            state.step(&mut [&mut p], 1e-3),
            StepOutcome::SkippedNonFinite
        );
        assert_eq!(p.values(), &[1.0, 2.0]);
        assert_eq!(state.skipped, 1);
        assert_eq!(state.t, 0);
    }

    #[test]
    fn incremental_schedule_matches_closed_form_in_f32() {
        let mut inc = LrSchedule::new(5e-4, 0.998);
        for t in 0..150_000u64 {
            let a = inc.next().unwrap() as f32;
            let b = decayed_lr(5e-4, 0.998, t) as f32;
            let ulps = (a.to_bits() as i64 - b.to_bits() as i64).abs();
            assert!(ulps <= 1, "step {t}: {a} vs {b}");
        }
    }
}
