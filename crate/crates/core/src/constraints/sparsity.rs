//! Empty-space prior: expected softplus of raw density over the scene box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{softplus, Real, Tape, Var};
use crate::field::{BoundField, RadianceField};
use crate::render::geometry::Vec3;
use crate::{Error, Result};

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn cube(half: f64) -> Self {
        Self {
            min: [-half; 3],
            max: [half; 3],
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).product()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..3).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i]
        });
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "degenerate bounds {:?}..{:?}",
                self.min, self.max
            )))
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        std::array::from_fn(|i| self.min[i] + (self.max[i] - self.min[i]) * rng.gen::<f64>())
    }
}

/// `n` uniform points in `bounds`.
pub fn sample_points<R: Rng + ?Sized>(bounds: &Aabb, n: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    bounds.validate()?;
    if n == 0 {
        return Err(Error::Invalid("sparsity needs at least one point".into()));
    }
    Ok((0..n).map(|_| bounds.sample(rng)).collect())
}

/// Mean of `softplus(raw σ)` at `points`, on the tape.
pub fn sparsity_loss<F: Real>(
    tape: &mut Tape<F>,
    field: &RadianceField<F>,
    bound: &BoundField,
    points: &[Vec3],
) -> Result<Var> {
    if points.is_empty() {
        return Err(Error::Invalid("sparsity needs at least one point".into()));
    }
    let (_, sigma) = field.density(tape, bound, points)?;
    Ok(tape.mean(sigma))
}

/// Monte Carlo estimate of the sparsity expectation with its standard
/// error, evaluated without gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn sparsity_estimate<F: Real, R: Rng + ?Sized>(
    field: &RadianceField<F>,
    bounds: &Aabb,
    n: usize,
    chunk: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let points = sample_points(bounds, n, rng)?;
    let raw = field.query_raw_density(&points, chunk)?;
    let vals: Vec<f64> = raw.iter().map(|&r| softplus(r).f64()).collect();
    Ok(mc_summary(&vals))
}

pub(crate) fn mc_summary(vals: &[f64]) -> McEstimate {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: vals.len(),
    }
}
