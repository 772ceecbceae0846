use rand::Rng;

use super::Ray;
use crate::{Error, Result};

/// Quadrature points along one ray. Sample `i` represents the bin of width
/// `delta[i]`, and the bins partition `[t_near, t_far]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub t_near: f64,
    pub t_far: f64,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn positions(&self, ray: &Ray) -> impl Iterator<Item = [f64; 3]> + '_ {
        let (o, d) = (ray.origin, ray.direction);
        self.t.iter().map(move |&t| super::geometry::at(o, d, t))
    }
}

/// `n_samples` points in `[t_near, t_far]`: bin centers, or one uniform
/// draw per bin when `stratified`.
pub fn sample_along_ray<R: Rng + ?Sized>(
    ray: &Ray,
    n_samples: usize,
    stratified: bool,
    rng: &mut R,
) -> Result<RaySamples> {
    sample_interval(ray.t_near, ray.t_far, n_samples, stratified, rng)
}

pub fn sample_interval<R: Rng + ?Sized>(
    t_near: f64,
    t_far: f64,
    n_samples: usize,
    stratified: bool,
    rng: &mut R,
) -> Result<RaySamples> {
    if n_samples < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 samples per ray, got {n_samples}"
        )));
    }
    if !(t_near < t_far) {
        return Err(Error::Invalid(format!(
            "empty ray interval [{t_near}, {t_far}]"
        )));
    }
    let width = (t_far - t_near) / n_samples as f64;
    let edge = |i: usize| {
        if i == n_samples {
            t_far
        } else {
            t_near + width * i as f64
        }
    };
    let mut t = Vec::with_capacity(n_samples);
    let mut delta = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let (lo, hi) = (edge(i), edge(i + 1));
        let u: f64 = if stratified { rng.gen() } else { 0.5 };
        t.push(lo + u * (hi - lo));
        delta.push(hi - lo);
    }
    Ok(RaySamples {
        t,
        delta,
        t_near,
        t_far,
    })
}
