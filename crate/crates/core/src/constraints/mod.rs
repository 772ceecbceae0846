//! Reconstruction and physics-guided losses and their weighted assembly.
//!
//! The total objective is `L_rgb + α(t)·Σᵢ λᵢ·Lᵢ` over the depth-ranking,
//! cross-view, sparsity and smoothness terms.

mod cross_view;
mod ranking;
mod schedule;
mod smoothness;
mod sparsity;

use serde::{Deserialize, Serialize};

pub use cross_view::{
    cross_view_loss, find_correspondences, Correspondence, CrossViewConfig, LiftedRay,
};
pub use ranking::{depth_ranking_loss, sample_pair_candidates, PairSet, RankPair};
pub use schedule::{Breakpoint, Schedule};
pub use smoothness::{smoothness_loss, PatchLayout};
pub use sparsity::{sample_points, sparsity_estimate, sparsity_loss, Aabb, McEstimate};

use crate::diffmath::{Real, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintWeights {
    pub lambda_depth: f64,
    pub lambda_cv: f64,
    pub lambda_sparse: f64,
    pub lambda_reg: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        Self {
            lambda_depth: 0.1,
            lambda_cv: 0.05,
            lambda_sparse: 0.01,
            lambda_reg: 0.01,
        }
    }
}

impl ConstraintWeights {
    pub fn none() -> Self {
        Self {
            lambda_depth: 0.0,
            lambda_cv: 0.0,
            lambda_sparse: 0.0,
            lambda_reg: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.lambda_depth,
            self.lambda_cv,
            self.lambda_sparse,
            self.lambda_reg,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config(format!(
                "constraint weights must be finite and >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sampling parameters of the auxiliary terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSettings {
    pub ranking_pairs: usize,
    pub ranking_margin: f64,
    pub prior_tie_eps: f64,
    pub sparsity_points: usize,
    pub cross_view: CrossViewConfig,
}

impl Default for ConstraintSettings {
    fn default() -> Self {
        Self {
            ranking_pairs: 512,
            ranking_margin: 1e-3,
            prior_tie_eps: 1e-6,
            sparsity_points: 1024,
            cross_view: CrossViewConfig::default(),
        }
    }
}

impl ConstraintSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.ranking_margin.is_finite() && self.ranking_margin >= 0.0)
            || !(self.prior_tie_eps.is_finite() && self.prior_tie_eps >= 0.0)
        {
            return Err(Error::Config("ranking margin and tie epsilon must be >= 0".into()));
        }
        if self.sparsity_points == 0 {
            return Err(Error::Config("sparsity_points must be at least 1".into()));
        }
        self.cross_view.validate()
    }
}

/// Mean squared error over every channel of two `R×3` nodes.
pub fn rgb_loss<F: Real>(tape: &mut Tape<F>, rendered: Var, target: Var) -> Result<Var> {
    if tape.shape(rendered) != tape.shape(target) {
        return Err(Error::Shape {
            op: "rgb_loss",
            lhs: tape.shape(rendered),
            rhs: tape.shape(target),
        });
    }
    let d = tape.sub(rendered, target)?;
    let d2 = tape.square(d);
    Ok(tape.mean(d2))
}

/// Individual terms on the tape; `None` means unavailable this step.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub rgb: Var,
    pub depth: Option<Var>,
    pub cross_view: Option<Var>,
    pub sparsity: Option<Var>,
    pub smoothness: Option<Var>,
}

/// Logged values of one assembly. Auxiliary entries hold `λᵢ·Lᵢ`, before
/// the schedule multiplier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub alpha: f64,
    pub rgb: f64,
    pub depth: f64,
    pub cross_view: f64,
    pub sparsity: f64,
    pub smoothness: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.rgb,
            self.depth,
            self.cross_view,
            self.sparsity,
            self.smoothness,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "alpha={} rgb={} depth={} cv={} sparse={} reg={} total={}",
            self.alpha,
            self.rgb,
            self.depth,
            self.cross_view,
            self.sparsity,
            self.smoothness,
            self.total
        )
    }
}

/// Counts of enabled terms that had nothing to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub empty_pair_sets: u64,
    pub empty_correspondences: u64,
    pub missing_patches: u64,
}

/// Assembles `L_rgb + α(t)·Σ λᵢLᵢ`. Missing terms whose weight is nonzero
/// count as 0 and bump the matching diagnostic.
pub fn total_loss<F: Real>(
    tape: &mut Tape<F>,
    step: u64,
    terms: &LossTerms,
    weights: &ConstraintWeights,
    schedule: &Schedule,
    diagnostics: &mut Diagnostics,
) -> Result<(Var, LossBreakdown)> {
    let alpha = schedule.alpha(step);
    let mut breakdown = LossBreakdown {
        alpha,
        rgb: tape.item(terms.rgb).f64(),
        ..Default::default()
    };
    let aux = [
        (terms.depth, weights.lambda_depth),
        (terms.cross_view, weights.lambda_cv),
        (terms.sparsity, weights.lambda_sparse),
        (terms.smoothness, weights.lambda_reg),
    ];
    let mut weighted = Vec::new();
    for (k, (term, lambda)) in aux.into_iter().enumerate() {
        if lambda == 0.0 {
            continue;
        }
        let Some(v) = term else {
            match k {
                0 => diagnostics.empty_pair_sets += 1,
                1 => diagnostics.empty_correspondences += 1,
                3 => diagnostics.missing_patches += 1,
                _ => {}
            }
            continue;
        };
        let scaled = tape.scale(v, F::c(lambda));
        let value = tape.item(scaled).f64();
        match k {
            0 => breakdown.depth = value,
            1 => breakdown.cross_view = value,
            2 => breakdown.sparsity = value,
            _ => breakdown.smoothness = value,
        }
        weighted.push(scaled);
    }
    let mut total = terms.rgb;
    if alpha != 0.0 {
        for w in weighted {
            let s = tape.scale(w, F::c(alpha));
            total = tape.add(total, s)?;
        }
    }
    breakdown.total = tape.item(total).f64();
    Ok((total, breakdown))
}
