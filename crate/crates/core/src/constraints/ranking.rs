//! Ordinal depth supervision: predicted depth differences are pushed to
//! agree in sign with a monocular prior, through a margin hinge.

use rand::Rng;

use crate::diffmath::{Real, Tape, Var};
use crate::Result;

/// Pixel pairs with the sign of their prior depth difference. Only signs
/// leave the prior; ties are dropped at construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    pairs: Vec<RankPair>,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankPair {
    pub i: usize,
    pub j: usize,
    /// `sgn(D_M(i) − D_M(j))`, never 0.
    pub sign: i8,
}

impl PairSet {
    /// Keeps the candidates whose priors differ by at least `tie_eps`.
    /// Pairs with `i == j` or a non-finite prior are skipped.
    pub fn from_priors(
        candidates: &[(usize, usize)],
        prior: impl Fn(usize) -> Option<f64>,
        margin: f64,
        tie_eps: f64,
    ) -> Self {
        let pairs = candidates
            .iter()
            .filter(|(i, j)| i != j)
            .filter_map(|&(i, j)| {
                let (a, b) = (prior(i)?, prior(j)?);
                if !(a.is_finite() && b.is_finite()) {
                    return None;
                }
                let d = a - b;
                if d.abs() < tie_eps {
                    None
                } else {
                    Some(RankPair {
                        i,
                        j,
                        sign: if d > 0.0 { 1 } else { -1 },
                    })
                }
            })
            .collect();
        Self { pairs, margin }
    }

    pub fn from_pairs(pairs: Vec<RankPair>, margin: f64) -> Self {
        Self { pairs, margin }
    }

    pub fn pairs(&self) -> &[RankPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Draws `count` candidate pairs among `eligible` indices grouped by frame:
/// both members share a frame. Frames with fewer than two eligible pixels
/// are never chosen.
pub fn sample_pair_candidates<R: Rng + ?Sized>(
    groups: &[Vec<usize>],
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let usable: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() >= 2).collect();
    if usable.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let g = usable[rng.gen_range(0..usable.len())];
            let a = rng.gen_range(0..g.len());
            let mut b = rng.gen_range(0..g.len() - 1);
            if b >= a {
                b += 1;
            }
            (g[a], g[b])
        })
        .collect()
}

/// Mean over pairs of `max(0, margin − s·(D_P(i) − D_P(j)))`. `depth` is an
/// `R×1` node. Returns `None` for an empty pair set.
pub fn depth_ranking_loss<F: Real>(
    tape: &mut Tape<F>,
    depth: Var,
    pairs: &PairSet,
) -> Result<Option<Var>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let is: Vec<usize> = pairs.pairs.iter().map(|p| p.i).collect();
    let js: Vec<usize> = pairs.pairs.iter().map(|p| p.j).collect();
    let signs: Vec<F> = pairs.pairs.iter().map(|p| F::c(p.sign as f64)).collect();
    let n = pairs.len();
    let di = tape.gather_rows(depth, &is)?;
    let dj = tape.gather_rows(depth, &js)?;
    let diff = tape.sub(di, dj)?;
    let signs = tape.constant((n, 1), signs);
    let agree = tape.mul(signs, diff)?;
    let neg = tape.neg(agree);
    let slack = tape.offset(neg, F::c(pairs.margin));
    let hinge = tape.max0(slack);
    Ok(Some(tape.mean(hinge)))
}
