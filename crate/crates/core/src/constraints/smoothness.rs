//! Patch smoothness: squared differences of rendered depth and color
//! between horizontally and vertically adjacent rays of each `s×s` patch.

use crate::diffmath::{Real, Tape, Var};
use crate::Result;

/// Rays of patch `p` occupy batch rows `starts[p] .. starts[p] + size²`,
/// row-major within the patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchLayout {
    pub size: usize,
    pub starts: Vec<usize>,
}

impl PatchLayout {
    /// `count` consecutive patches starting at row 0.
    pub fn contiguous(size: usize, count: usize) -> Self {
        Self {
            size,
            starts: (0..count).map(|p| p * size * size).collect(),
        }
    }

    /// `(a, b)` batch-row pairs of every adjacent pixel pair: first all
    /// horizontal pairs of a patch, then all vertical ones.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let s = self.size;
        let mut out = Vec::with_capacity(self.starts.len() * 2 * s * s.saturating_sub(1));
        for &base in &self.starts {
            for y in 0..s {
                for x in 0..s.saturating_sub(1) {
                    out.push((base + y * s + x, base + y * s + x + 1));
                }
            }
            for y in 0..s.saturating_sub(1) {
                for x in 0..s {
                    out.push((base + y * s + x, base + (y + 1) * s + x));
                }
            }
        }
        out
    }
}

/// Mean over adjacent pairs of `(Δdepth)² + ‖Δcolor‖²`. `color` is `R×3` and
/// `depth` `R×1`. Returns `None` when the layout has no adjacent pairs.
pub fn smoothness_loss<F: Real>(
    tape: &mut Tape<F>,
    color: Var,
    depth: Var,
    layout: &PatchLayout,
) -> Result<Option<Var>> {
    let pairs = layout.adjacent_pairs();
    if pairs.is_empty() {
        return Ok(None);
    }
    let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let both = tape.concat_cols(&[depth, color])?;
    let va = tape.gather_rows(both, &a)?;
    let vb = tape.gather_rows(both, &b)?;
    let diff = tape.sub(va, vb)?;
    let sq = tape.square(diff);
    let per_pair = tape.row_sum(sq);
    Ok(Some(tape.mean(per_pair)))
}
