//! Fusing the three channel features into one representation.

use crate::error::{Error, Result};
use crate::tape::{Tape, ValueId};

/// Output of attention fusion; the weights are exposed for tests and
/// diagnostics.
pub struct AttentionOutput {
    /// Fused feature, `[size, width]`.
    pub fused: ValueId,
    /// Softmax weights `[size * width, 3]`: one simplex per (row, dimension).
    pub weights: ValueId,
}

/// Score-and-softmax fusion across the three features, independently for
/// every feature dimension.
///
/// For each (row, dimension) the three channel values form a length-3
/// vector `v`; scores are `relu(v W + b)` with a shared `3x3` map, the
/// weights are their softmax, and the output is the weighted sum of `v`.
pub fn attention_fuse(
    tape: &mut Tape,
    spatial: ValueId,
    day: ValueId,
    hour: ValueId,
    score_weight: ValueId,
    score_bias: ValueId,
) -> Result<AttentionOutput> {
    let (rows, width) = tape.value(spatial).dims2()?;
    for &other in &[day, hour] {
        if tape.value(other).shape() != [rows, width] {
            return Err(Error::Dimension(alloc::format!(
                "fusion width mismatch: {:?} vs {:?}",
                tape.value(spatial).shape(),
                tape.value(other).shape()
            )));
        }
    }
    // Lay the three features out as [rows * width, 3]: one column per
    // channel, one output row per (row, dimension) pair.
    let flat = rows * width;
    let s_col = tape.reshape(spatial, &[flat, 1])?;
    let d_col = tape.reshape(day, &[flat, 1])?;
    let h_col = tape.reshape(hour, &[flat, 1])?;
    let stacked = tape.concat_cols(&[s_col, d_col, h_col])?;

    let scored = tape.matmul(stacked, score_weight)?;
    let biased = tape.add_row(scored, score_bias)?;
    let scores = tape.relu(biased)?;
    let weights = tape.softmax_rows(scores)?;

    let weighted = tape.mul(weights, stacked)?;
    let combined = tape.sum_rows(weighted)?;
    let fused = tape.reshape(combined, &[rows, width])?;
    Ok(AttentionOutput { fused, weights })
}

/// Unweighted convex combination of the three features: attention with the
/// weights frozen uniform. Used by the no-attention ablation.
pub fn mean_fuse(
    tape: &mut Tape,
    spatial: ValueId,
    day: ValueId,
    hour: ValueId,
) -> Result<ValueId> {
    let sum = tape.add(spatial, day)?;
    let sum = tape.add(sum, hour)?;
    tape.scale(sum, 1.0 / 3.0)
}
