//! Residual fully-connected decoder producing the travel-time estimate.

use alloc::format;

use crate::error::Result;
use crate::tape::{Tape, ValueId};

use super::{BoundParams, ModelConfig};

/// Chain of fully-connected layers with ReLU between them, a residual add
/// of the fused feature, and a final linear estimation layer to one value
/// per row (in normalized label space).
pub(super) fn residual_decode(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    cfg: &ModelConfig,
    fused: ValueId,
) -> Result<ValueId> {
    let mut hidden = fused;
    let last = cfg.decoder_widths.len() - 1;
    for i in 0..=last {
        let w = params.get(tape, &format!("dec/fc{i}/weight"))?;
        let b = params.get(tape, &format!("dec/fc{i}/bias"))?;
        let lin = tape.matmul(hidden, w)?;
        hidden = tape.add_row(lin, b)?;
        if i != last {
            hidden = tape.relu(hidden)?;
        }
    }
    let residual = tape.add(hidden, fused)?;
    let w = params.get(tape, "dec/estimate/weight")?;
    let b = params.get(tape, "dec/estimate/bias")?;
    let estimate = tape.matmul(residual, w)?;
    tape.add_row(estimate, b)
}
