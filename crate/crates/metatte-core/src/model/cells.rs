//! Recurrent cells and masked sequence encoding.
//!
//! Sequences arrive time-major (`[max_len * size, width]`); each step is a
//! contiguous row block. Rows past a sequence's true length are masked so
//! its state stops changing exactly at the final valid step, which makes
//! predictions bit-identical regardless of padding.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::optim::{xavier_init, ParameterStore};
use crate::rng::derive_seed;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

use super::{Batch, BoundParams, ModelConfig};

/// Recurrent cell used by the channel encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
    BiLstm,
}

impl CellKind {
    pub fn label(&self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::BiLstm => "bilstm",
        }
    }

    pub fn parse(s: &str) -> Result<CellKind> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            "bilstm" => Ok(CellKind::BiLstm),
            other => Err(Error::Config(format!(
                "unknown cell {other}; expected lstm, gru, or bilstm"
            ))),
        }
    }
}

const GRU_GATES: [&str; 3] = ["update", "reset", "candidate"];
const LSTM_GATES: [&str; 4] = ["input", "forget", "output", "cell"];

fn gate_names(cell: &str, gate: &str) -> (String, String, String) {
    (
        format!("{cell}/{gate}/input"),
        format!("{cell}/{gate}/recurrent"),
        format!("{cell}/{gate}/bias"),
    )
}

/// Register the recurrent parameters for one channel.
pub(super) fn init_cell_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    channel: &str,
    seed: u64,
) -> Result<()> {
    let xavier = |store: &mut ParameterStore, name: String, shape: &[usize]| -> Result<()> {
        let t = xavier_init(shape, derive_seed(seed, &name))?;
        store.insert(name, t)
    };
    let d = cfg.embed_dim;
    let n = cfg.rnn_units;
    let init_gates = |store: &mut ParameterStore, prefix: String, gates: &[&str]| -> Result<()> {
        for gate in gates {
            let (w_in, w_rec, bias) = gate_names(&prefix, gate);
            xavier(store, w_in, &[d, n])?;
            xavier(store, w_rec, &[n, n])?;
            xavier(store, bias, &[n])?;
        }
        Ok(())
    };
    match cfg.cell {
        CellKind::Gru => init_gates(store, format!("enc/{channel}/gru"), &GRU_GATES)?,
        CellKind::Lstm => init_gates(store, format!("enc/{channel}/lstm"), &LSTM_GATES)?,
        CellKind::BiLstm => {
            init_gates(store, format!("enc/{channel}/fwd"), &LSTM_GATES)?;
            init_gates(store, format!("enc/{channel}/bwd"), &LSTM_GATES)?;
            xavier(store, format!("enc/{channel}/proj/weight"), &[2 * n, n])?;
            xavier(store, format!("enc/{channel}/proj/bias"), &[n])?;
        }
    }
    Ok(())
}

/// Per-step row masks: `Some((active, inactive))` for steps where some
/// sequence has already ended, `None` where every row is still live. The
/// tensors are `[size, width]` with rows of ones and zeros.
pub(super) fn step_masks(
    tape: &mut Tape,
    lengths: &[usize],
    max_len: usize,
    width: usize,
) -> Vec<Option<(ValueId, ValueId)>> {
    let size = lengths.len();
    (0..max_len)
        .map(|t| {
            if lengths.iter().all(|&l| t < l) {
                return None;
            }
            let mut active = alloc::vec![0.0; size * width];
            let mut inactive = alloc::vec![0.0; size * width];
            for (b, &len) in lengths.iter().enumerate() {
                let row = if t < len {
                    &mut active
                } else {
                    &mut inactive
                };
                row[b * width..(b + 1) * width].fill(1.0);
            }
            let active = tape.leaf(Tensor::from_vec(&[size, width], active).expect("mask shape"));
            let inactive =
                tape.leaf(Tensor::from_vec(&[size, width], inactive).expect("mask shape"));
            Some((active, inactive))
        })
        .collect()
}

/// `new` where the row is active, `old` where it is not.
fn masked_select(
    tape: &mut Tape,
    mask: Option<(ValueId, ValueId)>,
    new: ValueId,
    old: ValueId,
) -> Result<ValueId> {
    match mask {
        None => Ok(new),
        Some((active, inactive)) => {
            let keep_new = tape.mul(new, active)?;
            let keep_old = tape.mul(old, inactive)?;
            tape.add(keep_new, keep_old)
        }
    }
}

fn gate_preactivation(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    prefix: &str,
    gate: &str,
    x: ValueId,
    recurrent_in: ValueId,
) -> Result<ValueId> {
    let (w_in, w_rec, bias) = gate_names(prefix, gate);
    let w_in = params.get(tape, &w_in)?;
    let w_rec = params.get(tape, &w_rec)?;
    let bias = params.get(tape, &bias)?;
    let from_input = tape.matmul(x, w_in)?;
    let from_state = tape.matmul(recurrent_in, w_rec)?;
    let summed = tape.add(from_input, from_state)?;
    tape.add_row(summed, bias)
}

/// One GRU step: update/reset gates, candidate state, convex combination.
fn gru_step(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    prefix: &str,
    x: ValueId,
    h: ValueId,
    ones: ValueId,
) -> Result<ValueId> {
    let z_pre = gate_preactivation(tape, params, prefix, "update", x, h)?;
    let update = tape.sigmoid(z_pre)?;
    let r_pre = gate_preactivation(tape, params, prefix, "reset", x, h)?;
    let reset = tape.sigmoid(r_pre)?;
    let gated_h = tape.mul(reset, h)?;
    let c_pre = gate_preactivation(tape, params, prefix, "candidate", x, gated_h)?;
    let candidate = tape.tanh(c_pre)?;
    // h' = (1 - z) * h + z * candidate
    let carry = tape.sub(ones, update)?;
    let kept = tape.mul(carry, h)?;
    let advanced = tape.mul(update, candidate)?;
    tape.add(kept, advanced)
}

/// One LSTM step; returns (hidden, cell).
fn lstm_step(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    prefix: &str,
    x: ValueId,
    h: ValueId,
    c: ValueId,
) -> Result<(ValueId, ValueId)> {
    let i_pre = gate_preactivation(tape, params, prefix, "input", x, h)?;
    let input_gate = tape.sigmoid(i_pre)?;
    let f_pre = gate_preactivation(tape, params, prefix, "forget", x, h)?;
    let forget_gate = tape.sigmoid(f_pre)?;
    let o_pre = gate_preactivation(tape, params, prefix, "output", x, h)?;
    let output_gate = tape.sigmoid(o_pre)?;
    let g_pre = gate_preactivation(tape, params, prefix, "cell", x, h)?;
    let proposal = tape.tanh(g_pre)?;
    let remembered = tape.mul(forget_gate, c)?;
    let written = tape.mul(input_gate, proposal)?;
    let c_next = tape.add(remembered, written)?;
    let c_squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(output_gate, c_squashed)?;
    Ok((h_next, c_next))
}

/// Run one LSTM over the steps in the given order, returning the final
/// cell state (the channel feature).
#[allow(clippy::too_many_arguments)]
fn run_lstm<'s>(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    prefix: &str,
    steps: impl Iterator<Item = &'s (ValueId, Option<(ValueId, ValueId)>)>,
    size: usize,
    units: usize,
) -> Result<ValueId> {
    let mut h = tape.leaf(Tensor::zeros(&[size, units]));
    let mut c = tape.leaf(Tensor::zeros(&[size, units]));
    for &(x, mask) in steps {
        let (h_next, c_next) = lstm_step(tape, params, prefix, x, h, c)?;
        h = masked_select(tape, mask, h_next, h)?;
        c = masked_select(tape, mask, c_next, c)?;
    }
    Ok(c)
}

/// Encode one channel's sequence to a fixed-width feature `[size, units]`:
/// the recurrent state at each sequence's final valid step.
pub(super) fn encode_channel(
    tape: &mut Tape,
    params: &mut BoundParams<'_>,
    cfg: &ModelConfig,
    channel: &str,
    sequence: ValueId,
    batch: &Batch,
    masks: &[Option<(ValueId, ValueId)>],
) -> Result<ValueId> {
    if batch.max_len == 0 {
        return Err(Error::DegenerateInput("zero-length sequence".into()));
    }
    let size = batch.size;
    let units = cfg.rnn_units;
    // Per-step inputs with their masks, in time order.
    let steps: Vec<(ValueId, Option<(ValueId, ValueId)>)> = (0..batch.max_len)
        .map(|t| -> Result<_> {
            Ok((tape.slice_rows(sequence, t * size, size)?, masks[t]))
        })
        .collect::<Result<_>>()?;

    match cfg.cell {
        CellKind::Gru => {
            let prefix = format!("enc/{channel}/gru");
            let ones = tape.leaf(Tensor::filled(&[size, units], 1.0));
            let mut h = tape.leaf(Tensor::zeros(&[size, units]));
            for &(x, mask) in &steps {
                let h_next = gru_step(tape, params, &prefix, x, h, ones)?;
                h = masked_select(tape, mask, h_next, h)?;
            }
            Ok(h)
        }
        CellKind::Lstm => {
            let prefix = format!("enc/{channel}/lstm");
            run_lstm(tape, params, &prefix, steps.iter(), size, units)
        }
        CellKind::BiLstm => {
            let forward = run_lstm(
                tape,
                params,
                &format!("enc/{channel}/fwd"),
                steps.iter(),
                size,
                units,
            )?;
            let backward = run_lstm(
                tape,
                params,
                &format!("enc/{channel}/bwd"),
                steps.iter().rev(),
                size,
                units,
            )?;
            let both = tape.concat_cols(&[forward, backward])?;
            let w = params.get(tape, &format!("enc/{channel}/proj/weight"))?;
            let b = params.get(tape, &format!("enc/{channel}/proj/bias"))?;
            let projected = tape.matmul(both, w)?;
            tape.add_row(projected, b)
        }
    }
}
