//! The travel-time estimator: per-channel embeddings, recurrent encoders,
//! feature fusion, and a residual fully-connected decoder.

mod cells;
mod decoder;
mod fusion;

pub use cells::CellKind;
pub use fusion::attention_fuse;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::optim::{xavier_init, ParameterStore};
use crate::rng::derive_seed;
use crate::scaler::Scaler;
use crate::tape::{Gradients, Tape, ValueId};
use crate::tensor::Tensor;
use crate::trajectory::MetaTrajectory;

/// Number of day-of-week categories.
pub const DAY_CARDINALITY: usize = 7;
/// Number of hour-of-day categories.
pub const HOUR_CARDINALITY: usize = 24;

/// Ablation variant of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// Temporal embeddings and attention fusion.
    Full,
    /// No day-of-week or hour embeddings (spatial channel only).
    WithoutTemporal,
    /// Temporal embeddings, but mean fusion instead of attention.
    WithoutAttention,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutTemporal => "wt",
            Variant::WithoutAttention => "wa",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "wt" => Ok(Variant::WithoutTemporal),
            "wa" => Ok(Variant::WithoutAttention),
            other => Err(Error::Config(format!(
                "unknown variant {other}; expected full, wt, or wa"
            ))),
        }
    }

    pub fn uses_temporal(&self) -> bool {
        !matches!(self, Variant::WithoutTemporal)
    }

    pub fn uses_attention(&self) -> bool {
        matches!(self, Variant::Full)
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Embedding width for every channel.
    pub embed_dim: usize,
    /// Recurrent state width; tied to `embed_dim` so fused features and the
    /// residual connection stay rectangular.
    pub rnn_units: usize,
    pub cell: CellKind,
    /// Hidden widths of the decoder chain, applied in order starting from
    /// the fused feature; the last width must equal `rnn_units`.
    pub decoder_widths: Vec<usize>,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            rnn_units: 64,
            cell: CellKind::Gru,
            decoder_widths: alloc::vec![1024, 512, 256, 64],
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.rnn_units == 0 {
            return Err(Error::Config("embed_dim and rnn_units must be positive".into()));
        }
        if self.embed_dim != self.rnn_units {
            return Err(Error::Config(format!(
                "embed_dim ({}) must equal rnn_units ({}) so channel features stack",
                self.embed_dim, self.rnn_units
            )));
        }
        if self.decoder_widths.is_empty() || self.decoder_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("decoder widths must be positive".into()));
        }
        if *self.decoder_widths.last().expect("non-empty") != self.rnn_units {
            return Err(Error::Config(format!(
                "last decoder width {} must equal the feature width {} for the residual add",
                self.decoder_widths.last().expect("non-empty"),
                self.rnn_units
            )));
        }
        Ok(())
    }
}

/// A padded, scaled mini-batch in time-major layout.
///
/// `spatial` is `[max_len * size, 2]` where position `(t, b)` lives at row
/// `t * size + b`; padding rows are zero and masked out of the recurrences.
#[derive(Debug, Clone)]
pub struct Batch {
    pub task_id: String,
    pub size: usize,
    pub max_len: usize,
    pub lengths: Vec<usize>,
    pub spatial: Tensor,
    pub day_idx: Vec<usize>,
    pub hour_idx: Vec<usize>,
    /// Raw labels in seconds.
    pub labels_s: Vec<f64>,
    /// Labels normalized by the owning task's scaler, `[size, 1]`.
    pub labels_norm: Tensor,
    pub scaler: Scaler,
}

impl Batch {
    /// Build a batch from trajectories of one task, applying the task's
    /// feature and label scaling.
    pub fn assemble(trajs: &[&MetaTrajectory], task_id: &str, scaler: &Scaler) -> Result<Batch> {
        if trajs.is_empty() {
            return Err(Error::DegenerateInput("empty batch".into()));
        }
        let lengths: Vec<usize> = trajs.iter().map(|m| m.rows.len()).collect();
        if let Some(i) = lengths.iter().position(|&l| l == 0) {
            return Err(Error::DegenerateInput(format!(
                "trajectory {} has no rows",
                trajs[i].id
            )));
        }
        let size = trajs.len();
        let max_len = *lengths.iter().max().expect("non-empty");
        let mut spatial = alloc::vec![0.0; max_len * size * 2];
        let mut day_idx = alloc::vec![0usize; max_len * size];
        let mut hour_idx = alloc::vec![0usize; max_len * size];
        for (b, m) in trajs.iter().enumerate() {
            for (t, row) in m.rows.iter().enumerate() {
                let pos = t * size + b;
                spatial[pos * 2] = (row.dlat - scaler.dlat_mean) / scaler.dlat_std;
                spatial[pos * 2 + 1] = (row.dlon - scaler.dlon_mean) / scaler.dlon_std;
                day_idx[pos] = row.day_of_week as usize;
                hour_idx[pos] = row.hour as usize;
            }
        }
        let labels_s: Vec<f64> = trajs.iter().map(|m| m.label_s).collect();
        let labels_norm = Tensor::from_vec(
            &[size, 1],
            labels_s.iter().map(|&s| scaler.normalize_label(s)).collect(),
        )?;
        Ok(Batch {
            task_id: task_id.to_string(),
            size,
            max_len,
            lengths,
            spatial: Tensor::from_vec(&[max_len * size, 2], spatial)?,
            day_idx,
            hour_idx,
            labels_s,
            labels_norm,
            scaler: *scaler,
        })
    }
}

/// Lazily binds store parameters onto a tape and maps gradients back to
/// parameter names after the backward pass.
pub struct BoundParams<'a> {
    store: &'a ParameterStore,
    ids: BTreeMap<String, (ValueId, Vec<usize>)>,
}

impl<'a> BoundParams<'a> {
    pub fn new(store: &'a ParameterStore) -> Self {
        BoundParams {
            store,
            ids: BTreeMap::new(),
        }
    }

    /// The tape leaf for a named parameter, created on first use.
    pub fn get(&mut self, tape: &mut Tape, name: &str) -> Result<ValueId> {
        if let Some((id, _)) = self.ids.get(name) {
            return Ok(*id);
        }
        let value = self.store.get(name)?.clone();
        let shape = value.shape().to_vec();
        let id = tape.leaf(value);
        self.ids.insert(name.to_string(), (id, shape));
        Ok(id)
    }

    /// Gradients for every store parameter; parameters the loss never
    /// touched get exact zeros.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.store
            .iter()
            .map(|(name, value)| {
                let g = match self.ids.get(name) {
                    Some((id, shape)) => grads.get_or_zeros(*id, shape),
                    None => Tensor::zeros(value.shape()),
                };
                (name.to_string(), g)
            })
            .collect()
    }
}

/// The estimator itself; owns no state beyond its configuration.
#[derive(Debug, Clone)]
pub struct DedModel {
    config: ModelConfig,
}

/// The three encoder channels.
const CHANNELS: [&str; 3] = ["spatial", "day", "hour"];

impl DedModel {
    pub fn new(config: ModelConfig) -> Result<DedModel> {
        config.validate()?;
        Ok(DedModel { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Create the parameter store for this configuration. Embedding tables
    /// start at zero; every other tensor is Xavier-initialized from a seed
    /// derived per parameter name, so values do not depend on insertion
    /// order.
    pub fn init_params(&self, seed: u64) -> Result<ParameterStore> {
        let cfg = &self.config;
        let mut store = ParameterStore::new();
        let xavier = |store: &mut ParameterStore, name: &str, shape: &[usize]| -> Result<()> {
            store.insert(name, xavier_init(shape, derive_seed(seed, name))?)
        };

        xavier(&mut store, "embed/spatial/weight", &[2, cfg.embed_dim])?;
        xavier(&mut store, "embed/spatial/bias", &[cfg.embed_dim])?;
        if cfg.variant.uses_temporal() {
            store.insert(
                "embed/day/table",
                Tensor::zeros(&[DAY_CARDINALITY, cfg.embed_dim]),
            )?;
            store.insert(
                "embed/hour/table",
                Tensor::zeros(&[HOUR_CARDINALITY, cfg.embed_dim]),
            )?;
        }
        for channel in self.active_channels() {
            cells::init_cell_params(&mut store, cfg, channel, seed)?;
        }
        if cfg.variant.uses_temporal() && cfg.variant.uses_attention() {
            xavier(&mut store, "fuse/score/weight", &[3, 3])?;
            xavier(&mut store, "fuse/score/bias", &[3])?;
        }
        let mut prev = cfg.rnn_units;
        for (i, &w) in cfg.decoder_widths.iter().enumerate() {
            xavier(&mut store, &format!("dec/fc{i}/weight"), &[prev, w])?;
            xavier(&mut store, &format!("dec/fc{i}/bias"), &[w])?;
            prev = w;
        }
        xavier(&mut store, "dec/estimate/weight", &[cfg.rnn_units, 1])?;
        xavier(&mut store, "dec/estimate/bias", &[1])?;
        Ok(store)
    }

    fn active_channels(&self) -> &'static [&'static str] {
        if self.config.variant.uses_temporal() {
            &CHANNELS
        } else {
            &CHANNELS[..1]
        }
    }

    /// Run the estimator over a batch, producing normalized predictions
    /// `[size, 1]` on the tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &mut BoundParams<'_>,
        batch: &Batch,
    ) -> Result<ValueId> {
        let cfg = &self.config;
        let rows = batch.max_len * batch.size;

        // Per-channel sequences at embedding width, time-major [L*B, D].
        let spatial_in = tape.leaf(batch.spatial.clone());
        let w_sp = params.get(tape, "embed/spatial/weight")?;
        let b_sp = params.get(tape, "embed/spatial/bias")?;
        let projected = tape.matmul(spatial_in, w_sp)?;
        let spatial_seq = tape.add_row(projected, b_sp)?;

        let mut sequences: Vec<ValueId> = alloc::vec![spatial_seq];
        if cfg.variant.uses_temporal() {
            let day_table = params.get(tape, "embed/day/table")?;
            sequences.push(tape.gather_rows(day_table, &batch.day_idx)?);
            let hour_table = params.get(tape, "embed/hour/table")?;
            sequences.push(tape.gather_rows(hour_table, &batch.hour_idx)?);
        }
        debug_assert_eq!(tape.value(sequences[0]).shape(), &[rows, cfg.embed_dim]);

        let masks = cells::step_masks(tape, &batch.lengths, batch.max_len, cfg.rnn_units);
        let mut features = Vec::with_capacity(sequences.len());
        for (seq, channel) in sequences.iter().zip(self.active_channels()) {
            features.push(cells::encode_channel(
                tape, params, cfg, channel, *seq, batch, &masks,
            )?);
        }

        let fused = match (cfg.variant.uses_temporal(), cfg.variant.uses_attention()) {
            (false, _) => features[0],
            (true, true) => {
                let w = params.get(tape, "fuse/score/weight")?;
                let b = params.get(tape, "fuse/score/bias")?;
                fusion::attention_fuse(tape, features[0], features[1], features[2], w, b)?.fused
            }
            (true, false) => fusion::mean_fuse(tape, features[0], features[1], features[2])?,
        };

        decoder::residual_decode(tape, params, cfg, fused)
    }

    /// Forward plus the mean-absolute-error training loss in normalized
    /// label space. Returns `(loss, predictions)`.
    pub fn training_loss(
        &self,
        tape: &mut Tape,
        params: &mut BoundParams<'_>,
        batch: &Batch,
    ) -> Result<(ValueId, ValueId)> {
        let pred = self.forward(tape, params, batch)?;
        let labels = tape.leaf(batch.labels_norm.clone());
        let loss = loss_mae(tape, pred, labels)?;
        Ok((loss, pred))
    }

    /// Convenience inference path: fresh tape, de-normalized seconds.
    pub fn predict_seconds(&self, store: &ParameterStore, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut params = BoundParams::new(store);
        let pred = self.forward(&mut tape, &mut params, batch)?;
        Ok(tape
            .value(pred)
            .data()
            .iter()
            .map(|&normalized| batch.scaler.denormalize_label(normalized))
            .collect())
    }
}

/// Mean absolute error between two tapes values of equal shape.
pub fn loss_mae(tape: &mut Tape, predictions: ValueId, labels: ValueId) -> Result<ValueId> {
    if tape.value(predictions).is_empty() {
        return Err(Error::DegenerateInput("loss over an empty batch".into()));
    }
    let diff = tape.sub(predictions, labels)?;
    let magnitude = tape.abs(diff)?;
    tape.mean_all(magnitude)
}
