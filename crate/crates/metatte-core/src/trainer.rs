//! First-order meta-training: repeatedly adapt to one sampled task for a
//! few optimizer steps, then move the shared initialization part-way
//! toward the adapted parameters under a linearly decaying step size.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::evaluate::pool_metrics;
use crate::model::{Batch, BoundParams, DedModel};
use crate::optim::{AdamParams, ParamSnapshot, ParameterStore};
use crate::rng::{seeded, ChaCha8Rng};
use crate::scaler::Scaler;
use crate::tape::Tape;
use crate::tasks::{TaskSet, TteTask};

/// Outer-loop training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Inner optimizer steps per meta-iteration.
    pub inner_steps: usize,
    pub batch_size: usize,
    /// Meta step size: the fraction of the adaptation delta applied at
    /// iteration 1; it decays linearly to zero over the run.
    pub meta_step_size: f64,
    /// Iteration bound; the loop runs for iterations 1..max_iterations.
    pub max_iterations: u64,
    pub eval_every: u64,
    pub seed: u64,
    /// Inner-loop Adam learning rate.
    pub inner_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            inner_steps: 10,
            batch_size: 32,
            meta_step_size: 0.1,
            max_iterations: 7000,
            eval_every: 100,
            seed: 42,
            inner_lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps < 1 {
            return Err(Error::Config("inner step count must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.meta_step_size > 0.0) {
            return Err(Error::Config("meta step size must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("iteration bound must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(self.inner_lr > 0.0) {
            return Err(Error::Config("inner learning rate must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.inner_lr,
            ..AdamParams::default()
        }
    }
}

/// One line of the training history; validation columns are filled on
/// evaluation iterations only. An aborted iteration records a NaN loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: u64,
    pub task_id: String,
    pub train_loss: f64,
    pub val_mae_s: Option<f64>,
    pub val_mape_pct: Option<f64>,
    pub val_rmse_s: Option<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last meta-iteration.
    pub final_params: ParamSnapshot,
    /// Parameters at the best validation MAE (final parameters when no
    /// validation pool exists).
    pub best_params: ParamSnapshot,
    pub best_val_mae: Option<f64>,
    pub best_iteration: Option<u64>,
    pub history: Vec<HistoryRow>,
}

/// Uniformly sample one task.
pub fn sample_task<'a>(tasks: &'a [TteTask], rng: &mut ChaCha8Rng) -> Result<&'a TteTask> {
    if tasks.is_empty() {
        return Err(Error::Config("cannot sample from an empty task list".into()));
    }
    Ok(&tasks[rng.random_range(0..tasks.len())])
}

/// Sample a batch of trajectories uniformly with replacement.
pub fn sample_batch(task: &TteTask, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
    if task.train.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "task {} has no training data",
            task.task_id
        )));
    }
    let members: Vec<&crate::trajectory::MetaTrajectory> = (0..batch_size)
        .map(|_| &task.train[rng.random_range(0..task.train.len())])
        .collect();
    Batch::assemble(&members, &task.task_id, &task.scaler)
}

/// The scheduled interpolation factor at iteration `r`.
pub fn meta_step_factor(cfg: &TrainConfig, iteration: u64) -> f64 {
    cfg.meta_step_size * (1.0 - iteration as f64 / cfg.max_iterations as f64)
}

/// Move the shared initialization toward the adapted parameters:
/// `final = start + factor * (adapted - start)` with the linearly
/// decaying `factor`.
pub fn meta_update(
    start: &ParamSnapshot,
    adapted: &ParamSnapshot,
    iteration: u64,
    cfg: &TrainConfig,
) -> Result<ParamSnapshot> {
    if !(1..cfg.max_iterations).contains(&iteration) {
        return Err(Error::Config(format!(
            "iteration {iteration} outside [1, {})",
            cfg.max_iterations
        )));
    }
    if start.values.len() != adapted.values.len() {
        return Err(Error::Consistency(format!(
            "snapshot sizes differ: {} vs {}",
            start.values.len(),
            adapted.values.len()
        )));
    }
    let factor = meta_step_factor(cfg, iteration);
    let mut values = BTreeMap::new();
    for (name, before) in &start.values {
        let after = adapted
            .values
            .get(name)
            .ok_or_else(|| Error::Consistency(format!("parameter {name} missing after adaptation")))?;
        if !before.same_shape(after) {
            return Err(Error::Consistency(format!(
                "parameter {name} changed shape: {:?} vs {:?}",
                before.shape(),
                after.shape()
            )));
        }
        let mut blended = before.clone();
        for (b, (&s, &a)) in blended
            .data_mut()
            .iter_mut()
            .zip(before.data().iter().zip(after.data()))
        {
            *b = s + factor * (a - s);
        }
        values.insert(name.clone(), blended);
    }
    Ok(ParamSnapshot { values })
}

/// Runs the outer loop for one model configuration.
pub struct Trainer {
    model: DedModel,
    cfg: TrainConfig,
}

impl Trainer {
    pub fn new(model: DedModel, cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        Ok(Trainer { model, cfg })
    }

    pub fn model(&self) -> &DedModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Adapt parameters to one task for `steps` optimizer steps with a
    /// fresh Adam state; returns the per-step losses (normalized space).
    ///
    /// This is both the meta-training inner loop and the post-training
    /// adaptation procedure.
    pub fn adapt(
        &self,
        store: &mut ParameterStore,
        task: &TteTask,
        steps: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        store.reset_moments();
        let hp = self.cfg.adam();
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch = sample_batch(task, self.cfg.batch_size, rng)?;
            let mut tape = Tape::new();
            let mut params = BoundParams::new(store);
            let (loss, _) = self.model.training_loss(&mut tape, &mut params, &batch)?;
            let loss_value = tape.value(loss).item()?;
            let grads = tape.backward(loss)?;
            store.adam_step(&params.gradients(&grads), &hp)?;
            losses.push(loss_value);
        }
        Ok(losses)
    }

    /// Overall validation metrics under the current parameters.
    pub fn validate(&self, store: &ParameterStore, tasks: &TaskSet) -> Result<(f64, f64, f64)> {
        let scalers = scaler_map(tasks);
        pool_metrics(&self.model, store, &tasks.val, &scalers, self.cfg.batch_size)
    }

    /// Full meta-training run over the task set.
    pub fn train(&self, tasks: &TaskSet, store: &mut ParameterStore) -> Result<TrainOutcome> {
        if tasks.tasks.is_empty() {
            return Err(Error::Config("no tasks to train on".into()));
        }
        let mut task_rng = seeded(self.cfg.seed, "task-sampler");
        let mut batch_rng = seeded(self.cfg.seed, "batch-sampler");
        let mut history = Vec::new();
        let mut best: Option<(f64, u64, ParamSnapshot)> = None;
        let mut consecutive_failures = 0u32;

        for iteration in 1..self.cfg.max_iterations {
            let task = sample_task(&tasks.tasks, &mut task_rng)?;
            let start = store.snapshot();
            let adapted = self.adapt(store, task, self.cfg.inner_steps, &mut batch_rng);
            let train_loss = match adapted {
                Ok(losses) => {
                    consecutive_failures = 0;
                    losses.iter().sum::<f64>() / losses.len() as f64
                }
                Err(Error::Numeric(_)) => {
                    // One bad batch must not kill the run: restore the
                    // pre-iteration parameters and move on.
                    consecutive_failures += 1;
                    if consecutive_failures > 10 {
                        return Err(Error::Numeric(format!(
                            "aborting: {consecutive_failures} consecutive failed iterations"
                        )));
                    }
                    store.load(&start)?;
                    history.push(HistoryRow {
                        iteration,
                        task_id: task.task_id.clone(),
                        train_loss: f64::NAN,
                        val_mae_s: None,
                        val_mape_pct: None,
                        val_rmse_s: None,
                    });
                    continue;
                }
                Err(other) => return Err(other),
            };
            let adapted = store.snapshot();
            let blended = meta_update(&start, &adapted, iteration, &self.cfg)?;
            store.load(&blended)?;

            let eval_now = !tasks.val.is_empty()
                && (iteration % self.cfg.eval_every == 0
                    || iteration + 1 == self.cfg.max_iterations);
            let mut row = HistoryRow {
                iteration,
                task_id: task.task_id.clone(),
                train_loss,
                val_mae_s: None,
                val_mape_pct: None,
                val_rmse_s: None,
            };
            if eval_now {
                let (mae, mape, rmse) = self.validate(store, tasks)?;
                row.val_mae_s = Some(mae);
                row.val_mape_pct = Some(mape);
                row.val_rmse_s = Some(rmse);
                let better = best.as_ref().map(|(b, _, _)| mae < *b).unwrap_or(true);
                if better {
                    best = Some((mae, iteration, store.snapshot()));
                }
            }
            history.push(row);
        }

        let final_params = store.snapshot();
        let (best_val_mae, best_iteration, best_params) = match best {
            Some((mae, iter, snap)) => (Some(mae), Some(iter), snap),
            None => (None, None, final_params.clone()),
        };
        Ok(TrainOutcome {
            final_params,
            best_params,
            best_val_mae,
            best_iteration,
            history,
        })
    }
}

/// Per-task scalers keyed by task id.
pub fn scaler_map(tasks: &TaskSet) -> BTreeMap<String, Scaler> {
    tasks
        .tasks
        .iter()
        .map(|t| (t.task_id.clone(), t.scaler))
        .collect()
}
