//! Implementations behind the CLI subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use metatte_core::evaluate;
use metatte_core::metrics::{BucketDimension, BucketSpec};
use metatte_core::model::{CellKind, DedModel, ModelConfig, Variant};
use metatte_core::optim::ParameterStore;
use metatte_core::rng::derive_seed;
use metatte_core::synth::generate_city;
use metatte_core::tasks::TaskSet;
use metatte_core::trainer::{scaler_map, TrainConfig, Trainer, TrainOutcome};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{parse_run_config, RunConfig};
use crate::history::write_history;
use crate::pipeline::preprocess_all;
use crate::report::{metrics_csv, metrics_table, preprocess_csv, render_table};
use crate::synthio::write_corpus;
use crate::taskset::{load_task_set, save_task_set};

/// Flag-level overrides for training (CLI beats configuration file).
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub cell: Option<String>,
    pub variant: Option<String>,
    pub beta: Option<f64>,
    pub inner_steps: Option<usize>,
    pub max_iterations: Option<u64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub eval_every: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, model: &mut ModelConfig, train: &mut TrainConfig) -> anyhow::Result<()> {
        if let Some(cell) = &self.cell {
            model.cell = CellKind::parse(cell)?;
        }
        if let Some(variant) = &self.variant {
            model.variant = Variant::parse(variant)?;
        }
        if let Some(v) = self.beta {
            train.meta_step_size = v;
        }
        if let Some(v) = self.inner_steps {
            train.inner_steps = v;
        }
        if let Some(v) = self.max_iterations {
            train.max_iterations = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.seed {
            train.seed = v;
        }
        if let Some(v) = self.eval_every {
            train.eval_every = v;
        }
        model.validate()?;
        train.validate()?;
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read configuration {}", path.display()))?;
            Ok(parse_run_config(&text)?)
        }
    }
}

fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        bail!("{what} {} does not exist", path.display());
    }
}

/// Parse `task=path` command-line pairs.
pub fn parse_inputs(raw: &[String]) -> anyhow::Result<Vec<(String, PathBuf)>> {
    raw.iter()
        .map(|s| {
            let (task, path) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("input {s:?} is not of the form task=path"))?;
            if task.is_empty() {
                bail!("input {s:?} has an empty task id");
            }
            Ok((task.to_string(), PathBuf::from(path)))
        })
        .collect()
}

pub fn cmd_preprocess(
    config: &Path,
    inputs: &[String],
    has_header: bool,
    out: &Path,
    report: &Path,
) -> anyhow::Result<()> {
    require_exists(config, "configuration file")?;
    let inputs = parse_inputs(inputs)?;
    for (_, path) in &inputs {
        require_exists(path, "input file")?;
    }
    let cfg = load_config(Some(config))?;
    let (set, counts) = preprocess_all(&cfg, &inputs, has_header)?;
    save_task_set(out, &set)?;
    std::fs::write(report, preprocess_csv(&counts))
        .with_context(|| format!("cannot write report {}", report.display()))?;
    for task in &set.tasks {
        if task.scaler.variance_floored {
            eprintln!(
                "warning: task {} has a constant feature column; its variance was floored",
                task.task_id
            );
        }
    }
    let total_kept: u64 = counts.values().map(|c| c.kept).sum();
    println!(
        "preprocessed {} task(s), kept {} trajectories -> {}",
        set.tasks.len(),
        total_kept,
        out.display()
    );
    Ok(())
}

pub fn cmd_synth(config: &Path, out_dir: &Path, seed: u64) -> anyhow::Result<()> {
    require_exists(config, "configuration file")?;
    let cfg = load_config(Some(config))?;
    if cfg.synth.is_empty() {
        bail!("the configuration has no synth.* sections");
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    for (task_id, synth) in &cfg.synth {
        let trips = generate_city(
            &synth.spec,
            synth.n_trips,
            derive_seed(seed, &format!("synth/{task_id}")),
        )?;
        write_corpus(out_dir, task_id, &trips)
            .with_context(|| format!("cannot write corpus for {task_id}"))?;
        println!("generated {} trips for {task_id}", trips.len());
    }
    Ok(())
}

/// Shared train-and-save path used by `train` and `ablate`.
fn train_to_dir(
    set: &TaskSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    checkpoint_path: &Path,
    history_path: &Path,
) -> anyhow::Result<TrainOutcome> {
    let model = DedModel::new(model_cfg)?;
    let trainer = Trainer::new(model.clone(), train_cfg.clone())?;
    let mut store = model.init_params(derive_seed(train_cfg.seed, "init"))?;
    let outcome = trainer.train(set, &mut store)?;
    save_checkpoint(
        checkpoint_path,
        model.config(),
        &train_cfg,
        &scaler_map(set),
        &outcome.best_params,
        outcome.best_iteration,
        outcome.best_val_mae,
    )?;
    write_history(history_path, &outcome.history)
        .with_context(|| format!("cannot write history {}", history_path.display()))?;
    Ok(outcome)
}

pub fn cmd_train(
    task_set: &Path,
    config: Option<&Path>,
    out_dir: &Path,
    overrides: &TrainOverrides,
) -> anyhow::Result<()> {
    require_exists(task_set, "task set")?;
    if let Some(c) = config {
        require_exists(c, "configuration file")?;
    }
    let cfg = load_config(config)?;
    let mut model_cfg = cfg.model.clone();
    let mut train_cfg = cfg.train.clone();
    overrides.apply(&mut model_cfg, &mut train_cfg)?;

    let set = load_task_set(task_set)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let outcome = train_to_dir(
        &set,
        model_cfg,
        train_cfg,
        &out_dir.join("checkpoint.mtte"),
        &out_dir.join("history.csv"),
    )?;
    match (outcome.best_val_mae, outcome.best_iteration) {
        (Some(mae), Some(iter)) => {
            println!(
                "trained {} iteration(s); best validation MAE {mae:.4} s at iteration {iter}",
                outcome.history.len()
            );
        }
        _ => println!(
            "trained {} iteration(s); no validation pool, kept final parameters",
            outcome.history.len()
        ),
    }
    println!("checkpoint -> {}", out_dir.join("checkpoint.mtte").display());
    Ok(())
}

fn store_from_checkpoint(ckpt: &Checkpoint) -> anyhow::Result<ParameterStore> {
    let mut store = ParameterStore::new();
    for (name, tensor) in &ckpt.params {
        store.insert(name.clone(), tensor.clone())?;
    }
    Ok(store)
}

/// Which bucket families `evaluate` reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketChoice {
    Time,
    Distance,
    Both,
    None,
}

impl BucketChoice {
    pub fn parse(s: &str) -> anyhow::Result<BucketChoice> {
        match s {
            "time" => Ok(BucketChoice::Time),
            "distance" => Ok(BucketChoice::Distance),
            "both" => Ok(BucketChoice::Both),
            "none" => Ok(BucketChoice::None),
            other => bail!("unknown bucket choice {other}; expected time, distance, both, or none"),
        }
    }
}

/// Bucket specs from configured thresholds when available, otherwise from
/// the pool's own value ranges.
fn bucket_specs(
    cfg: &RunConfig,
    pool: &[metatte_core::trajectory::MetaTrajectory],
    choice: BucketChoice,
) -> anyhow::Result<(Option<BucketSpec>, Option<BucketSpec>)> {
    let time_wanted = matches!(choice, BucketChoice::Time | BucketChoice::Both);
    let dist_wanted = matches!(choice, BucketChoice::Distance | BucketChoice::Both);
    let (time_range, dist_range) = if cfg.tasks.is_empty() {
        let lo_t = pool.iter().map(|m| m.label_s).fold(f64::INFINITY, f64::min);
        let hi_t = pool.iter().map(|m| m.label_s).fold(0.0f64, f64::max);
        let lo_d = pool.iter().map(|m| m.path_km).fold(f64::INFINITY, f64::min);
        let hi_d = pool.iter().map(|m| m.path_km).fold(0.0f64, f64::max);
        ((lo_t, hi_t), (lo_d, hi_d))
    } else {
        let lo_t = cfg
            .tasks
            .values()
            .map(|t| t.preprocess.thresholds.min_time_s)
            .fold(f64::INFINITY, f64::min);
        let hi_t = cfg
            .tasks
            .values()
            .map(|t| t.preprocess.thresholds.max_time_s)
            .fold(0.0f64, f64::max);
        let lo_d = cfg
            .tasks
            .values()
            .map(|t| t.preprocess.thresholds.min_dist_km)
            .fold(f64::INFINITY, f64::min);
        let hi_d = cfg
            .tasks
            .values()
            .map(|t| t.preprocess.thresholds.max_dist_km)
            .fold(0.0f64, f64::max);
        ((lo_t, hi_t), (lo_d, hi_d))
    };
    let time = if time_wanted {
        Some(BucketSpec::spanning(
            BucketDimension::TravelTime,
            time_range.0,
            time_range.1,
            120.0,
        )?)
    } else {
        None
    };
    let distance = if dist_wanted {
        Some(BucketSpec::spanning(
            BucketDimension::TravelDistance,
            dist_range.0,
            dist_range.1,
            1.0,
        )?)
    } else {
        None
    };
    Ok((time, distance))
}

pub fn cmd_evaluate(
    checkpoint: &Path,
    task_set: &Path,
    config: Option<&Path>,
    buckets: BucketChoice,
    pool_name: &str,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    require_exists(checkpoint, "checkpoint")?;
    require_exists(task_set, "task set")?;
    if let Some(c) = config {
        require_exists(c, "configuration file")?;
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let cfg = load_config(config)?;
    if config.is_some() && cfg.model != ckpt.manifest.model {
        bail!(
            "checkpoint model configuration does not match the provided configuration \
             (checkpoint embed_dim {}, configured {})",
            ckpt.manifest.model.embed_dim,
            cfg.model.embed_dim
        );
    }
    let set = load_task_set(task_set)?;
    let pool = match pool_name {
        "test" => &set.test,
        "val" => &set.val,
        other => bail!("unknown pool {other}; expected test or val"),
    };
    if pool.is_empty() {
        bail!("the {pool_name} pool of {} is empty", task_set.display());
    }

    let model = DedModel::new(ckpt.manifest.model.clone())?;
    let store = store_from_checkpoint(&ckpt)?;
    let scalers = scaler_map(&set);
    let (time_spec, dist_spec) = bucket_specs(&cfg, pool, buckets)?;
    let reports = evaluate::evaluate(
        &model,
        &store,
        pool,
        &scalers,
        ckpt.manifest.train.batch_size,
        time_spec.as_ref(),
        dist_spec.as_ref(),
    )?;

    let mut all = reports.summary.clone();
    if let Some(b) = &reports.time_buckets {
        all.extend(b.iter().cloned());
    }
    if let Some(b) = &reports.distance_buckets {
        all.extend(b.iter().cloned());
    }
    print!("{}", metrics_table(&all));
    if let Some(out) = out {
        std::fs::write(out, metrics_csv(&all))
            .with_context(|| format!("cannot write report {}", out.display()))?;
    }
    Ok(())
}

/// The ablation grid: temporal-free and attention-free variants on the
/// LSTM encoder, plus the full model on each cell.
pub const ABLATION_VARIANTS: [(&str, CellKind, Variant); 5] = [
    ("wt", CellKind::Lstm, Variant::WithoutTemporal),
    ("wa", CellKind::Lstm, Variant::WithoutAttention),
    ("lstm", CellKind::Lstm, Variant::Full),
    ("bilstm", CellKind::BiLstm, Variant::Full),
    ("gru", CellKind::Gru, Variant::Full),
];

pub fn cmd_ablate(
    task_set: &Path,
    config: Option<&Path>,
    out_dir: &Path,
    overrides: &TrainOverrides,
) -> anyhow::Result<()> {
    require_exists(task_set, "task set")?;
    if let Some(c) = config {
        require_exists(c, "configuration file")?;
    }
    let cfg = load_config(config)?;
    let set = load_task_set(task_set)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let mut base_model = cfg.model.clone();
    let mut train_cfg = cfg.train.clone();
    overrides.apply(&mut base_model, &mut train_cfg)?;

    let eval_pool = if set.test.is_empty() { &set.val } else { &set.test };
    if eval_pool.is_empty() {
        bail!("the task set has neither test nor validation trajectories");
    }

    let mut rows: Vec<[String; 5]> = vec![[
        format!("variant (seed {})", train_cfg.seed),
        "cell".into(),
        "MAE (s)".into(),
        "MAPE (%)".into(),
        "RMSE (s)".into(),
    ]];
    for (label, cell, variant) in ABLATION_VARIANTS {
        let mut model_cfg = base_model.clone();
        model_cfg.cell = cell;
        model_cfg.variant = variant;
        let ckpt_path = out_dir.join(format!("{label}.mtte"));

        // Resume from a finished variant when its checkpoint matches the
        // requested configuration.
        let reusable = load_checkpoint(&ckpt_path)
            .ok()
            .filter(|c| c.manifest.model == model_cfg && c.manifest.train == train_cfg);
        let ckpt = match reusable {
            Some(existing) => {
                println!("{label}: reusing existing checkpoint");
                existing
            }
            None => {
                println!("{label}: training");
                train_to_dir(
                    &set,
                    model_cfg.clone(),
                    train_cfg.clone(),
                    &ckpt_path,
                    &out_dir.join(format!("{label}.history.csv")),
                )?;
                load_checkpoint(&ckpt_path)?
            }
        };

        let model = DedModel::new(model_cfg)?;
        let store = store_from_checkpoint(&ckpt)?;
        let (mae, mape, rmse) = evaluate::pool_metrics(
            &model,
            &store,
            eval_pool,
            &scaler_map(&set),
            train_cfg.batch_size,
        )?;
        rows.push([
            label.to_string(),
            cell.label().to_string(),
            format!("{mae:.4}"),
            format!("{mape:.4}"),
            format!("{rmse:.4}"),
        ]);
    }

    let table = render_table(&rows);
    print!("{table}");
    let csv: String = std::iter::once(format!("seed,{}\n", train_cfg.seed))
        .chain(std::iter::once(
            "variant,cell,mae_s,mape_pct,rmse_s\n".to_string(),
        ))
        .chain(rows.iter().skip(1).map(|r| format!("{}\n", r.join(","))))
        .collect();
    std::fs::write(out_dir.join("ablation.csv"), csv)
        .with_context(|| format!("cannot write {}", out_dir.join("ablation.csv").display()))?;
    Ok(())
}

/// Map an error chain to the documented exit codes: 3 for I/O, 2 for
/// everything else.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(c) = cause.downcast_ref::<crate::container::ContainerError>() {
            if matches!(c, crate::container::ContainerError::Io { .. }) {
                return 3;
            }
        }
    }
    2
}

/// Scalers keyed by task id, exposed for the acceptance harness.
pub fn checkpoint_scalers(ckpt: &Checkpoint) -> BTreeMap<String, metatte_core::scaler::Scaler> {
    ckpt.manifest.scalers.clone()
}
