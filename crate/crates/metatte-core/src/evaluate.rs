//! Model evaluation over shared trajectory pools.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::{bucketize, summarize, BucketSpec, EvalRecord, MetricsReport};
use crate::model::{Batch, DedModel};
use crate::optim::ParameterStore;
use crate::scaler::Scaler;
use crate::trajectory::MetaTrajectory;

/// All reports from one evaluation pass.
#[derive(Debug, Clone)]
pub struct EvaluationReports {
    /// Overall metrics followed by one row per task.
    pub summary: Vec<MetricsReport>,
    pub time_buckets: Option<Vec<MetricsReport>>,
    pub distance_buckets: Option<Vec<MetricsReport>>,
}

/// Predict every pool trajectory with its own task's scaler, batching
/// per task in pool order. Deterministic: grouping is by sorted task id.
pub fn predict_pool(
    model: &DedModel,
    store: &ParameterStore,
    pool: &[MetaTrajectory],
    scalers: &BTreeMap<String, Scaler>,
    batch_size: usize,
) -> Result<Vec<EvalRecord>> {
    if pool.is_empty() {
        return Err(Error::DegenerateInput("empty evaluation pool".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut task_ids: Vec<&str> = pool.iter().map(|m| m.task_id.as_str()).collect();
    task_ids.sort_unstable();
    task_ids.dedup();

    let mut records = Vec::with_capacity(pool.len());
    for task_id in task_ids {
        let scaler = scalers.get(task_id).ok_or_else(|| {
            Error::Consistency(format!("no scaler for task {task_id} in the evaluation pool"))
        })?;
        let members: Vec<&MetaTrajectory> =
            pool.iter().filter(|m| m.task_id == task_id).collect();
        for chunk in members.chunks(batch_size) {
            let batch = Batch::assemble(chunk, task_id, scaler)?;
            let predictions = model.predict_seconds(store, &batch)?;
            for (m, predicted_s) in chunk.iter().zip(predictions) {
                records.push(EvalRecord {
                    task_id: m.task_id.clone(),
                    predicted_s,
                    actual_s: m.label_s,
                    path_km: m.path_km,
                });
            }
        }
    }
    Ok(records)
}

/// Overall, per-task, and optionally bucketed reports for a pool.
pub fn evaluate(
    model: &DedModel,
    store: &ParameterStore,
    pool: &[MetaTrajectory],
    scalers: &BTreeMap<String, Scaler>,
    batch_size: usize,
    time_buckets: Option<&BucketSpec>,
    distance_buckets: Option<&BucketSpec>,
) -> Result<EvaluationReports> {
    let records = predict_pool(model, store, pool, scalers, batch_size)?;
    Ok(EvaluationReports {
        summary: summarize(&records)?,
        time_buckets: time_buckets.map(|spec| bucketize(&records, spec)).transpose()?,
        distance_buckets: distance_buckets
            .map(|spec| bucketize(&records, spec))
            .transpose()?,
    })
}

/// Overall (mae, mape, rmse) for a pool, in seconds/percent/seconds.
pub fn pool_metrics(
    model: &DedModel,
    store: &ParameterStore,
    pool: &[MetaTrajectory],
    scalers: &BTreeMap<String, Scaler>,
    batch_size: usize,
) -> Result<(f64, f64, f64)> {
    let records = predict_pool(model, store, pool, scalers, batch_size)?;
    let predicted: Vec<f64> = records.iter().map(|r| r.predicted_s).collect();
    let actual: Vec<f64> = records.iter().map(|r| r.actual_s).collect();
    Ok((
        crate::metrics::mae(&predicted, &actual)?,
        crate::metrics::mape(&predicted, &actual)?,
        crate::metrics::rmse(&predicted, &actual)?,
    ))
}
