//! Error metrics and bucketed reporting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Mean absolute error in label units (seconds).
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    let n = actual.len() as f64;
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| math::abs(p - a))
        .sum::<f64>()
        / n)
}

/// Mean absolute percentage error, in percent. All actual values must be
/// positive (Rule 3 guarantees this for travel times).
pub fn mape(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    if let Some(&bad) = actual.iter().find(|&&a| !(a > 0.0)) {
        return Err(Error::DegenerateInput(format!(
            "mape needs positive actual values, found {bad}"
        )));
    }
    let n = actual.len() as f64;
    Ok(100.0
        * predicted
            .iter()
            .zip(actual)
            .map(|(&p, &a)| math::abs(p - a) / a)
            .sum::<f64>()
        / n)
}

/// Root mean squared error in label units (seconds).
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    let n = actual.len() as f64;
    Ok(math::sqrt(
        predicted
            .iter()
            .zip(actual)
            .map(|(&p, &a)| (p - a) * (p - a))
            .sum::<f64>()
            / n,
    ))
}

fn check_lengths(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "prediction count {} does not match label count {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::DegenerateInput("metrics over an empty set".into()));
    }
    Ok(())
}

/// What a metrics row describes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ReportScope {
    Overall,
    Task(String),
    /// Half-open value bucket `[low, high)` over the named dimension, plus
    /// an overflow bucket when `high` is infinite.
    Bucket {
        dimension: BucketDimension,
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BucketDimension {
    TravelTime,
    TravelDistance,
}

impl BucketDimension {
    pub fn label(&self) -> &'static str {
        match self {
            BucketDimension::TravelTime => "travel_time",
            BucketDimension::TravelDistance => "travel_distance",
        }
    }
}

/// MAE/MAPE/RMSE over one scope. Metrics are `None` when the scope holds
/// no records.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub scope: ReportScope,
    pub n: usize,
    pub mae_s: Option<f64>,
    pub mape_pct: Option<f64>,
    pub rmse_s: Option<f64>,
}

impl MetricsReport {
    pub fn compute(scope: ReportScope, predicted: &[f64], actual: &[f64]) -> Result<MetricsReport> {
        if predicted.is_empty() {
            return Ok(MetricsReport {
                scope,
                n: 0,
                mae_s: None,
                mape_pct: None,
                rmse_s: None,
            });
        }
        Ok(MetricsReport {
            scope,
            n: predicted.len(),
            mae_s: Some(mae(predicted, actual)?),
            mape_pct: Some(mape(predicted, actual)?),
            rmse_s: Some(rmse(predicted, actual)?),
        })
    }
}

/// Ascending bucket edges over one dimension; buckets are half-open
/// `[e_i, e_{i+1})` with a final overflow bucket for records at or above
/// the last edge or below the first.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BucketSpec {
    pub dimension: BucketDimension,
    pub edges: Vec<f64>,
}

impl BucketSpec {
    pub fn new(dimension: BucketDimension, edges: Vec<f64>) -> Result<BucketSpec> {
        if edges.len() < 2 {
            return Err(Error::Config("bucket spec needs at least two edges".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "bucket edges must be strictly increasing: {edges:?}"
            )));
        }
        Ok(BucketSpec { dimension, edges })
    }

    /// Evenly spaced edges covering `[low, high]` with the given step; the
    /// last edge lands on or beyond `high`.
    pub fn spanning(dimension: BucketDimension, low: f64, high: f64, step: f64) -> Result<BucketSpec> {
        if !(step > 0.0) || !(high > low) {
            return Err(Error::Config(format!(
                "invalid bucket span [{low}, {high}] step {step}"
            )));
        }
        let mut edges = Vec::new();
        let mut e = low;
        while e < high {
            edges.push(e);
            e += step;
        }
        edges.push(e);
        BucketSpec::new(dimension, edges)
    }

    /// Index of the bucket containing `value`; `None` means the overflow
    /// bucket.
    pub fn bucket_of(&self, value: f64) -> Option<usize> {
        if value < self.edges[0] || value >= self.edges[self.edges.len() - 1] {
            return None;
        }
        // Buckets are few; a linear scan is fine.
        self.edges.windows(2).position(|w| value >= w[0] && value < w[1])
    }

    pub fn bucket_count(&self) -> usize {
        self.edges.len() - 1
    }
}

/// One evaluated trip: prediction and label in seconds plus the attributes
/// bucketing needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub task_id: String,
    pub predicted_s: f64,
    pub actual_s: f64,
    pub path_km: f64,
}

impl EvalRecord {
    fn bucket_value(&self, dimension: BucketDimension) -> f64 {
        match dimension {
            BucketDimension::TravelTime => self.actual_s,
            BucketDimension::TravelDistance => self.path_km,
        }
    }
}

/// Per-bucket metrics, with an overflow report for records outside all
/// edges. Every record lands in exactly one bucket.
pub fn bucketize(records: &[EvalRecord], spec: &BucketSpec) -> Result<Vec<MetricsReport>> {
    let buckets = spec.bucket_count();
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = alloc::vec![(Vec::new(), Vec::new()); buckets + 1];
    for r in records {
        let idx = spec.bucket_of(r.bucket_value(spec.dimension)).unwrap_or(buckets);
        groups[idx].0.push(r.predicted_s);
        groups[idx].1.push(r.actual_s);
    }
    let mut reports = Vec::with_capacity(buckets + 1);
    for (i, (pred, act)) in groups.iter().enumerate() {
        let (low, high) = if i < buckets {
            (spec.edges[i], spec.edges[i + 1])
        } else {
            (spec.edges[buckets], f64::INFINITY)
        };
        reports.push(MetricsReport::compute(
            ReportScope::Bucket {
                dimension: spec.dimension,
                low,
                high,
            },
            pred,
            act,
        )?);
    }
    Ok(reports)
}

/// Overall and per-task metrics over evaluated records. Task order follows
/// the sorted set of task ids.
pub fn summarize(records: &[EvalRecord]) -> Result<Vec<MetricsReport>> {
    if records.is_empty() {
        return Err(Error::DegenerateInput("no records to summarize".into()));
    }
    let pred: Vec<f64> = records.iter().map(|r| r.predicted_s).collect();
    let act: Vec<f64> = records.iter().map(|r| r.actual_s).collect();
    let mut reports = alloc::vec![MetricsReport::compute(ReportScope::Overall, &pred, &act)?];
    let mut task_ids: Vec<&str> = records.iter().map(|r| r.task_id.as_str()).collect();
    task_ids.sort_unstable();
    task_ids.dedup();
    for task in task_ids {
        let pred: Vec<f64> = records
            .iter()
            .filter(|r| r.task_id == task)
            .map(|r| r.predicted_s)
            .collect();
        let act: Vec<f64> = records
            .iter()
            .filter(|r| r.task_id == task)
            .map(|r| r.actual_s)
            .collect();
        reports.push(MetricsReport::compute(
            ReportScope::Task(task.into()),
            &pred,
            &act,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn exact_predictions_are_all_zero() {
        let y = [100.0, 250.0, 400.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mape(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn worked_two_element_example() {
        let actual = [100.0, 200.0];
        let predicted = [110.0, 180.0];
        assert!((mae(&predicted, &actual).unwrap() - 15.0).abs() < 1e-12);
        assert!((mape(&predicted, &actual).unwrap() - 10.0).abs() < 1e-12);
        // rmse = sqrt((100 + 400) / 2) = sqrt(250)
        assert!((rmse(&predicted, &actual).unwrap() - 250.0f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&predicted, &actual).unwrap() - 15.811388300841896).abs() < 1e-12);
    }

    #[test]
    fn worked_single_element_example() {
        let actual = [400.0];
        let predicted = [300.0];
        assert_eq!(mae(&predicted, &actual).unwrap(), 100.0);
        assert_eq!(mape(&predicted, &actual).unwrap(), 25.0);
        assert_eq!(rmse(&predicted, &actual).unwrap(), 100.0);
    }

    #[test]
    fn length_mismatch_and_nonpositive_labels_error() {
        assert!(matches!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            mape(&[1.0, 2.0], &[3.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(mae(&[], &[]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn metrics_match_bruteforce_on_random_arrays() {
        let mut rng = crate::rng::seeded(5, "metric-oracle");
        for _ in 0..200 {
            let n = 1 + (rng.random::<u64>() % 40) as usize;
            let actual: Vec<f64> = (0..n).map(|_| 50.0 + 900.0 * rng.random::<f64>()).collect();
            let predicted: Vec<f64> = actual
                .iter()
                .map(|a| a + 200.0 * (rng.random::<f64>() - 0.5))
                .collect();
            let (mut sae, mut sape, mut sse) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let e = (predicted[i] - actual[i]).abs();
                sae += e;
                sape += e / actual[i];
                sse += e * e;
            }
            let nf = n as f64;
            assert!((mae(&predicted, &actual).unwrap() - sae / nf).abs() < 1e-12);
            assert!((mape(&predicted, &actual).unwrap() - 100.0 * sape / nf).abs() < 1e-12);
            assert!((rmse(&predicted, &actual).unwrap() - (sse / nf).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn half_open_bucket_convention() {
        let spec = BucketSpec::new(BucketDimension::TravelTime, vec![300.0, 600.0, 900.0]).unwrap();
        assert_eq!(spec.bucket_of(300.0), Some(0));
        assert_eq!(spec.bucket_of(599.999), Some(0));
        assert_eq!(spec.bucket_of(600.0), Some(1));
        assert_eq!(spec.bucket_of(899.999), Some(1));
        assert_eq!(spec.bucket_of(900.0), None);
        assert_eq!(spec.bucket_of(100.0), None);
    }

    fn record(task: &str, pred: f64, act: f64, km: f64) -> EvalRecord {
        EvalRecord {
            task_id: task.to_string(),
            predicted_s: pred,
            actual_s: act,
            path_km: km,
        }
    }

    #[test]
    fn buckets_partition_records() {
        let spec = BucketSpec::new(BucketDimension::TravelTime, vec![300.0, 600.0, 900.0]).unwrap();
        let records = vec![
            record("a", 310.0, 300.0, 2.0),
            record("a", 620.0, 600.0, 3.0),
            record("b", 580.0, 599.0, 3.0),
            record("b", 930.0, 950.0, 9.0),
            record("b", 100.0, 120.0, 1.0),
        ];
        let reports = bucketize(&records, &spec).unwrap();
        assert_eq!(reports.len(), 3); // two buckets + overflow
        let total: usize = reports.iter().map(|r| r.n).sum();
        assert_eq!(total, records.len());
        assert_eq!(reports[0].n, 2);
        assert_eq!(reports[1].n, 1);
        assert_eq!(reports[2].n, 2);
    }

    #[test]
    fn empty_bucket_reports_n_zero_without_metrics() {
        let spec = BucketSpec::new(BucketDimension::TravelTime, vec![0.0, 10.0, 20.0]).unwrap();
        let records = vec![record("a", 5.0, 5.0, 1.0)];
        let reports = bucketize(&records, &spec).unwrap();
        assert_eq!(reports[1].n, 0);
        assert!(reports[1].mae_s.is_none());
    }

    #[test]
    fn bucket_maes_recombine_to_overall() {
        let mut rng = crate::rng::seeded(6, "bucket-recombine");
        let records: Vec<EvalRecord> = (0..500)
            .map(|i| {
                let act = 100.0 + 900.0 * rng.random::<f64>();
                record(
                    if i % 2 == 0 { "a" } else { "b" },
                    act + 100.0 * (rng.random::<f64>() - 0.5),
                    act,
                    1.0 + 9.0 * rng.random::<f64>(),
                )
            })
            .collect();
        let spec =
            BucketSpec::spanning(BucketDimension::TravelTime, 100.0, 1000.0, 120.0).unwrap();
        let reports = bucketize(&records, &spec).unwrap();
        let weighted: f64 = reports
            .iter()
            .filter_map(|r| r.mae_s.map(|m| m * r.n as f64))
            .sum();
        let pred: Vec<f64> = records.iter().map(|r| r.predicted_s).collect();
        let act: Vec<f64> = records.iter().map(|r| r.actual_s).collect();
        let overall = mae(&pred, &act).unwrap();
        assert!((weighted / records.len() as f64 - overall).abs() < 1e-12);
    }

    #[test]
    fn summarize_reports_overall_then_tasks() {
        let records = vec![
            record("chengdu", 110.0, 100.0, 2.0),
            record("porto", 180.0, 200.0, 3.0),
        ];
        let reports = summarize(&records).unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(reports[0].scope, ReportScope::Overall);
        assert_eq!(reports[1].scope, ReportScope::Task("chengdu".to_string()));
        assert_eq!(reports[2].scope, ReportScope::Task("porto".to_string()));
        assert!((reports[0].mae_s.unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_records_leave_metrics_unchanged() {
        let records = vec![
            record("a", 110.0, 100.0, 2.0),
            record("a", 180.0, 200.0, 3.0),
        ];
        let mut doubled = records.clone();
        doubled.extend(records.clone());
        let r1 = summarize(&records).unwrap();
        let r2 = summarize(&doubled).unwrap();
        assert_eq!(r1[0].mae_s, r2[0].mae_s);
        assert_eq!(r1[0].mape_pct, r2[0].mape_pct);
        assert_eq!(r1[0].rmse_s, r2[0].rmse_s);
    }

    proptest! {
        // Power-mean inequality, with equality only when all absolute
        // errors coincide.
        #[test]
        fn mae_never_exceeds_rmse(
            data in proptest::collection::vec((1.0..1000.0f64, -200.0..200.0f64), 1..50)
        ) {
            let actual: Vec<f64> = data.iter().map(|(a, _)| *a).collect();
            let predicted: Vec<f64> = data.iter().map(|(a, e)| a + e).collect();
            let m = mae(&predicted, &actual).unwrap();
            let r = rmse(&predicted, &actual).unwrap();
            prop_assert!(m <= r + 1e-12);
        }

        #[test]
        fn metrics_are_permutation_invariant(
            data in proptest::collection::vec((1.0..1000.0f64, -200.0..200.0f64), 2..30),
            seed in 0u64..1000,
        ) {
            let actual: Vec<f64> = data.iter().map(|(a, _)| *a).collect();
            let predicted: Vec<f64> = data.iter().map(|(a, e)| a + e).collect();
            let mut idx: Vec<usize> = (0..data.len()).collect();
            // Deterministic shuffle.
            let mut rng = crate::rng::seeded(seed, "perm");
            for i in (1..idx.len()).rev() {
                let j = (rng.random::<u64>() % (i as u64 + 1)) as usize;
                idx.swap(i, j);
            }
            let pa: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
            let aa: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
            prop_assert!((mae(&predicted, &actual).unwrap() - mae(&pa, &aa).unwrap()).abs() < 1e-9);
            prop_assert!((rmse(&predicted, &actual).unwrap() - rmse(&pa, &aa).unwrap()).abs() < 1e-9);
        }
    }
}
