//! Text reports: preprocessing counts and metric tables.

use std::collections::BTreeMap;

use metatte_core::metrics::{MetricsReport, ReportScope};
use metatte_core::trajectory::DropReason;

/// Per-task preprocessing outcome counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreprocessCounts {
    pub parsed: u64,
    pub skipped_rows: u64,
    pub kept: u64,
    pub dropped: BTreeMap<&'static str, u64>,
    pub discarded_by_date: u64,
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl PreprocessCounts {
    pub fn record_drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason.label()).or_insert(0) += 1;
    }
}

pub const PREPROCESS_HEADER: &str = "task_id,parsed,skipped_rows,kept,rule1-time,rule1-distance,rule2-distinct-points,rule3-duration,discarded_by_date,train,val,test";

/// Comma-delimited preprocessing report, one row per task.
pub fn preprocess_csv(rows: &BTreeMap<String, PreprocessCounts>) -> String {
    let mut out = String::from(PREPROCESS_HEADER);
    out.push('\n');
    for (task, c) in rows {
        let drop = |label: &str| c.dropped.get(label).copied().unwrap_or(0);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            task,
            c.parsed,
            c.skipped_rows,
            c.kept,
            drop("rule1-time"),
            drop("rule1-distance"),
            drop("rule2-distinct-points"),
            drop("rule3-duration"),
            c.discarded_by_date,
            c.train,
            c.val,
            c.test,
        ));
    }
    out
}

fn scope_label(scope: &ReportScope) -> String {
    match scope {
        ReportScope::Overall => "overall".to_string(),
        ReportScope::Task(id) => format!("task:{id}"),
        ReportScope::Bucket { dimension, low, high } => {
            if high.is_infinite() {
                format!("{}:[{low},inf)", dimension.label())
            } else {
                format!("{}:[{low},{high})", dimension.label())
            }
        }
    }
}

fn metric_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")) .unwrap_or_default()
}

pub const METRICS_HEADER: &str = "scope,n,mae_s,mape_pct,rmse_s";

/// Comma-delimited metric rows.
pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            scope_label(&r.scope),
            r.n,
            metric_cell(r.mae_s),
            metric_cell(r.mape_pct),
            metric_cell(r.rmse_s),
        ));
    }
    out
}

/// Aligned human-readable metric table.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "scope".into(),
        "n".into(),
        "MAE (s)".into(),
        "MAPE (%)".into(),
        "RMSE (s)".into(),
    ]];
    for r in reports {
        rows.push([
            scope_label(&r.scope),
            r.n.to_string(),
            metric_cell(r.mae_s),
            metric_cell(r.mape_pct),
            metric_cell(r.rmse_s),
        ]);
    }
    render_table(&rows)
}

/// Generic aligned table renderer (first row is the header).
pub fn render_table<const W: usize>(rows: &[[String; W]]) -> String {
    let mut widths = [0usize; W];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (W - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use metatte_core::metrics::BucketDimension;

    #[test]
    fn preprocess_rows_cover_all_rules() {
        let mut counts = PreprocessCounts {
            parsed: 100,
            skipped_rows: 3,
            kept: 80,
            ..Default::default()
        };
        counts.record_drop(DropReason::TimeOutOfRange);
        counts.record_drop(DropReason::TimeOutOfRange);
        counts.record_drop(DropReason::FewDistinctPoints);
        let mut map = BTreeMap::new();
        map.insert("chengdu".to_string(), counts);
        let text = preprocess_csv(&map);
        assert!(text.contains("chengdu,100,3,80,2,0,1,0,0,0,0,0"));
    }

    #[test]
    fn metric_tables_label_scopes() {
        let reports = vec![
            MetricsReport {
                scope: ReportScope::Overall,
                n: 10,
                mae_s: Some(120.5),
                mape_pct: Some(14.25),
                rmse_s: Some(150.0),
            },
            MetricsReport {
                scope: ReportScope::Bucket {
                    dimension: BucketDimension::TravelTime,
                    low: 300.0,
                    high: f64::INFINITY,
                },
                n: 0,
                mae_s: None,
                mape_pct: None,
                rmse_s: None,
            },
        ];
        let csv = metrics_csv(&reports);
        assert!(csv.contains("overall,10,120.5000,14.2500,150.0000"));
        assert!(csv.contains("travel_time:[300,inf),0,,,"));
        let table = metrics_table(&reports);
        assert!(table.contains("MAE (s)"));
        assert!(table.lines().count() >= 4);
    }
}
