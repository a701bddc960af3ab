//! End-to-end preprocessing: raw point files in, task set plus report out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use metatte_core::tasks::{build_tasks, split_by_date, TaskSet};
use metatte_core::trajectory::{
    apply_rules, parse_trajectories, to_meta_trajectory, RuleDecision,
};

use crate::config::RunConfig;
use crate::report::PreprocessCounts;

/// Read one task's point file and produce its split trajectories plus
/// bookkeeping counts.
pub fn preprocess_file(
    cfg: &RunConfig,
    task_id: &str,
    path: &Path,
    has_header: bool,
) -> anyhow::Result<(metatte_core::tasks::SplitOutcome, PreprocessCounts)> {
    let task_cfg = cfg
        .tasks
        .get(task_id)
        .with_context(|| format!("no task.{task_id}.* entries in the configuration"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    if has_header {
        lines.next();
    }
    let parsed = parse_trajectories(lines, task_id);

    let mut counts = PreprocessCounts {
        parsed: parsed.trajectories.len() as u64,
        skipped_rows: parsed.skipped_rows,
        ..Default::default()
    };
    let preprocess = cfg.preprocess_config();
    let mut kept = Vec::new();
    for traj in &parsed.trajectories {
        match apply_rules(traj, &preprocess)? {
            RuleDecision::Keep => {
                counts.kept += 1;
                kept.push(to_meta_trajectory(
                    traj,
                    task_cfg.preprocess.utc_offset_seconds,
                )?);
            }
            RuleDecision::Drop(reason) => counts.record_drop(reason),
        }
    }
    let outcome = split_by_date(
        kept,
        &task_cfg.splits,
        task_cfg.preprocess.utc_offset_seconds,
    );
    counts.discarded_by_date = outcome.discarded;
    counts.train = outcome.train.len() as u64;
    counts.val = outcome.val.len() as u64;
    counts.test = outcome.test.len() as u64;
    Ok((outcome, counts))
}

/// Preprocess every (task, file) pair into a task set.
pub fn preprocess_all(
    cfg: &RunConfig,
    inputs: &[(String, PathBuf)],
    has_header: bool,
) -> anyhow::Result<(TaskSet, BTreeMap<String, PreprocessCounts>)> {
    if inputs.is_empty() {
        bail!("no input files given");
    }
    let mut splits = Vec::new();
    let mut reports = BTreeMap::new();
    for (task_id, path) in inputs {
        let (outcome, counts) = preprocess_file(cfg, task_id, path, has_header)?;
        // A file with no trajectories at all produces a zero-count report
        // row rather than a failed run; a file whose data merely misses the
        // training dates is still an error from build_tasks below.
        if counts.parsed > 0 {
            splits.push((task_id.clone(), outcome));
        }
        reports.insert(task_id.clone(), counts);
    }
    let set = if splits.is_empty() {
        TaskSet {
            tasks: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        }
    } else {
        build_tasks(splits)?
    };
    Ok((set, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_run_config;
    use tempfile::tempdir;

    const CONFIG: &str = "\
task.city.min_time = 100
task.city.max_time = 2000
task.city.min_dist = 0.5
task.city.max_dist = 50
task.city.utc_offset_hours = 0
task.city.train_start = 2014-08-03
task.city.train_end = 2014-08-16
task.city.val_start = 2014-08-21
task.city.val_end = 2014-08-22
task.city.test_start = 2014-08-24
task.city.test_end = 2014-08-29
";

    /// Points one minute apart heading north; starts at the given date.
    fn trip_rows(id: &str, day: u8, n: usize) -> String {
        let base = metatte_core::time::CivilDate::new(2014, 8, day).to_epoch_days() as f64
            * 86_400.0
            + 36_000.0;
        (0..n)
            .map(|i| {
                format!(
                    "{id},{},104.0,{}\n",
                    30.0 + 0.003 * i as f64,
                    base + 60.0 * i as f64
                )
            })
            .collect()
    }

    #[test]
    fn file_to_task_set() {
        let dir = tempdir().unwrap();
        let file = dir.path().join("city.csv");
        let mut text = String::new();
        text.push_str(&trip_rows("train1", 5, 6));
        text.push_str(&trip_rows("train2", 10, 8));
        text.push_str(&trip_rows("valid1", 21, 6));
        text.push_str(&trip_rows("test1", 25, 6));
        text.push_str(&trip_rows("lost1", 19, 6)); // gap date
        text.push_str("badrow,not-a-number,104.0,0\n");
        // Rule-2 violation: one repeated coordinate.
        let base = metatte_core::time::CivilDate::new(2014, 8, 6).to_epoch_days() as f64 * 86_400.0;
        for i in 0..4 {
            text.push_str(&format!("still1,30.0,104.0,{}\n", base + 60.0 * i as f64));
        }
        std::fs::write(&file, text).unwrap();

        let cfg = parse_run_config(CONFIG).unwrap();
        let (set, reports) =
            preprocess_all(&cfg, &[("city".to_string(), file)], false).unwrap();
        let counts = &reports["city"];
        assert_eq!(counts.parsed, 6);
        assert_eq!(counts.skipped_rows, 1);
        assert_eq!(counts.kept, 5);
        assert_eq!(counts.dropped["rule2-distinct-points"], 1);
        assert_eq!(counts.discarded_by_date, 1);
        assert_eq!(counts.train, 2);
        assert_eq!(counts.val, 1);
        assert_eq!(counts.test, 1);
        assert_eq!(set.tasks.len(), 1);
        assert_eq!(set.tasks[0].train.len(), 2);
        assert_eq!(set.val.len(), 1);
        assert_eq!(set.test.len(), 1);
        // Partition property: everything parsed is accounted for.
        let dropped: u64 = counts.dropped.values().sum();
        assert_eq!(
            counts.parsed,
            counts.train + counts.val + counts.test + counts.discarded_by_date + dropped
        );

        // Re-filtering the pipeline output finds zero violations.
        let thresholds = &cfg.tasks["city"].preprocess.thresholds;
        let all = set.tasks[0]
            .train
            .iter()
            .chain(set.val.iter())
            .chain(set.test.iter());
        for m in all {
            assert!(m.label_s >= thresholds.min_time_s && m.label_s <= thresholds.max_time_s);
            assert!(m.path_km >= thresholds.min_dist_km && m.path_km <= thresholds.max_dist_km);
        }
    }
}
