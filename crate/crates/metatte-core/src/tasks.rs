//! Date-based splitting and assembly of per-city estimation tasks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scaler::Scaler;
use crate::time::{local_time, CivilDate};
use crate::trajectory::MetaTrajectory;

/// An inclusive range of local calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DateRange {
    pub start: CivilDate,
    pub end: CivilDate,
}

impl DateRange {
    pub fn new(start: CivilDate, end: CivilDate) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!(
                "date range start {start} is after end {end}"
            )));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, date: CivilDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Ordered, disjoint train/validation/test date ranges for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitRanges {
    pub train: DateRange,
    pub val: DateRange,
    pub test: DateRange,
}

impl SplitRanges {
    pub fn new(train: DateRange, val: DateRange, test: DateRange) -> Result<Self> {
        let ranges = [train, val, test];
        for i in 0..3 {
            for j in i + 1..3 {
                let disjoint = ranges[i].end < ranges[j].start || ranges[j].end < ranges[i].start;
                if !disjoint {
                    return Err(Error::Config(format!(
                        "split date ranges overlap: [{}, {}] and [{}, {}]",
                        ranges[i].start, ranges[i].end, ranges[j].start, ranges[j].end
                    )));
                }
            }
        }
        if !(train.end < val.start && val.end < test.start) {
            return Err(Error::Config(
                "split date ranges must be ordered train < val < test".into(),
            ));
        }
        Ok(SplitRanges { train, val, test })
    }
}

/// Outcome of splitting one task's trajectories by date.
#[derive(Debug, Clone, Default)]
pub struct SplitOutcome {
    pub train: Vec<MetaTrajectory>,
    pub val: Vec<MetaTrajectory>,
    pub test: Vec<MetaTrajectory>,
    /// Trajectories dated outside all three ranges.
    pub discarded: u64,
}

/// Assign each trajectory to a split by the local date of its first
/// timestamp; trajectories outside all ranges are discarded and counted.
pub fn split_by_date(
    trajs: Vec<MetaTrajectory>,
    ranges: &SplitRanges,
    utc_offset_seconds: i64,
) -> SplitOutcome {
    let mut out = SplitOutcome::default();
    for traj in trajs {
        let first_t = traj.rows.first().map(|r| r.t).unwrap_or(0.0);
        let date = local_time(first_t, utc_offset_seconds).date;
        if ranges.train.contains(date) {
            out.train.push(traj);
        } else if ranges.val.contains(date) {
            out.val.push(traj);
        } else if ranges.test.contains(date) {
            out.test.push(traj);
        } else {
            out.discarded += 1;
        }
    }
    out
}

/// One city task: its private training pool and fitted scaler.
#[derive(Debug, Clone)]
pub struct TteTask {
    pub task_id: String,
    pub train: Vec<MetaTrajectory>,
    pub scaler: Scaler,
}

/// All tasks plus the validation and test pools shared across them.
/// Pool entries carry their originating task id so metrics can be reported
/// per task and overall.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub tasks: Vec<TteTask>,
    pub val: Vec<MetaTrajectory>,
    pub test: Vec<MetaTrajectory>,
}

impl TaskSet {
    pub fn task(&self, task_id: &str) -> Result<&TteTask> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| Error::Consistency(format!("unknown task id {task_id}")))
    }
}

/// Assemble tasks from per-task split outcomes. Fails if any task has an
/// empty training split; fits each task's scaler on its own training data.
pub fn build_tasks(splits: Vec<(String, SplitOutcome)>) -> Result<TaskSet> {
    if splits.is_empty() {
        return Err(Error::Config("no tasks to build".into()));
    }
    let mut tasks = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut splits = splits;
    splits.sort_by(|a, b| a.0.cmp(&b.0));
    for (task_id, outcome) in splits {
        if outcome.train.is_empty() {
            return Err(Error::Config(format!(
                "task {task_id} has an empty training split"
            )));
        }
        let scaler = Scaler::fit(&outcome.train)?;
        val.extend(outcome.val);
        test.extend(outcome.test);
        tasks.push(TteTask {
            task_id,
            train: outcome.train,
            scaler,
        });
    }
    Ok(TaskSet { tasks, val, test })
}
