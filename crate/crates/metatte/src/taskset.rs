//! Task-set files: every split trajectory plus per-task scalers, stored in
//! the shared container format. Each trajectory's rows form one payload
//! block of five values (dlat, dlon, day, hour, timestamp).

use std::collections::BTreeMap;
use std::path::Path;

use metatte_core::scaler::Scaler;
use metatte_core::tasks::{TaskSet, TteTask};
use metatte_core::trajectory::{MetaRow, MetaTrajectory};
use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container, ContainerError};

const ROW_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task_id: String,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDescriptor {
    pub id: String,
    pub task_id: String,
    pub split: Split,
    pub label_s: f64,
    pub path_km: f64,
    pub rows: usize,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSetManifest {
    pub kind: String,
    pub tasks: Vec<TaskEntry>,
    pub trajectories: Vec<TrajectoryDescriptor>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskSetError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{path} is not a task set (kind {found:?})")]
    WrongKind { path: String, found: String },
    #[error("{path} has inconsistent content: {detail}")]
    Inconsistent { path: String, detail: String },
}

pub fn save_task_set(path: &Path, set: &TaskSet) -> Result<(), TaskSetError> {
    let mut payload = Vec::new();
    let mut trajectories = Vec::new();
    let mut push = |m: &MetaTrajectory, split: Split, payload: &mut Vec<f64>| {
        trajectories.push(TrajectoryDescriptor {
            id: m.id.clone(),
            task_id: m.task_id.clone(),
            split,
            label_s: m.label_s,
            path_km: m.path_km,
            rows: m.rows.len(),
            offset: payload.len() as u64,
        });
        for row in &m.rows {
            payload.extend_from_slice(&[
                row.dlat,
                row.dlon,
                row.day_of_week as f64,
                row.hour as f64,
                row.t,
            ]);
        }
    };
    for task in &set.tasks {
        for m in &task.train {
            push(m, Split::Train, &mut payload);
        }
    }
    for m in &set.val {
        push(m, Split::Val, &mut payload);
    }
    for m in &set.test {
        push(m, Split::Test, &mut payload);
    }
    let manifest = TaskSetManifest {
        kind: "task-set".to_string(),
        tasks: set
            .tasks
            .iter()
            .map(|t| TaskEntry {
                task_id: t.task_id.clone(),
                scaler: t.scaler,
            })
            .collect(),
        trajectories,
    };
    write_container(path, &manifest, &payload)?;
    Ok(())
}

pub fn load_task_set(path: &Path) -> Result<TaskSet, TaskSetError> {
    let (manifest, payload): (TaskSetManifest, Vec<f64>) = read_container(path)?;
    let p = path.display().to_string();
    if manifest.kind != "task-set" {
        return Err(TaskSetError::WrongKind {
            path: p,
            found: manifest.kind,
        });
    }
    let mut train: BTreeMap<String, Vec<MetaTrajectory>> = manifest
        .tasks
        .iter()
        .map(|t| (t.task_id.clone(), Vec::new()))
        .collect();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for desc in &manifest.trajectories {
        let start = desc.offset as usize;
        let end = start + desc.rows * ROW_WIDTH;
        if end > payload.len() {
            return Err(TaskSetError::Inconsistent {
                path: p,
                detail: format!("trajectory {} spans beyond the payload", desc.id),
            });
        }
        let rows = payload[start..end]
            .chunks_exact(ROW_WIDTH)
            .map(|c| MetaRow {
                dlat: c[0],
                dlon: c[1],
                day_of_week: c[2] as u8,
                hour: c[3] as u8,
                t: c[4],
            })
            .collect();
        let meta = MetaTrajectory {
            id: desc.id.clone(),
            task_id: desc.task_id.clone(),
            rows,
            label_s: desc.label_s,
            path_km: desc.path_km,
        };
        match desc.split {
            Split::Train => {
                train
                    .get_mut(&desc.task_id)
                    .ok_or_else(|| TaskSetError::Inconsistent {
                        path: p.clone(),
                        detail: format!("trajectory {} names unknown task {}", desc.id, desc.task_id),
                    })?
                    .push(meta);
            }
            Split::Val => val.push(meta),
            Split::Test => test.push(meta),
        }
    }
    let tasks = manifest
        .tasks
        .iter()
        .map(|entry| TteTask {
            task_id: entry.task_id.clone(),
            train: train.remove(&entry.task_id).unwrap_or_default(),
            scaler: entry.scaler,
        })
        .collect();
    Ok(TaskSet {
        tasks,
        val,
        test,
    })
}
