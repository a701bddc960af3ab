//! GPS trajectory types, record parsing, preprocessing rules, and the
//! per-segment delta representation the estimator consumes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geo;
use crate::time;

/// One GPS fix: WGS-84 degrees plus UNIX seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub lat: f64,
    pub lon: f64,
    pub t: f64,
}

impl GpsPoint {
    pub fn new(lat: f64, lon: f64, t: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(Error::Config(format!("latitude {lat} out of [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(Error::Config(format!("longitude {lon} out of [-180, 180]")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("timestamp {t} must be >= 0")));
        }
        Ok(GpsPoint { lat, lon, t })
    }
}

/// An ordered trip recorded in one city task.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub id: String,
    pub task_id: String,
    pub points: Vec<GpsPoint>,
}

impl RawTrajectory {
    /// Points must be non-empty and non-decreasing in time.
    pub fn new(
        id: impl Into<String>,
        task_id: impl Into<String>,
        points: Vec<GpsPoint>,
    ) -> Result<Self> {
        let id = id.into();
        if points.is_empty() {
            return Err(Error::DegenerateInput(format!("trajectory {id} has no points")));
        }
        if points.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::Consistency(format!(
                "trajectory {id} timestamps are not non-decreasing"
            )));
        }
        Ok(RawTrajectory {
            id,
            task_id: task_id.into(),
            points,
        })
    }

    /// Total duration in seconds (last minus first timestamp).
    pub fn duration_s(&self) -> f64 {
        self.points[self.points.len() - 1].t - self.points[0].t
    }

    /// Number of distinct coordinate pairs.
    pub fn distinct_coordinates(&self) -> usize {
        let mut seen: Vec<(u64, u64)> = self
            .points
            .iter()
            .map(|p| (p.lat.to_bits(), p.lon.to_bits()))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// One row of the delta representation: coordinate differences between
/// consecutive fixes plus the temporal attributes of the departing point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetaRow {
    pub dlat: f64,
    pub dlon: f64,
    /// Monday = 0 .. Sunday = 6.
    pub day_of_week: u8,
    /// 0 .. 23.
    pub hour: u8,
    pub t: f64,
}

/// A trip in delta form with its travel-time label.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetaTrajectory {
    pub id: String,
    pub task_id: String,
    pub rows: Vec<MetaRow>,
    /// Travel time in seconds: last raw timestamp minus first.
    pub label_s: f64,
    /// Cumulative path length in kilometers, kept for bucketed reporting.
    pub path_km: f64,
}

impl MetaTrajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Rule-1 thresholds for one task.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RuleThresholds {
    pub min_time_s: f64,
    pub max_time_s: f64,
    pub min_dist_km: f64,
    pub max_dist_km: f64,
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_time_s > 0.0
            && self.min_dist_km > 0.0
            && self.min_time_s < self.max_time_s
            && self.min_dist_km < self.max_dist_km;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "thresholds must satisfy 0 < min < max, got time [{}, {}] dist [{}, {}]",
                self.min_time_s, self.max_time_s, self.min_dist_km, self.max_dist_km
            )))
        }
    }
}

/// Per-task preprocessing settings, keyed by task id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreprocessConfig {
    entries: BTreeMap<String, TaskPreprocess>,
}

/// Settings for one task: thresholds plus the fixed local-time offset used
/// for day-of-week/hour attributes and date splits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskPreprocess {
    pub thresholds: RuleThresholds,
    pub utc_offset_seconds: i64,
}

impl PreprocessConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task_id: impl Into<String>, entry: TaskPreprocess) -> Result<()> {
        entry.thresholds.validate()?;
        self.entries.insert(task_id.into(), entry);
        Ok(())
    }

    pub fn get(&self, task_id: &str) -> Result<&TaskPreprocess> {
        self.entries
            .get(task_id)
            .ok_or_else(|| Error::Config(format!("no preprocessing entry for task {task_id}")))
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Why a trajectory was rejected. The first violated rule wins, checked in
/// the order: distinct points, positive duration, time range, distance
/// range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    /// Rule 2: fewer than two distinct coordinate pairs.
    FewDistinctPoints,
    /// Rule 3: total travel time not positive.
    NonPositiveDuration,
    /// Rule 1: travel time outside the configured range.
    TimeOutOfRange,
    /// Rule 1: path length outside the configured range.
    DistanceOutOfRange,
}

impl DropReason {
    /// Stable label used in preprocessing reports.
    pub fn label(&self) -> &'static str {
        match self {
            DropReason::FewDistinctPoints => "rule2-distinct-points",
            DropReason::NonPositiveDuration => "rule3-duration",
            DropReason::TimeOutOfRange => "rule1-time",
            DropReason::DistanceOutOfRange => "rule1-distance",
        }
    }

    pub fn all() -> [DropReason; 4] {
        [
            DropReason::FewDistinctPoints,
            DropReason::NonPositiveDuration,
            DropReason::TimeOutOfRange,
            DropReason::DistanceOutOfRange,
        ]
    }
}

/// Keep-or-drop decision for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleDecision {
    Keep,
    Drop(DropReason),
}

/// Apply the three preprocessing rules under the task's thresholds.
pub fn apply_rules(traj: &RawTrajectory, cfg: &PreprocessConfig) -> Result<RuleDecision> {
    let entry = cfg.get(&traj.task_id)?;
    if traj.distinct_coordinates() < 2 {
        return Ok(RuleDecision::Drop(DropReason::FewDistinctPoints));
    }
    if !(traj.duration_s() > 0.0) {
        return Ok(RuleDecision::Drop(DropReason::NonPositiveDuration));
    }
    let th = &entry.thresholds;
    let dur = traj.duration_s();
    if dur < th.min_time_s || dur > th.max_time_s {
        return Ok(RuleDecision::Drop(DropReason::TimeOutOfRange));
    }
    let dist = geo::path_length_km(traj)?;
    if dist < th.min_dist_km || dist > th.max_dist_km {
        return Ok(RuleDecision::Drop(DropReason::DistanceOutOfRange));
    }
    Ok(RuleDecision::Keep)
}

/// Convert a kept trajectory to delta form.
///
/// Row `j` holds the coordinate difference from point `j` to `j+1` and the
/// day-of-week/hour/timestamp of point `j` (the departing end of the
/// segment) in the task's local time. The label is the raw trip duration.
pub fn to_meta_trajectory(traj: &RawTrajectory, utc_offset_seconds: i64) -> Result<MetaTrajectory> {
    if traj.points.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "trajectory {} has fewer than 2 points",
            traj.id
        )));
    }
    let label = traj.duration_s();
    if !(label > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "trajectory {} has non-positive duration {label}",
            traj.id
        )));
    }
    let path_km = geo::path_length_km(traj)?;
    let rows = traj
        .points
        .windows(2)
        .map(|w| {
            let lt = time::local_time(w[0].t, utc_offset_seconds);
            MetaRow {
                dlat: w[1].lat - w[0].lat,
                dlon: w[1].lon - w[0].lon,
                day_of_week: lt.day_of_week,
                hour: lt.hour,
                t: w[0].t,
            }
        })
        .collect();
    Ok(MetaTrajectory {
        id: traj.id.clone(),
        task_id: traj.task_id.clone(),
        rows,
        label_s: label,
        path_km,
    })
}

/// Result of parsing a record stream: grouped trajectories plus the number
/// of malformed rows that were skipped.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub trajectories: Vec<RawTrajectory>,
    pub skipped_rows: u64,
}

/// Parse comma-delimited point records (`traj_id,lat,lon,unix_seconds`)
/// into trajectories grouped by id and sorted by timestamp.
///
/// Rows with the wrong field count, non-numeric fields, or out-of-range
/// values are skipped and counted. Trajectory order is sorted by id so the
/// outcome is independent of input interleaving.
pub fn parse_trajectories<'a, I>(lines: I, task_id: &str) -> ParseOutcome
where
    I: IntoIterator<Item = &'a str>,
{
    let mut groups: BTreeMap<String, Vec<GpsPoint>> = BTreeMap::new();
    let mut skipped = 0u64;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_point_record(line) {
            Some((id, point)) => groups.entry(id.to_string()).or_default().push(point),
            None => skipped += 1,
        }
    }
    let trajectories = groups
        .into_iter()
        .map(|(id, mut points)| {
            points.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite timestamps"));
            RawTrajectory {
                id,
                task_id: task_id.to_string(),
                points,
            }
        })
        .collect();
    ParseOutcome {
        trajectories,
        skipped_rows: skipped,
    }
}

fn parse_point_record(line: &str) -> Option<(&str, GpsPoint)> {
    let mut fields = line.split(',');
    let id = fields.next()?.trim();
    let lat: f64 = fields.next()?.trim().parse().ok()?;
    let lon: f64 = fields.next()?.trim().parse().ok()?;
    let t: f64 = fields.next()?.trim().parse().ok()?;
    if fields.next().is_some() || id.is_empty() {
        return None;
    }
    GpsPoint::new(lat, lon, t).ok().map(|p| (id, p))
}
