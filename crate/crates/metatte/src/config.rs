//! Flat `key = value` run configuration with section prefixes, e.g.
//! `task.chengdu.min_time = 315`. Unknown keys are rejected.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

use metatte_core::model::{CellKind, ModelConfig, Variant};
use metatte_core::synth::CitySpec;
use metatte_core::tasks::{DateRange, SplitRanges};
use metatte_core::time::CivilDate;
use metatte_core::trainer::TrainConfig;
use metatte_core::trajectory::{PreprocessConfig, RuleThresholds, TaskPreprocess};

#[derive(Debug, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

type Result<T> = std::result::Result<T, ConfigError>;

/// One task's preprocessing settings and split date ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub preprocess: TaskPreprocess,
    pub splits: SplitRanges,
}

/// One synthetic city plus the number of trips to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub spec: CitySpec,
    pub n_trips: usize,
}

/// Everything a run can configure; sections default when absent.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tasks: BTreeMap<String, TaskConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: BTreeMap<String, SynthConfig>,
}

impl RunConfig {
    /// The preprocessing view over all configured tasks.
    pub fn preprocess_config(&self) -> PreprocessConfig {
        let mut cfg = PreprocessConfig::new();
        for (id, task) in &self.tasks {
            cfg.insert(id.clone(), task.preprocess)
                .expect("validated at parse time");
        }
        cfg
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tasks: BTreeMap::new(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: BTreeMap::new(),
        }
    }
}

struct Raw {
    values: BTreeMap<String, String>,
    consumed: RefCell<BTreeSet<String>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(ConfigError(format!("duplicate key {key}")));
            }
        }
        Ok(Raw {
            values,
            consumed: RefCell::new(BTreeSet::new()),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        let hit = self.values.get(key).map(|s| s.as_str());
        if hit.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        hit
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key {key}")))
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                ConfigError(format!(
                    "key {key}: cannot parse {raw:?} as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    fn typed_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?;
        Ok(self.typed(key)?.expect("present"))
    }

    /// Section names appearing as `prefix.<name>.<field>`.
    fn section_names(&self, prefix: &str) -> Vec<String> {
        let mut names: Vec<String> = self
            .values
            .keys()
            .filter_map(|k| {
                let rest = k.strip_prefix(prefix)?.strip_prefix('.')?;
                rest.split('.').next().map(|s| s.to_string())
            })
            .collect();
        names.sort();
        names.dedup();
        names
    }

    fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(format!(
                "unknown configuration keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

fn parse_date(raw: &str, key: &str) -> Result<CivilDate> {
    let parts: Vec<&str> = raw.split('-').collect();
    let bad = || ConfigError(format!("key {key}: expected a YYYY-MM-DD date, got {raw:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let year: i32 = parts[0].parse().map_err(|_| bad())?;
    let month: u8 = parts[1].parse().map_err(|_| bad())?;
    let day: u8 = parts[2].parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(bad());
    }
    Ok(CivilDate::new(year, month, day))
}

fn parse_multipliers<const N: usize>(raw: &str, key: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = raw.split(',').map(|s| s.trim()).collect();
    if parts.len() != N {
        return Err(ConfigError(format!(
            "key {key}: expected {N} comma-separated values, got {}",
            parts.len()
        )));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| ConfigError(format!("key {key}: cannot parse {part:?} as a number")))?;
    }
    Ok(out)
}

fn parse_task(raw: &Raw, id: &str) -> Result<TaskConfig> {
    let key = |field: &str| format!("task.{id}.{field}");
    let thresholds = RuleThresholds {
        min_time_s: raw.typed_required(&key("min_time"))?,
        max_time_s: raw.typed_required(&key("max_time"))?,
        min_dist_km: raw.typed_required(&key("min_dist"))?,
        max_dist_km: raw.typed_required(&key("max_dist"))?,
    };
    thresholds
        .validate()
        .map_err(|e| ConfigError(format!("task {id}: {e}")))?;
    let offset_hours: i64 = raw.typed(&key("utc_offset_hours"))?.unwrap_or(0);
    let date = |field: &str| -> Result<CivilDate> {
        parse_date(raw.require(&key(field))?, &key(field))
    };
    let range = |lo: CivilDate, hi: CivilDate, what: &str| -> Result<DateRange> {
        DateRange::new(lo, hi).map_err(|e| ConfigError(format!("task {id} {what}: {e}")))
    };
    let splits = SplitRanges::new(
        range(date("train_start")?, date("train_end")?, "train range")?,
        range(date("val_start")?, date("val_end")?, "val range")?,
        range(date("test_start")?, date("test_end")?, "test range")?,
    )
    .map_err(|e| ConfigError(format!("task {id}: {e}")))?;
    Ok(TaskConfig {
        preprocess: TaskPreprocess {
            thresholds,
            utc_offset_seconds: offset_hours * 3600,
        },
        splits,
    })
}

fn parse_synth(raw: &Raw, id: &str) -> Result<SynthConfig> {
    let key = |field: &str| format!("synth.{id}.{field}");
    let depart_start = parse_date(raw.require(&key("depart_start"))?, &key("depart_start"))?;
    let depart_end = parse_date(raw.require(&key("depart_end"))?, &key("depart_end"))?;
    let depart_range = DateRange::new(depart_start, depart_end)
        .map_err(|e| ConfigError(format!("synth {id}: {e}")))?;
    let mut spec = CitySpec::flat(
        id,
        raw.typed_required(&key("mean_speed"))?,
        raw.typed_required(&key("trip_min_km"))?,
        raw.typed_required(&key("trip_max_km"))?,
        depart_range,
    );
    if let Some(v) = raw.typed(&key("center_lat"))? {
        spec.center_lat = v;
    }
    if let Some(v) = raw.typed(&key("center_lon"))? {
        spec.center_lon = v;
    }
    if let Some(v) = raw.typed(&key("speed_noise"))? {
        spec.speed_noise_mps = v;
    }
    if let Some(v) = raw.typed(&key("segment_jitter"))? {
        spec.segment_jitter = v;
    }
    if let Some(v) = raw.typed(&key("interval_s"))? {
        spec.sampling_interval_s = v;
    }
    if let Some(v) = raw.typed::<i64>(&key("utc_offset_hours"))? {
        spec.utc_offset_seconds = v * 3600;
    }
    if let Some(v) = raw.get(&key("hourly")) {
        spec.hourly_multipliers = parse_multipliers::<24>(v, &key("hourly"))?;
    }
    if let Some(v) = raw.get(&key("weekday")) {
        spec.weekday_multipliers = parse_multipliers::<7>(v, &key("weekday"))?;
    }
    spec.validate()
        .map_err(|e| ConfigError(format!("synth {id}: {e}")))?;
    Ok(SynthConfig {
        spec,
        n_trips: raw.typed_required(&key("n_trips"))?,
    })
}

/// Parse a configuration file's text.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let raw = Raw::parse(text)?;
    let mut cfg = RunConfig::default();

    for id in raw.section_names("task") {
        let task = parse_task(&raw, &id)?;
        cfg.tasks.insert(id, task);
    }
    for id in raw.section_names("synth") {
        let synth = parse_synth(&raw, &id)?;
        cfg.synth.insert(id, synth);
    }

    if let Some(v) = raw.typed("model.embed_dim")? {
        cfg.model.embed_dim = v;
    }
    if let Some(v) = raw.typed("model.rnn_units")? {
        cfg.model.rnn_units = v;
    }
    if let Some(v) = raw.get("model.cell") {
        cfg.model.cell = CellKind::parse(v).map_err(|e| ConfigError(e.to_string()))?;
    }
    if let Some(v) = raw.get("model.variant") {
        cfg.model.variant = Variant::parse(v).map_err(|e| ConfigError(e.to_string()))?;
    }
    if let Some(v) = raw.get("model.decoder_widths") {
        let widths: Vec<usize> = v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("model.decoder_widths: bad width {s:?}")))
            })
            .collect::<Result<_>>()?;
        cfg.model.decoder_widths = widths;
    }
    cfg.model
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;

    if let Some(v) = raw.typed("train.k")? {
        cfg.train.inner_steps = v;
    }
    if let Some(v) = raw.typed("train.batch_size")? {
        cfg.train.batch_size = v;
    }
    if let Some(v) = raw.typed("train.beta")? {
        cfg.train.meta_step_size = v;
    }
    if let Some(v) = raw.typed("train.eta")? {
        cfg.train.max_iterations = v;
    }
    if let Some(v) = raw.typed("train.seed")? {
        cfg.train.seed = v;
    }
    if let Some(v) = raw.typed("train.eval_every")? {
        cfg.train.eval_every = v;
    }
    if let Some(v) = raw.typed("train.inner_lr")? {
        cfg.train.inner_lr = v;
    }
    cfg.train
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;

    raw.reject_unknown()?;
    Ok(cfg)
}
