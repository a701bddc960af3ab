//! Per-task feature standardization fitted on training data only.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::trajectory::MetaTrajectory;

/// Variance floor applied when a feature column is constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Standardizes the coordinate-delta channels to zero mean and unit
/// variance, and carries the label statistics used to normalize travel
/// times during training. Day-of-week, hour, and timestamps pass through
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scaler {
    pub dlat_mean: f64,
    pub dlat_std: f64,
    pub dlon_mean: f64,
    pub dlon_std: f64,
    pub label_mean: f64,
    pub label_std: f64,
    /// True when any variance hit the floor; the caller should surface a
    /// warning.
    pub variance_floored: bool,
}

impl Scaler {
    /// Fit on the training split of one task.
    pub fn fit(train: &[MetaTrajectory]) -> Result<Scaler> {
        if train.is_empty() || train.iter().all(|m| m.rows.is_empty()) {
            return Err(Error::DegenerateInput(
                "cannot fit scaler on empty training data".into(),
            ));
        }
        let mut floored = false;
        let mut stat = |values: &mut dyn Iterator<Item = f64>| -> (f64, f64) {
            let collected: Vec<f64> = values.collect();
            let n = collected.len() as f64;
            let mean = collected.iter().sum::<f64>() / n;
            let var = collected.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var < VARIANCE_FLOOR {
                floored = true;
            }
            (mean, math::sqrt(var.max(VARIANCE_FLOOR)))
        };
        let (dlat_mean, dlat_std) =
            stat(&mut train.iter().flat_map(|m| m.rows.iter().map(|r| r.dlat)));
        let (dlon_mean, dlon_std) =
            stat(&mut train.iter().flat_map(|m| m.rows.iter().map(|r| r.dlon)));
        let (label_mean, label_std) = stat(&mut train.iter().map(|m| m.label_s));
        Ok(Scaler {
            dlat_mean,
            dlat_std,
            dlon_mean,
            dlon_std,
            label_mean,
            label_std,
            variance_floored: floored,
        })
    }

    /// Standardize the delta channels of one trajectory.
    pub fn apply(&self, m: &MetaTrajectory) -> MetaTrajectory {
        let mut out = m.clone();
        for row in &mut out.rows {
            row.dlat = (row.dlat - self.dlat_mean) / self.dlat_std;
            row.dlon = (row.dlon - self.dlon_mean) / self.dlon_std;
        }
        out
    }

    pub fn normalize_label(&self, seconds: f64) -> f64 {
        (seconds - self.label_mean) / self.label_std
    }

    pub fn denormalize_label(&self, normalized: f64) -> f64 {
        normalized * self.label_std + self.label_mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::MetaRow;
    use alloc::string::ToString;
    use alloc::vec;

    fn meta(id: &str, deltas: &[(f64, f64)], label: f64) -> MetaTrajectory {
        MetaTrajectory {
            id: id.to_string(),
            task_id: "c".to_string(),
            rows: deltas
                .iter()
                .map(|&(dlat, dlon)| MetaRow {
                    dlat,
                    dlon,
                    day_of_week: 1,
                    hour: 9,
                    t: 0.0,
                })
                .collect(),
            label_s: label,
            path_km: 3.0,
        }
    }

    #[test]
    fn constant_column_scales_to_zeros() {
        let data = vec![
            meta("a", &[(0.5, 0.1), (0.5, 0.3)], 100.0),
            meta("b", &[(0.5, -0.2)], 200.0),
        ];
        let s = Scaler::fit(&data).unwrap();
        assert!(s.variance_floored);
        let scaled = s.apply(&data[0]);
        for row in &scaled.rows {
            assert_eq!(row.dlat, 0.0);
        }
    }

    #[test]
    fn fit_then_apply_standardizes() {
        let data = vec![
            meta("a", &[(0.1, -0.4), (0.9, 0.2)], 300.0),
            meta("b", &[(-0.3, 0.7), (0.5, -0.1), (0.2, 0.6)], 420.0),
        ];
        let s = Scaler::fit(&data).unwrap();
        let scaled: Vec<MetaTrajectory> = data.iter().map(|m| s.apply(m)).collect();
        let all: Vec<f64> = scaled.iter().flat_map(|m| m.rows.iter().map(|r| r.dlat)).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn untouched_channels_and_label() {
        let data = vec![meta("a", &[(0.1, 0.2), (0.3, 0.4)], 300.0)];
        let s = Scaler::fit(&data).unwrap();
        let scaled = s.apply(&data[0]);
        assert_eq!(scaled.rows[0].day_of_week, 1);
        assert_eq!(scaled.rows[0].hour, 9);
        assert_eq!(scaled.rows[0].t, 0.0);
        assert_eq!(scaled.label_s, 300.0);
    }

    #[test]
    fn label_normalization_round_trips() {
        let data = vec![
            meta("a", &[(0.1, 0.2)], 250.0),
            meta("b", &[(0.2, 0.1)], 750.0),
        ];
        let s = Scaler::fit(&data).unwrap();
        assert!((s.label_mean - 500.0).abs() < 1e-12);
        for label in [250.0, 500.0, 750.0, 1000.0] {
            let n = s.normalize_label(label);
            assert!((s.denormalize_label(n) - label).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_fit_is_an_error() {
        assert!(matches!(
            Scaler::fit(&[]),
            Err(Error::DegenerateInput(_))
        ));
    }
}
