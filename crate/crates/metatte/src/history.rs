//! Training-history files: comma-delimited, one row per meta-iteration.

use std::io::Write;

use metatte_core::trainer::HistoryRow;

pub const HISTORY_HEADER: &str = "iteration,task_id,train_loss,val_mae,val_mape,val_rmse";

/// Render the history as CSV text. Validation columns are empty on
/// iterations without an evaluation pass; floats use shortest round-trip
/// formatting so identical runs produce identical bytes.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for row in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.iteration,
            row.task_id,
            row.train_loss,
            opt(row.val_mae_s),
            opt(row.val_mape_pct),
            opt(row.val_rmse_s),
        ));
    }
    out
}

pub fn write_history(path: &std::path::Path, rows: &[HistoryRow]) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(history_csv(rows).as_bytes())
}
