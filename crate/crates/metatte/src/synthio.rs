//! Writing synthetic corpora in the ingestible point format, with oracle
//! sidecar files.

use std::io::Write;
use std::path::Path;

use metatte_core::synth::GeneratedTrip;

/// Render trips as `traj_id,lat,lon,unix_seconds` rows.
pub fn corpus_csv(trips: &[GeneratedTrip]) -> String {
    let mut out = String::new();
    for trip in trips {
        for p in &trip.raw.points {
            out.push_str(&format!("{},{},{},{}\n", trip.raw.id, p.lat, p.lon, p.t));
        }
    }
    out
}

/// Render the oracle sidecar: `trip_id,oracle_seconds`.
pub fn oracle_csv(trips: &[GeneratedTrip]) -> String {
    let mut out = String::from("trip_id,oracle_seconds\n");
    for trip in trips {
        out.push_str(&format!("{},{}\n", trip.raw.id, trip.oracle_s));
    }
    out
}

pub fn write_corpus(dir: &Path, task_id: &str, trips: &[GeneratedTrip]) -> std::io::Result<()> {
    let mut points = std::fs::File::create(dir.join(format!("{task_id}.csv")))?;
    points.write_all(corpus_csv(trips).as_bytes())?;
    let mut oracle = std::fs::File::create(dir.join(format!("{task_id}.oracle.csv")))?;
    oracle.write_all(oracle_csv(trips).as_bytes())
}
