//! Great-circle distances over GPS points.

use crate::error::{Error, Result};
use crate::math;
use crate::trajectory::{GpsPoint, RawTrajectory};

/// Spherical Earth radius in kilometers, fixed for reproducibility.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine great-circle distance between two points, in kilometers.
pub fn haversine_km(a: &GpsPoint, b: &GpsPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = math::sin(dlat / 2.0);
    let s_lon = math::sin(dlon / 2.0);
    let h = s_lat * s_lat + math::cos(lat_a) * math::cos(lat_b) * s_lon * s_lon;
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * math::asin(math::sqrt(h))
}

/// Cumulative length of the polyline through all points, in kilometers.
///
/// This is the "travel distance" the preprocessing thresholds apply to.
pub fn path_length_km(traj: &RawTrajectory) -> Result<f64> {
    if traj.points.len() < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "trajectory {} has {} point(s); path length needs at least 2",
            traj.id,
            traj.points.len()
        )));
    }
    Ok(traj
        .points
        .windows(2)
        .map(|w| haversine_km(&w[0], &w[1]))
        .sum())
}
