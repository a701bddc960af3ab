//! Synthetic multi-city trip generator with analytically known travel-time
//! structure, used by the desk-scale acceptance harness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::EARTH_RADIUS_KM;
use crate::math;
use crate::rng::{derive_seed, standard_normal};
use crate::tasks::DateRange;
use crate::time;
use crate::trajectory::{GpsPoint, RawTrajectory};

/// Kilometers per degree of latitude on the fixed-radius sphere.
fn km_per_degree_lat() -> f64 {
    math::PI * EARTH_RADIUS_KM / 180.0
}

/// Generator settings for one synthetic city.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CitySpec {
    pub task_id: String,
    pub center_lat: f64,
    pub center_lon: f64,
    /// Base cruising speed in meters per second.
    pub mean_speed_mps: f64,
    /// Standard deviation of the per-segment speed noise, in m/s.
    pub speed_noise_mps: f64,
    /// Multiplier on speed by local hour of day.
    pub hourly_multipliers: [f64; 24],
    /// Multiplier on speed by local day of week (Monday = 0).
    pub weekday_multipliers: [f64; 7],
    /// Trip path lengths are drawn uniformly from this range (km).
    pub trip_km_min: f64,
    pub trip_km_max: f64,
    /// Relative half-range of per-segment length jitter (0 gives equal
    /// segments; 0.3 varies them by up to 30% either way).
    pub segment_jitter: f64,
    /// Nominal seconds between consecutive fixes.
    pub sampling_interval_s: f64,
    pub utc_offset_seconds: i64,
    /// Departure instants are drawn uniformly over this local date span.
    pub depart_range: DateRange,
}

impl CitySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mean_speed_mps > 0.0
            && self.speed_noise_mps >= 0.0
            && self.trip_km_min > 0.0
            && self.trip_km_min <= self.trip_km_max
            && (0.0..1.0).contains(&self.segment_jitter)
            && self.sampling_interval_s > 0.0
            && self.hourly_multipliers.iter().all(|&m| m > 0.0)
            && self.weekday_multipliers.iter().all(|&m| m > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid city spec for task {}",
                self.task_id
            )))
        }
    }

    /// A flat spec: all multipliers one, useful as a starting point.
    pub fn flat(
        task_id: impl Into<String>,
        mean_speed_mps: f64,
        trip_km_min: f64,
        trip_km_max: f64,
        depart_range: DateRange,
    ) -> CitySpec {
        CitySpec {
            task_id: task_id.into(),
            center_lat: 30.66,
            center_lon: 104.06,
            mean_speed_mps,
            speed_noise_mps: 0.0,
            hourly_multipliers: [1.0; 24],
            weekday_multipliers: [1.0; 7],
            trip_km_min,
            trip_km_max,
            segment_jitter: 0.0,
            sampling_interval_s: 30.0,
            utc_offset_seconds: 8 * 3600,
            depart_range,
        }
    }

    /// Combined hour/weekday speed multiplier at an instant.
    fn multiplier_at(&self, unix_seconds: f64) -> f64 {
        let lt = time::local_time(unix_seconds, self.utc_offset_seconds);
        self.hourly_multipliers[lt.hour as usize]
            * self.weekday_multipliers[lt.day_of_week as usize]
    }
}

/// One generated trip with its noise-free reference travel time.
#[derive(Debug, Clone)]
pub struct GeneratedTrip {
    pub raw: RawTrajectory,
    /// Travel time the trip would have taken with zero speed noise, holding
    /// departure and geometry fixed.
    pub oracle_s: f64,
}

/// Maximum heading change per segment (radians); keeps paths road-like
/// rather than Brownian.
const MAX_TURN: f64 = 30.0 * math::PI / 180.0;

/// Generate a city's trip corpus. Deterministic per seed, with one derived
/// stream per trip.
pub fn generate_city(spec: &CitySpec, n_trips: usize, seed: u64) -> Result<Vec<GeneratedTrip>> {
    spec.validate()?;
    if n_trips < 1 {
        return Err(Error::Config("n_trips must be at least 1".into()));
    }
    let depart_lo = spec.depart_range.start.to_epoch_days() * 86_400 - spec.utc_offset_seconds;
    let depart_hi = (spec.depart_range.end.to_epoch_days() + 1) * 86_400 - spec.utc_offset_seconds;
    (0..n_trips)
        .map(|i| {
            let trip_id = format!("{}-{i:06}", spec.task_id);
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("trip/{trip_id}")));
            generate_trip(spec, trip_id, depart_lo, depart_hi, &mut rng)
        })
        .collect()
}

fn generate_trip(
    spec: &CitySpec,
    trip_id: String,
    depart_lo: i64,
    depart_hi: i64,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedTrip> {
    let target_km =
        spec.trip_km_min + (spec.trip_km_max - spec.trip_km_min) * rng.random::<f64>();
    // Whole-second departures keep elapsed-time arithmetic exact.
    let depart =
        math::floor(depart_lo as f64 + (depart_hi - depart_lo) as f64 * rng.random::<f64>());
    let nominal_step_km = spec.mean_speed_mps * spec.sampling_interval_s / 1000.0;
    let segments = ((target_km / nominal_step_km) + 0.5) as usize;
    let segments = segments.max(1);
    let base_step_km = target_km / segments as f64;

    let mut heading = rng.random::<f64>() * 2.0 * math::PI;
    let mut lat = spec.center_lat;
    let mut lon = spec.center_lon;
    // Elapsed times accumulate away from the epoch-sized departure value
    // so segment durations do not lose precision.
    let mut elapsed = 0.0;
    let mut oracle_elapsed = 0.0;
    let mut points = alloc::vec![GpsPoint::new(lat, lon, depart)?];

    for _ in 0..segments {
        // Jittered segment lengths keep sequence length from fully
        // determining the trip distance.
        let step = if spec.segment_jitter == 0.0 {
            base_step_km
        } else {
            base_step_km * (1.0 + spec.segment_jitter * (2.0 * rng.random::<f64>() - 1.0))
        };
        heading += (rng.random::<f64>() * 2.0 - 1.0) * MAX_TURN;
        lat += step * math::cos(heading) / km_per_degree_lat();
        lon += step * math::sin(heading) / (km_per_degree_lat() * math::cos(lat.to_radians()));

        let noise = if spec.speed_noise_mps == 0.0 {
            1.0
        } else {
            let relative = spec.speed_noise_mps / spec.mean_speed_mps;
            (1.0 + relative * standard_normal(rng)).max(0.1)
        };
        let step_fraction = step / nominal_step_km;
        elapsed += spec.sampling_interval_s * step_fraction
            / (spec.multiplier_at(depart + elapsed) * noise);
        oracle_elapsed += spec.sampling_interval_s * step_fraction
            / spec.multiplier_at(depart + oracle_elapsed);
        points.push(GpsPoint::new(lat, lon, depart + elapsed)?);
    }
    // Round-trip through the departure instant so the oracle undergoes the
    // same final rounding as the trip's own timestamp-derived duration.
    let oracle_s = (depart + oracle_elapsed) - depart;
    Ok(GeneratedTrip {
        raw: RawTrajectory::new(trip_id, spec.task_id.clone(), points)?,
        oracle_s,
    })
}

/// Recompute the noise-free travel time of a trip from its geometry and
/// the generating spec: walk the polyline at the deterministic speed
/// profile starting from the recorded departure instant.
pub fn oracle_predictor(trip: &RawTrajectory, spec: &CitySpec) -> Result<f64> {
    if trip.task_id != spec.task_id {
        return Err(Error::Consistency(format!(
            "trip {} belongs to task {}, not {}",
            trip.id, trip.task_id, spec.task_id
        )));
    }
    if trip.points.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "trip {} has fewer than 2 points",
            trip.id
        )));
    }
    let mut t = trip.points[0].t;
    for pair in trip.points.windows(2) {
        let step_km = crate::geo::haversine_km(&pair[0], &pair[1]);
        t += step_km * 1000.0 / (spec.mean_speed_mps * spec.multiplier_at(t));
    }
    Ok(t - trip.points[0].t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mae;
    use crate::time::CivilDate;
    use crate::trajectory::{
        apply_rules, to_meta_trajectory, PreprocessConfig, RuleDecision, RuleThresholds,
        TaskPreprocess,
    };

    fn august() -> DateRange {
        DateRange::new(CivilDate::new(2014, 8, 3), CivilDate::new(2014, 8, 16)).unwrap()
    }

    #[test]
    fn noise_free_fixed_length_trip_has_exact_travel_time() {
        // 3.6 km at 10 m/s is 360 seconds, independent of the path shape.
        let spec = CitySpec::flat("exact", 10.0, 3.6, 3.6, august());
        let trips = generate_city(&spec, 5, 99).unwrap();
        for trip in &trips {
            assert_eq!(trip.raw.duration_s(), 360.0);
            assert_eq!(trip.oracle_s, 360.0);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = CitySpec::flat("det", 9.0, 2.0, 5.0, august());
        let a = generate_city(&spec, 20, 7).unwrap();
        let b = generate_city(&spec, 20, 7).unwrap();
        let c = generate_city(&spec, 20, 8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.raw.points, y.raw.points);
            assert_eq!(x.oracle_s, y.oracle_s);
        }
        assert_ne!(a[0].raw.points, c[0].raw.points);
    }

    #[test]
    fn per_segment_speeds_average_to_the_spec_mean() {
        let mut spec = CitySpec::flat("speedy", 10.0, 2.0, 5.0, august());
        spec.speed_noise_mps = 0.5;
        let trips = generate_city(&spec, 10_000, 31).unwrap();
        let mut speeds = Vec::new();
        for trip in &trips {
            for pair in trip.raw.points.windows(2) {
                let km = crate::geo::haversine_km(&pair[0], &pair[1]);
                let dt = pair[1].t - pair[0].t;
                speeds.push(km * 1000.0 / dt);
            }
        }
        let n = speeds.len() as f64;
        let mean = speeds.iter().sum::<f64>() / n;
        let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let bound = 3.0 * var.sqrt() / n.sqrt();
        assert!(
            (mean - 10.0).abs() < bound,
            "mean segment speed {mean} not within {bound} of 10"
        );
    }

    #[test]
    fn oracle_recomputation_matches_recorded_value() {
        // The recomputation measures segments with great-circle distances
        // while generation uses a local tangent step, so agreement is to
        // geometric approximation error, not bit-exact.
        let mut spec = CitySpec::flat("oracle", 8.0, 2.0, 4.0, august());
        spec.speed_noise_mps = 1.0;
        spec.segment_jitter = 0.3;
        spec.hourly_multipliers[8] = 0.6;
        spec.weekday_multipliers[4] = 1.2;
        let trips = generate_city(&spec, 50, 13).unwrap();
        for trip in &trips {
            let recomputed = oracle_predictor(&trip.raw, &spec).unwrap();
            let rel = (recomputed - trip.oracle_s).abs() / trip.oracle_s;
            assert!(rel < 1e-4, "recomputed {recomputed} vs {}", trip.oracle_s);
        }
    }

    #[test]
    fn oracle_rejects_city_mismatch() {
        let spec_a = CitySpec::flat("a", 8.0, 2.0, 4.0, august());
        let spec_b = CitySpec::flat("b", 8.0, 2.0, 4.0, august());
        let trips = generate_city(&spec_a, 1, 1).unwrap();
        assert!(matches!(
            oracle_predictor(&trips[0].raw, &spec_b),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn noise_free_corpus_has_zero_oracle_error_and_floors_any_model() {
        let spec = CitySpec::flat("floor", 10.0, 2.0, 5.0, august());
        let trips = generate_city(&spec, 200, 5).unwrap();
        let oracle: Vec<f64> = trips.iter().map(|t| t.oracle_s).collect();
        let actual: Vec<f64> = trips.iter().map(|t| t.raw.duration_s()).collect();
        let oracle_mae = mae(&oracle, &actual).unwrap();
        assert_eq!(oracle_mae, 0.0);
        // Any other predictor can only do worse on this corpus.
        let constant: Vec<f64> = actual.iter().map(|_| 400.0).collect();
        assert!(mae(&constant, &actual).unwrap() >= oracle_mae);
    }

    #[test]
    fn noisy_corpus_oracle_error_matches_direct_simulation() {
        // Fixed-length trips so every trip has the same segment structure.
        let mut spec = CitySpec::flat("mc", 10.0, 3.0, 3.0, august());
        spec.speed_noise_mps = 2.0;
        let trips = generate_city(&spec, 20_000, 17).unwrap();
        let oracle: Vec<f64> = trips.iter().map(|t| t.oracle_s).collect();
        let actual: Vec<f64> = trips.iter().map(|t| t.raw.duration_s()).collect();
        let corpus_mae = mae(&oracle, &actual).unwrap();

        // Independent simulation of the same noise process: each of the 10
        // equal segments contributes 30 * (1/noise - 1) seconds of
        // deviation from the noise-free time.
        let mut rng = crate::rng::seeded(12345, "mc-oracle");
        let relative = 2.0 / 10.0;
        let sims = 100_000;
        let mut total = 0.0;
        for _ in 0..sims {
            let mut dev = 0.0;
            for _ in 0..10 {
                let noise = (1.0 + relative * standard_normal(&mut rng)).max(0.1);
                dev += 30.0 * (1.0 / noise - 1.0);
            }
            total += dev.abs();
        }
        let simulated = total / sims as f64;
        let rel_gap = (corpus_mae - simulated).abs() / simulated;
        assert!(
            rel_gap < 0.05,
            "corpus oracle MAE {corpus_mae} vs simulated {simulated}"
        );
    }

    #[test]
    fn corpus_survives_preprocessing_with_high_keep_rate() {
        let mut spec = CitySpec::flat("kept", 10.0, 2.5, 5.5, august());
        spec.speed_noise_mps = 1.5;
        spec.segment_jitter = 0.3;
        let trips = generate_city(&spec, 1000, 23).unwrap();
        let mut cfg = PreprocessConfig::new();
        cfg.insert(
            "kept",
            TaskPreprocess {
                thresholds: RuleThresholds {
                    min_time_s: 120.0,
                    max_time_s: 1400.0,
                    min_dist_km: 1.5,
                    max_dist_km: 7.5,
                },
                utc_offset_seconds: spec.utc_offset_seconds,
            },
        )
        .unwrap();
        let kept = trips
            .iter()
            .filter(|t| apply_rules(&t.raw, &cfg).unwrap() == RuleDecision::Keep)
            .count();
        assert!(
            kept as f64 >= 0.95 * trips.len() as f64,
            "only {kept}/{} kept",
            trips.len()
        );
    }

    #[test]
    fn different_speeds_make_genuinely_distinct_tasks() {
        let slow = CitySpec::flat("slow", 8.0, 2.0, 4.5, august());
        let fast = CitySpec::flat("fast", 14.0, 7.0, 11.0, august());
        let label_mean = |spec: &CitySpec| -> f64 {
            let trips = generate_city(spec, 500, 3).unwrap();
            let metas: Vec<f64> = trips
                .iter()
                .map(|t| {
                    to_meta_trajectory(&t.raw, spec.utc_offset_seconds)
                        .unwrap()
                        .label_s
                })
                .collect();
            metas.iter().sum::<f64>() / metas.len() as f64
        };
        let slow_mean = label_mean(&slow);
        let fast_mean = label_mean(&fast);
        let gap = (fast_mean - slow_mean).abs() / slow_mean.min(fast_mean);
        assert!(
            gap >= 0.4,
            "label means {slow_mean} vs {fast_mean} differ by only {gap}"
        );
    }
}
