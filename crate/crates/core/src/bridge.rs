//! Forecast grid hand-off: selects the grid point nearest the station and
//! converts forecast-model variables into the regressor's feature units.
//!
//! Snapshot file format is line-delimited JSON, one grid point per line:
//!
//! ```text
//! {"valid_time":"2024-03-01T18:00:00Z","latitude_deg":42.56000137,
//!  "longitude_deg":-83.63999939,"temp_k":281.3,"dewpoint_k":276.0,
//!  "wind_u_ms":3.0,"wind_v_ms":4.0,"precip_m":0.0,
//!  "surface_pressure_pa":98700.0}
//! ```
//!
//! All lines of one snapshot share a `valid_time`; a file may hold several
//! snapshots, selected with a time filter.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureVector, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::nn::{forward_one, load_model};
use crate::solar::{
    clear_sky_index, potential_irradiance, solar_altitude_ratio, sun_position, GeoLocation,
};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const MPS_TO_MPH: f64 = 2.236_936_292_1;
pub const METERS_TO_INCHES: f64 = 39.370_078_740_2;
pub const PASCALS_PER_INHG: f64 = 3_386.389;

// Magnus coefficients (Alduchov–Eskridge), temperatures in °C.
const MAGNUS_A: f64 = 17.625;
const MAGNUS_B: f64 = 243.04;

/// Forecast variables at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub temp_k: f64,
    pub dewpoint_k: f64,
    pub wind_u_ms: f64,
    pub wind_v_ms: f64,
    pub precip_m: f64,
    pub surface_pressure_pa: f64,
}

impl GridPoint {
    pub fn validate(&self) -> Result<()> {
        GeoLocation::new(self.latitude_deg, self.longitude_deg)?;
        if !(self.temp_k.is_finite() && self.temp_k > 0.0) {
            return Err(Error::out_of_range("temp_k", "(0, inf)", self.temp_k));
        }
        if !(self.dewpoint_k.is_finite() && self.dewpoint_k > 0.0) {
            return Err(Error::out_of_range("dewpoint_k", "(0, inf)", self.dewpoint_k));
        }
        if !(self.surface_pressure_pa.is_finite() && self.surface_pressure_pa > 0.0) {
            return Err(Error::out_of_range(
                "surface_pressure_pa",
                "(0, inf)",
                self.surface_pressure_pa,
            ));
        }
        if !(self.precip_m.is_finite() && self.precip_m >= 0.0) {
            return Err(Error::out_of_range("precip_m", "[0, inf)", self.precip_m));
        }
        if !self.wind_u_ms.is_finite() || !self.wind_v_ms.is_finite() {
            return Err(Error::validation("wind components must be finite"));
        }
        Ok(())
    }

    pub fn location(&self) -> Result<GeoLocation> {
        GeoLocation::new(self.latitude_deg, self.longitude_deg)
    }
}

/// Grid-point variables for one forecast valid time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    pub valid_time: DateTime<Utc>,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridLine {
    valid_time: DateTime<Utc>,
    #[serde(flatten)]
    point: GridPoint,
}

/// Reads a JSONL snapshot file. With `time_filter`, selects that valid
/// time; otherwise the file must contain exactly one valid time.
pub fn read_grid_jsonl(path: &Path, time_filter: Option<DateTime<Utc>>) -> Result<GridSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_time: BTreeMap<DateTime<Utc>, Vec<GridPoint>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GridLine = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        parsed
            .point
            .validate()
            .map_err(|e| Error::Validation(format!("{} line {}: {e}", path.display(), i + 1)))?;
        by_time.entry(parsed.valid_time).or_default().push(parsed.point);
    }
    if by_time.is_empty() {
        return Err(Error::validation(format!(
            "{} contains no grid points",
            path.display()
        )));
    }
    let (valid_time, points) = match time_filter {
        Some(t) => {
            let points = by_time.remove(&t).ok_or_else(|| {
                Error::validation(format!(
                    "no grid points at {}; file holds {:?}",
                    t.to_rfc3339(),
                    by_time.keys().map(|k| k.to_rfc3339()).collect::<Vec<_>>()
                ))
            })?;
            (t, points)
        }
        None => {
            if by_time.len() > 1 {
                return Err(Error::validation(format!(
                    "{} holds {} valid times; pass a time filter",
                    path.display(),
                    by_time.len()
                )));
            }
            by_time.into_iter().next().unwrap()
        }
    };
    Ok(GridSnapshot { valid_time, points })
}

/// Writes a snapshot in the JSONL format read by [`read_grid_jsonl`].
pub fn write_grid_jsonl(path: &Path, snapshot: &GridSnapshot) -> Result<()> {
    let mut out = String::new();
    for point in &snapshot.points {
        let line = GridLine {
            valid_time: snapshot.valid_time,
            point: point.clone(),
        };
        out.push_str(
            &serde_json::to_string(&line)
                .map_err(|e| Error::Internal(format!("grid serialization: {e}")))?,
        );
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Great-circle distance in metres on the IUGG mean sphere.
pub fn haversine_m(a: &GeoLocation, b: &GeoLocation) -> f64 {
    let lat_a = a.latitude_deg().to_radians();
    let lat_b = b.latitude_deg().to_radians();
    let d_lat = (b.latitude_deg() - a.latitude_deg()).to_radians();
    let d_lon = (b.longitude_deg() - a.longitude_deg()).to_radians();
    let h = (d_lat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Grid point minimizing haversine distance to the station; ties break to
/// the lexicographically smaller (latitude, longitude).
pub fn nearest_grid_point<'a>(
    station: &GeoLocation,
    snapshot: &'a GridSnapshot,
) -> Result<(&'a GridPoint, f64)> {
    if snapshot.points.is_empty() {
        return Err(Error::validation("snapshot contains no grid points"));
    }
    let mut best: Option<(&GridPoint, f64)> = None;
    for point in &snapshot.points {
        let d = haversine_m(station, &point.location()?);
        let better = match best {
            None => true,
            Some((cur, cur_d)) => {
                d < cur_d
                    || (d == cur_d
                        && (point.latitude_deg, point.longitude_deg)
                            < (cur.latitude_deg, cur.longitude_deg))
            }
        };
        if better {
            best = Some((point, d));
        }
    }
    Ok(best.unwrap())
}

pub fn kelvin_to_fahrenheit(temp_k: f64) -> f64 {
    (temp_k - 273.15) * 9.0 / 5.0 + 32.0
}

/// Magnus relative humidity from temperature and dew point in kelvin,
/// clamped to [0, 100].
pub fn magnus_relative_humidity_pct(temp_k: f64, dewpoint_k: f64) -> f64 {
    let t = temp_k - 273.15;
    let td = dewpoint_k - 273.15;
    let saturation = |c: f64| (MAGNUS_A * c / (MAGNUS_B + c)).exp();
    (100.0 * saturation(td) / saturation(t)).clamp(0.0, 100.0)
}

/// Converts one grid point into the regressor's feature vector, joining
/// the sun-position feature computed at the station for the valid time.
pub fn to_features(
    point: &GridPoint,
    station: &GeoLocation,
    valid_time: DateTime<Utc>,
) -> Result<FeatureVector> {
    point.validate()?;
    // Half-kelvin sensor slack mirrors the station-side dew point rule.
    if point.dewpoint_k > point.temp_k + 0.5 {
        return Err(Error::validation(format!(
            "supersaturation: dewpoint_k {} exceeds temp_k {} + 0.5",
            point.dewpoint_k, point.temp_k
        )));
    }
    let wind_speed_mph =
        (point.wind_u_ms * point.wind_u_ms + point.wind_v_ms * point.wind_v_ms).sqrt() * MPS_TO_MPH;
    let ratio = solar_altitude_ratio(*station, valid_time)?;
    FeatureVector::new([
        kelvin_to_fahrenheit(point.temp_k),
        magnus_relative_humidity_pct(point.temp_k, point.dewpoint_k),
        kelvin_to_fahrenheit(point.dewpoint_k),
        wind_speed_mph,
        point.precip_m * METERS_TO_INCHES,
        point.surface_pressure_pa / PASCALS_PER_INHG,
        ratio.value(),
    ])
}

/// Everything `predict` reports alongside the number.
#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub valid_time: DateTime<Utc>,
    pub station: GeoLocation,
    pub source_point: GeoLocation,
    pub distance_m: f64,
    /// Features in physical units, before any stored standardization.
    pub features: BTreeMap<String, f64>,
    pub prediction_wm2: f64,
    pub potential_irradiance_wm2: f64,
    pub clear_sky_index: f64,
}

/// Applies a loaded model to physical-unit features: stored
/// standardization first when present, then the forward pass, then the
/// physical floor at zero.
pub fn apply_model(
    model: &crate::nn::MLPModel,
    stats: Option<&crate::dataset::FeatureStats>,
    features: &FeatureVector,
) -> Result<f64> {
    let model_input = match stats {
        Some(stats) => stats.apply(features),
        None => *features,
    };
    Ok(forward_one(model, model_input.as_slice())?.max(0.0))
}

/// Full inference path: nearest point, unit conversion, stored
/// standardization if the model carries one, forward pass, and the
/// physical floor at zero.
pub fn predict(
    model_path: &Path,
    grid_path: &Path,
    station: &GeoLocation,
    time_filter: Option<DateTime<Utc>>,
) -> Result<PredictReport> {
    let (model, stats) = load_model(model_path)?;
    let snapshot = read_grid_jsonl(grid_path, time_filter)?;
    let (point, distance_m) = nearest_grid_point(station, &snapshot)?;
    let features = to_features(point, station, snapshot.valid_time)?;
    let prediction_wm2 = apply_model(&model, stats.as_ref(), &features)?;

    let sun = sun_position(*station, snapshot.valid_time)?;
    let potential = potential_irradiance(&sun);
    let csi = clear_sky_index(prediction_wm2, potential)?;

    let feature_map = FEATURE_NAMES
        .iter()
        .zip(features.as_slice())
        .map(|(name, &v)| (name.to_string(), v))
        .collect();
    Ok(PredictReport {
        valid_time: snapshot.valid_time,
        station: *station,
        source_point: point.location()?,
        distance_m,
        features: feature_map,
        prediction_wm2,
        potential_irradiance_wm2: potential,
        clear_sky_index: csi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn geo(lat: f64, lon: f64) -> GeoLocation {
        GeoLocation::new(lat, lon).unwrap()
    }

    fn point(lat: f64, lon: f64) -> GridPoint {
        GridPoint {
            latitude_deg: lat,
            longitude_deg: lon,
            temp_k: 281.3,
            dewpoint_k: 276.0,
            wind_u_ms: 3.0,
            wind_v_ms: 4.0,
            precip_m: 0.0,
            surface_pressure_pa: 98_700.0,
        }
    }

    fn snapshot(points: Vec<GridPoint>) -> GridSnapshot {
        GridSnapshot {
            valid_time: Utc.with_ymd_and_hms(2024, 3, 1, 18, 0, 0).unwrap(),
            points,
        }
    }

    #[test]
    fn haversine_basics() {
        let a = geo(42.56, -83.64);
        assert_eq!(haversine_m(&a, &a), 0.0);

        // One degree of longitude along the equator.
        let d = haversine_m(&geo(0.0, 10.0), &geo(0.0, 11.0));
        let arc = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0;
        assert!((d - arc).abs() / arc < 0.001, "{d} vs {arc}");

        let b = geo(-12.0, 44.0);
        assert_eq!(haversine_m(&a, &b).to_bits(), haversine_m(&b, &a).to_bits());
    }

    #[test]
    fn nearest_picks_coincident_point_at_distance_zero() {
        let snap = snapshot(vec![point(42.0, -83.0), point(42.56, -83.64)]);
        let (p, d) = nearest_grid_point(&geo(42.56, -83.64), &snap).unwrap();
        assert_eq!(p.latitude_deg, 42.56);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn nearest_breaks_ties_lexicographically() {
        // Station on the equator midway between two symmetric points.
        let snap = snapshot(vec![point(1.0, 10.0), point(-1.0, 10.0)]);
        let (p, _) = nearest_grid_point(&geo(0.0, 10.0), &snap).unwrap();
        assert_eq!(p.latitude_deg, -1.0);
        assert!(nearest_grid_point(&geo(0.0, 0.0), &snapshot(vec![])).is_err());
    }

    #[test]
    fn nearest_matches_exhaustive_scan_with_independent_haversine() {
        // Independent oracle: spherical law of cosines distance, full scan.
        let oracle_distance = |a: &GeoLocation, b: &GeoLocation| {
            let (la, lb) = (a.latitude_deg().to_radians(), b.latitude_deg().to_radians());
            let dl = (b.longitude_deg() - a.longitude_deg()).to_radians();
            EARTH_RADIUS_M * (la.sin() * lb.sin() + la.cos() * lb.cos() * dl.cos()).clamp(-1.0, 1.0).acos()
        };
        let mut points = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                points.push(point(35.0 + i as f64 * 0.25, -90.0 + j as f64 * 0.25));
            }
        }
        let snap = snapshot(points);
        let mut rng_state = 123456789u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..250 {
            let station = geo(34.5 + next() * 3.5, -90.5 + next() * 3.5);
            let (got, _) = nearest_grid_point(&station, &snap).unwrap();
            let want = snap
                .points
                .iter()
                .min_by(|p, q| {
                    oracle_distance(&station, &p.location().unwrap())
                        .total_cmp(&oracle_distance(&station, &q.location().unwrap()))
                })
                .unwrap();
            assert_eq!(got, want, "station {station:?}");
        }
    }

    #[test]
    fn unit_conversions_match_direct_formulas() {
        assert_eq!(kelvin_to_fahrenheit(273.15), 32.0);
        let p = point(42.0, -83.0);
        let station = geo(42.0, -83.0);
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 18, 0, 0).unwrap();
        let f = to_features(&p, &station, t).unwrap();
        // u=3, v=4 -> 5 m/s.
        assert_abs_diff_eq!(f.get(3), 5.0 * MPS_TO_MPH, epsilon = 1e-12);
        assert_abs_diff_eq!(f.get(3), 11.1847, epsilon = 1e-3);
        assert_abs_diff_eq!(f.get(5), 98_700.0 / 3386.389, epsilon = 1e-12);
    }

    #[test]
    fn magnus_humidity_saturates_at_equal_dewpoint() {
        assert_eq!(magnus_relative_humidity_pct(280.0, 280.0), 100.0);
        for t in [250.0, 273.15, 300.0, 320.0] {
            for dk in [0.0, 2.0, 10.0, 40.0] {
                let rh = magnus_relative_humidity_pct(t, t - dk);
                assert!((0.0..=100.0).contains(&rh), "rh {rh} at T={t} spread={dk}");
            }
        }
    }

    #[test]
    fn supersaturated_point_is_rejected() {
        let mut p = point(42.0, -83.0);
        p.dewpoint_k = p.temp_k + 1.0;
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 18, 0, 0).unwrap();
        assert!(to_features(&p, &geo(42.0, -83.0), t).is_err());
    }

    #[test]
    fn grid_jsonl_round_trips_and_filters_by_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.jsonl");
        let snap = snapshot(vec![point(42.0, -83.0), point(42.25, -83.25)]);
        write_grid_jsonl(&path, &snap).unwrap();
        let loaded = read_grid_jsonl(&path, None).unwrap();
        assert_eq!(loaded, snap);
        let loaded = read_grid_jsonl(&path, Some(snap.valid_time)).unwrap();
        assert_eq!(loaded, snap);
        let missing = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();
        assert!(read_grid_jsonl(&path, Some(missing)).is_err());
    }

    #[test]
    fn grid_jsonl_with_two_times_requires_a_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.jsonl");
        let a = snapshot(vec![point(42.0, -83.0)]);
        let mut text = String::new();
        for (t, p) in [
            (a.valid_time, point(42.0, -83.0)),
            (a.valid_time + chrono::Duration::hours(6), point(42.0, -83.0)),
        ] {
            text.push_str(
                &serde_json::to_string(&GridLine {
                    valid_time: t,
                    point: p,
                })
                .unwrap(),
            );
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();
        assert!(read_grid_jsonl(&path, None).is_err());
        assert!(read_grid_jsonl(&path, Some(a.valid_time)).is_ok());
    }

    #[test]
    fn malformed_grid_line_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.jsonl");
        std::fs::write(&path, "{\"valid_time\":\"2024-03-01T18:00:00Z\"}\n").unwrap();
        assert!(matches!(read_grid_jsonl(&path, None), Err(Error::Format(_))));
    }

    proptest! {
        /// Each conversion applied then inverted lands within 1e-9 relative.
        #[test]
        fn conversions_invert(
            temp_k in 200.0f64..330.0,
            wind in 0.0f64..60.0,
            precip_m in 0.0f64..0.5,
            pressure in 50_000.0f64..110_000.0,
        ) {
            let f = kelvin_to_fahrenheit(temp_k);
            let back = (f - 32.0) * 5.0 / 9.0 + 273.15;
            prop_assert!((back - temp_k).abs() / temp_k < 1e-9);

            let mph = wind * MPS_TO_MPH;
            prop_assert!((mph / MPS_TO_MPH - wind).abs() <= 1e-9 * wind.max(1.0));

            let inches = precip_m * METERS_TO_INCHES;
            prop_assert!((inches / METERS_TO_INCHES - precip_m).abs() <= 1e-9 * precip_m.max(1.0));

            let inhg = pressure / PASCALS_PER_INHG;
            prop_assert!((inhg * PASCALS_PER_INHG - pressure).abs() / pressure < 1e-9);
        }

        #[test]
        fn magnus_stays_in_unit_range(
            t_c in -40.0f64..50.0,
            spread in 0.0f64..40.0,
        ) {
            let rh = magnus_relative_humidity_pct(273.15 + t_c, 273.15 + t_c - spread);
            prop_assert!((0.0..=100.0).contains(&rh));
        }
    }
}
