//! Sun position, solar noon, the solar-altitude ratio feature, and a
//! clear-sky irradiance model.
//!
//! The ephemeris is the NOAA low-precision one: a fractional-year Fourier
//! series for declination and the equation of time, then altitude/azimuth
//! from the hour angle. Accuracy is a few tenths of a degree in altitude,
//! which is plenty for a regression feature. Atmospheric refraction is
//! ignored.

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validity window of the ephemeris.
pub const MIN_YEAR: i32 = 1950;
pub const MAX_YEAR: i32 = 2100;

/// Obliquity bound on declination, with slack for series error.
pub const MAX_DECLINATION_DEG: f64 = 23.45 + 0.1;

/// Haurwitz clear-sky constants: peak irradiance and optical-depth factor.
const HAURWITZ_PEAK_WM2: f64 = 1098.0;
const HAURWITZ_EXTINCTION: f64 = 0.057;

/// Clear-sky index cap; values above 1 up to the cap are cloud-edge enhancement.
pub const CLEAR_SKY_INDEX_CAP: f64 = 1.5;

/// A latitude/longitude pair in degrees, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoLocation {
    latitude_deg: f64,
    longitude_deg: f64,
}

impl GeoLocation {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !latitude_deg.is_finite() || !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(Error::out_of_range("latitude_deg", "[-90, 90]", latitude_deg));
        }
        if !longitude_deg.is_finite() || !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(Error::out_of_range(
                "longitude_deg",
                "[-180, 180]",
                longitude_deg,
            ));
        }
        Ok(GeoLocation {
            latitude_deg,
            longitude_deg,
        })
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_deg
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_deg
    }
}

impl<'de> Deserialize<'de> for GeoLocation {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            latitude_deg: f64,
            longitude_deg: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoLocation::new(raw.latitude_deg, raw.longitude_deg).map_err(serde::de::Error::custom)
    }
}

/// Sun position for one location and instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SunPosition {
    /// Angle above the horizon; negative below it.
    pub altitude_deg: f64,
    /// Compass bearing of the sun, clockwise from north, in [0, 360).
    pub azimuth_deg: f64,
    pub declination_deg: f64,
    pub hour_angle_deg: f64,
}

/// Current altitude over the same day's solar-noon altitude, clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolarAltitudeRatio(f64);

impl SolarAltitudeRatio {
    pub fn value(&self) -> f64 {
        self.0
    }

    /// Accepts an already-computed ratio, e.g. from a stored record.
    pub fn from_value(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::out_of_range("solar_altitude_pct", "[0, 1]", value));
        }
        Ok(SolarAltitudeRatio(value))
    }
}

fn validate_instant(instant: DateTime<Utc>) -> Result<()> {
    let year = instant.year();
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(Error::validation(format!(
            "instant year {year} outside supported window [{MIN_YEAR}, {MAX_YEAR}]"
        )));
    }
    Ok(())
}

fn validate_date(date: NaiveDate) -> Result<()> {
    let year = date.year();
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(Error::validation(format!(
            "date year {year} outside supported window [{MIN_YEAR}, {MAX_YEAR}]"
        )));
    }
    Ok(())
}

/// Declination (radians) and equation of time (minutes) from the
/// fractional-year series, at `hours` UTC on `date`.
fn declination_and_eqtime(date: NaiveDate, hours: f64) -> (f64, f64) {
    let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
    let gamma =
        2.0 * std::f64::consts::PI / days_in_year * (date.ordinal0() as f64 + (hours - 12.0) / 24.0);
    let eqtime_min = 229.18
        * (0.000075 + 0.001868 * gamma.cos()
            - 0.032077 * gamma.sin()
            - 0.014615 * (2.0 * gamma).cos()
            - 0.040849 * (2.0 * gamma).sin());
    let decl_rad = 0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin()
        - 0.006758 * (2.0 * gamma).cos()
        + 0.000907 * (2.0 * gamma).sin()
        - 0.002697 * (3.0 * gamma).cos()
        + 0.00148 * (3.0 * gamma).sin();
    (decl_rad, eqtime_min)
}

/// Sun altitude/azimuth at `instant` (UTC) as seen from `loc`.
///
/// Pure: identical inputs give bit-identical outputs.
pub fn sun_position(loc: GeoLocation, instant: DateTime<Utc>) -> Result<SunPosition> {
    validate_instant(instant)?;
    let date = instant.date_naive();
    let hours = instant.hour() as f64
        + instant.minute() as f64 / 60.0
        + instant.second() as f64 / 3600.0;
    let (decl_rad, eqtime_min) = declination_and_eqtime(date, hours);

    // True solar time in minutes; 4 minutes of time per degree of longitude.
    let true_solar_min =
        hours * 60.0 + eqtime_min + 4.0 * loc.longitude_deg;
    let mut hour_angle_deg = true_solar_min / 4.0 - 180.0;
    hour_angle_deg = (hour_angle_deg + 180.0).rem_euclid(360.0) - 180.0;
    let ha_rad = hour_angle_deg.to_radians();

    let lat_rad = loc.latitude_deg.to_radians();
    let cos_zenith = lat_rad.sin() * decl_rad.sin()
        + lat_rad.cos() * decl_rad.cos() * ha_rad.cos();
    let altitude_deg = 90.0 - cos_zenith.clamp(-1.0, 1.0).acos().to_degrees();

    // Azimuth from north via the south-referenced atan2 form; degenerate
    // exactly at the poles and the zenith, where any bearing is acceptable.
    let az_south = f64::atan2(
        ha_rad.sin(),
        ha_rad.cos() * lat_rad.sin() - decl_rad.tan() * lat_rad.cos(),
    );
    let azimuth_deg = (az_south.to_degrees() + 180.0).rem_euclid(360.0);

    Ok(SunPosition {
        altitude_deg: altitude_deg.clamp(-90.0, 90.0),
        azimuth_deg: if azimuth_deg >= 360.0 { 0.0 } else { azimuth_deg },
        declination_deg: decl_rad.to_degrees(),
        hour_angle_deg,
    })
}

/// Instant of maximum solar altitude at `loc` during the UTC calendar `date`.
///
/// Solves the transit condition (hour angle zero): clock minutes
/// `720 - 4*longitude - eqtime`, iterating the equation of time at the
/// refined instant, wrapped into the requested date.
pub fn solar_noon(loc: GeoLocation, date: NaiveDate) -> Result<DateTime<Utc>> {
    validate_date(date)?;
    let mut minutes = 720.0 - 4.0 * loc.longitude_deg;
    for _ in 0..3 {
        let (_, eqtime_min) = declination_and_eqtime(date, minutes / 60.0);
        minutes = 720.0 - 4.0 * loc.longitude_deg - eqtime_min;
    }
    let minutes = minutes.rem_euclid(1440.0);
    let secs = (minutes * 60.0).round().clamp(0.0, 86399.0) as u32;
    let time = NaiveTime::from_num_seconds_from_midnight_opt(secs, 0)
        .ok_or_else(|| Error::Internal(format!("solar noon seconds out of range: {secs}")))?;
    Ok(Utc.from_utc_datetime(&date.and_time(time)))
}

/// Altitude at `instant` over altitude at the same UTC date's solar noon,
/// clamped to [0, 1]. Below-horizon instants and polar night map to 0.
pub fn solar_altitude_ratio(loc: GeoLocation, instant: DateTime<Utc>) -> Result<SolarAltitudeRatio> {
    let pos = sun_position(loc, instant)?;
    let noon = solar_noon(loc, instant.date_naive())?;
    let noon_alt = sun_position(loc, noon)?.altitude_deg;
    if noon_alt <= 0.0 {
        return Ok(SolarAltitudeRatio(0.0));
    }
    let ratio = (pos.altitude_deg.max(0.0) / noon_alt).clamp(0.0, 1.0);
    Ok(SolarAltitudeRatio(ratio))
}

/// Clear-sky surface irradiance for a given sun position, in W/m².
///
/// Haurwitz model: `1098 * sin(alt) * exp(-0.057 / sin(alt))`, zero at and
/// below the horizon. Monotone in altitude, so it is usable as the
/// denominator of a clearness ratio. Swap the constants to change models.
pub fn potential_irradiance(pos: &SunPosition) -> f64 {
    let s = pos.altitude_deg.to_radians().sin();
    if s <= 0.0 {
        0.0
    } else {
        HAURWITZ_PEAK_WM2 * s * (-HAURWITZ_EXTINCTION / s).exp()
    }
}

/// Measured over potential irradiance, capped at 1.5; zero when the
/// potential is zero (night).
pub fn clear_sky_index(measured_wm2: f64, potential_wm2: f64) -> Result<f64> {
    if !measured_wm2.is_finite() || measured_wm2 < 0.0 {
        return Err(Error::out_of_range("measured_wm2", "[0, inf)", measured_wm2));
    }
    if !potential_wm2.is_finite() || potential_wm2 < 0.0 {
        return Err(Error::out_of_range(
            "potential_wm2",
            "[0, inf)",
            potential_wm2,
        ));
    }
    if potential_wm2 == 0.0 {
        return Ok(0.0);
    }
    Ok((measured_wm2 / potential_wm2).min(CLEAR_SKY_INDEX_CAP))
}
