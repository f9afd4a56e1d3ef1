//! Enrichment and per-record durable storage.
//!
//! Keys are the report timestamp with colons and spaces removed so they
//! are safe on any filesystem or object store, and so lexicographic order
//! equals chronological order.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::report::{parse_timestamp, StationReport};
use crate::dataset::{FeatureVector, Sample};
use crate::error::{Error, Result};
use crate::solar::{solar_altitude_ratio, GeoLocation};

/// Filesystem- and object-store-safe record key, `YYYY-MM-DDTHH-MM-SS`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StorageKey(String);

impl StorageKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for StorageKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Maps a report timestamp to its storage key: colons become hyphens and
/// the date/time separator becomes `T`. Injective over distinct
/// timestamps, and key order equals timestamp order.
pub fn sanitize_key(last_update: &str) -> Result<StorageKey> {
    let t = parse_timestamp(last_update)?;
    Ok(StorageKey(t.format("%Y-%m-%dT%H-%M-%S").to_string()))
}

/// A station report joined with its sun-position feature and receipt
/// metadata; the unit stored one-per-file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    #[serde(flatten)]
    pub report: StationReport,
    /// solar_altitude_ratio(station, last_update), in [0, 1].
    pub solar_altitude_pct: f64,
    pub station: GeoLocation,
    pub received_at: DateTime<Utc>,
}

impl EnrichedRecord {
    pub fn storage_key(&self) -> Result<StorageKey> {
        sanitize_key(&self.report.last_update)
    }

    /// Converts to a training sample; the timestamp is metadata, never a
    /// feature.
    pub fn to_sample(&self) -> Result<Sample> {
        let features = FeatureVector::new([
            self.report.temp_f,
            self.report.humidity_pct,
            self.report.dew_point_f,
            self.report.wind_speed_mph,
            self.report.rain_in,
            self.report.barometer_inhg,
            self.solar_altitude_pct,
        ])?;
        Ok(Sample {
            features,
            target: self.report.solar_radiation_wm2,
            timestamp: self.report.last_update_utc()?,
        })
    }
}

/// Joins the sun-position feature onto a report.
pub fn enrich(
    report: StationReport,
    station: GeoLocation,
    now: DateTime<Utc>,
) -> Result<EnrichedRecord> {
    report.validate()?;
    let instant = report.last_update_utc()?;
    let ratio = solar_altitude_ratio(station, instant)?;
    Ok(EnrichedRecord {
        report,
        solar_altitude_pct: ratio.value(),
        station,
        received_at: now,
    })
}

/// Writes one JSON document at `root/<key>.json` via temp file + rename.
///
/// Re-storing identical content succeeds idempotently; the same key with
/// different content is a conflict.
pub fn store_record(record: &EnrichedRecord, root: &Path) -> Result<PathBuf> {
    let key = record.storage_key()?;
    let path = root.join(format!("{key}.json"));
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Internal(format!("record serialization: {e}")))?;

    if path.exists() {
        let existing = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if existing == json {
            return Ok(path);
        }
        return Err(Error::Conflict {
            key: key.as_str().to_string(),
        });
    }

    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-record-")
        .tempfile_in(root)
        .map_err(|e| Error::io(root, e))?;
    tmp.write_all(json.as_bytes()).map_err(|e| Error::io(&path, e))?;
    tmp.flush().map_err(|e| Error::io(&path, e))?;
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(path)
}

/// Reads one stored record back.
pub fn load_record(path: &Path) -> Result<EnrichedRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: EnrichedRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    record.report.validate()?;
    if !(0.0..=1.0).contains(&record.solar_altitude_pct) {
        return Err(Error::out_of_range(
            "solar_altitude_pct",
            "[0, 1]",
            record.solar_altitude_pct,
        ));
    }
    Ok(record)
}
