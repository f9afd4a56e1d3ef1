//! Station report payloads.
//!
//! Stations send either a URL-encoded form (the ObserverIP wire format) or
//! a JSON object; both carry the same vendor field names and are
//! canonicalized into one [`StationReport`]. Unknown fields are ignored.
//!
//! Wire field mapping:
//!
//! | wire key        | field                | unit  |
//! |-----------------|----------------------|-------|
//! | `dateutc`       | `last_update`        | UTC `YYYY-MM-DD HH:MM:SS` |
//! | `tempf`         | `temp_f`             | °F    |
//! | `humidity`      | `humidity_pct`       | %     |
//! | `dewptf`        | `dew_point_f`        | °F    |
//! | `windspeedmph`  | `wind_speed_mph`     | mph   |
//! | `eventrainin`   | `rain_in`            | in    |
//! | `baromrelin`    | `barometer_inhg`     | inHg  |
//! | `solarradiation`| `solar_radiation_wm2`| W/m²  |
//! | `uv`            | `uv_index` (optional)| —     |

use std::collections::HashMap;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One canonicalized station observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationReport {
    /// Timestamp string exactly as sent by the station.
    pub last_update: String,
    pub temp_f: f64,
    pub humidity_pct: f64,
    pub dew_point_f: f64,
    pub wind_speed_mph: f64,
    /// Event precipitation as reported; no differencing applied.
    pub rain_in: f64,
    pub barometer_inhg: f64,
    pub solar_radiation_wm2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uv_index: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadFormat {
    Json,
    FormUrlEncoded,
}

/// Parses `YYYY-MM-DD HH:MM:SS` (vendor format) or RFC 3339 into UTC.
pub fn parse_timestamp(value: &str) -> Result<DateTime<Utc>> {
    if let Ok(naive) = NaiveDateTime::parse_from_str(value, "%Y-%m-%d %H:%M:%S") {
        return Ok(naive.and_utc());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(value) {
        return Ok(dt.with_timezone(&Utc));
    }
    Err(Error::Parse {
        field: "dateutc".into(),
        message: format!("`{value}` is not a `YYYY-MM-DD HH:MM:SS` or RFC 3339 timestamp"),
    })
}

fn numeric(fields: &HashMap<String, serde_json::Value>, key: &str) -> Result<f64> {
    let value = fields
        .get(key)
        .ok_or_else(|| Error::MissingField(key.to_string()))?;
    match value {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| Error::Parse {
            field: key.into(),
            message: format!("`{n}` does not fit in f64"),
        }),
        serde_json::Value::String(s) => s.trim().parse().map_err(|_| Error::Parse {
            field: key.into(),
            message: format!("`{s}` is not a number"),
        }),
        other => Err(Error::Parse {
            field: key.into(),
            message: format!("expected a number, got {other}"),
        }),
    }
}

fn optional_numeric(fields: &HashMap<String, serde_json::Value>, key: &str) -> Result<Option<f64>> {
    if fields.contains_key(key) {
        numeric(fields, key).map(Some)
    } else {
        Ok(None)
    }
}

fn text(fields: &HashMap<String, serde_json::Value>, key: &str) -> Result<String> {
    match fields.get(key) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::Parse {
            field: key.into(),
            message: format!("expected a string, got {other}"),
        }),
        None => Err(Error::MissingField(key.to_string())),
    }
}

fn build_report(fields: HashMap<String, serde_json::Value>) -> Result<StationReport> {
    let report = StationReport {
        last_update: text(&fields, "dateutc")?,
        temp_f: numeric(&fields, "tempf")?,
        humidity_pct: numeric(&fields, "humidity")?,
        dew_point_f: numeric(&fields, "dewptf")?,
        wind_speed_mph: numeric(&fields, "windspeedmph")?,
        rain_in: numeric(&fields, "eventrainin")?,
        barometer_inhg: numeric(&fields, "baromrelin")?,
        solar_radiation_wm2: numeric(&fields, "solarradiation")?,
        uv_index: optional_numeric(&fields, "uv")?,
    };
    report.validate()?;
    Ok(report)
}

impl StationReport {
    pub fn validate(&self) -> Result<()> {
        parse_timestamp(&self.last_update)?;
        let checks: [(&str, f64, &str, bool); 6] = [
            ("humidity", self.humidity_pct, "[0, 100]", (0.0..=100.0).contains(&self.humidity_pct)),
            ("windspeedmph", self.wind_speed_mph, "[0, inf)", self.wind_speed_mph >= 0.0),
            ("eventrainin", self.rain_in, "[0, inf)", self.rain_in >= 0.0),
            ("solarradiation", self.solar_radiation_wm2, "[0, inf)", self.solar_radiation_wm2 >= 0.0),
            ("baromrelin", self.barometer_inhg, "(0, inf)", self.barometer_inhg > 0.0),
            ("uv", self.uv_index.unwrap_or(0.0), "[0, inf)", self.uv_index.unwrap_or(0.0) >= 0.0),
        ];
        for (field, value, bound, ok) in checks {
            if !value.is_finite() || !ok {
                return Err(Error::out_of_range(field, bound, value));
            }
        }
        if !self.temp_f.is_finite() || !self.dew_point_f.is_finite() {
            return Err(Error::validation("temperature fields must be finite"));
        }
        // Half a degree of sensor slack on the dew point.
        if self.dew_point_f > self.temp_f + 0.5 {
            return Err(Error::validation(format!(
                "`dewptf` ({}) must not exceed `tempf` ({}) + 0.5",
                self.dew_point_f, self.temp_f
            )));
        }
        Ok(())
    }

    pub fn last_update_utc(&self) -> Result<DateTime<Utc>> {
        parse_timestamp(&self.last_update)
    }

    /// Serializes to the JSON wire form (vendor field names).
    pub fn to_json_body(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("dateutc".into(), self.last_update.clone().into());
        map.insert("tempf".into(), self.temp_f.into());
        map.insert("humidity".into(), self.humidity_pct.into());
        map.insert("dewptf".into(), self.dew_point_f.into());
        map.insert("windspeedmph".into(), self.wind_speed_mph.into());
        map.insert("eventrainin".into(), self.rain_in.into());
        map.insert("baromrelin".into(), self.barometer_inhg.into());
        map.insert("solarradiation".into(), self.solar_radiation_wm2.into());
        if let Some(uv) = self.uv_index {
            map.insert("uv".into(), uv.into());
        }
        serde_json::Value::Object(map).to_string()
    }

    /// Serializes to the URL-encoded wire form (vendor field names).
    pub fn to_form_body(&self) -> String {
        let mut pairs = url::form_urlencoded::Serializer::new(String::new());
        pairs.append_pair("dateutc", &self.last_update);
        pairs.append_pair("tempf", &self.temp_f.to_string());
        pairs.append_pair("humidity", &self.humidity_pct.to_string());
        pairs.append_pair("dewptf", &self.dew_point_f.to_string());
        pairs.append_pair("windspeedmph", &self.wind_speed_mph.to_string());
        pairs.append_pair("eventrainin", &self.rain_in.to_string());
        pairs.append_pair("baromrelin", &self.barometer_inhg.to_string());
        pairs.append_pair("solarradiation", &self.solar_radiation_wm2.to_string());
        if let Some(uv) = self.uv_index {
            pairs.append_pair("uv", &uv.to_string());
        }
        pairs.finish()
    }
}

/// Parses a raw request payload in either wire format.
pub fn parse_station_report(body: &[u8], format: PayloadFormat) -> Result<StationReport> {
    if body.is_empty() {
        return Err(Error::validation("empty request body"));
    }
    let fields: HashMap<String, serde_json::Value> = match format {
        PayloadFormat::Json => {
            let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| Error::Parse {
                field: "body".into(),
                message: format!("invalid JSON: {e}"),
            })?;
            match value {
                serde_json::Value::Object(map) => map.into_iter().collect(),
                other => {
                    return Err(Error::Parse {
                        field: "body".into(),
                        message: format!("expected a JSON object, got {other}"),
                    })
                }
            }
        }
        PayloadFormat::FormUrlEncoded => url::form_urlencoded::parse(body)
            .map(|(k, v)| (k.into_owned(), serde_json::Value::String(v.into_owned())))
            .collect(),
    };
    build_report(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const JSON_BODY: &str = r#"{"tempf":68.0,"humidity":50,"dewptf":48.5,"windspeedmph":3.1,"eventrainin":0.0,"baromrelin":29.92,"solarradiation":412.3,"dateutc":"2024-03-01 17:30:16"}"#;

    #[test]
    fn parses_json_payload() {
        let report = parse_station_report(JSON_BODY.as_bytes(), PayloadFormat::Json).unwrap();
        assert_eq!(report.temp_f, 68.0);
        assert_eq!(report.solar_radiation_wm2, 412.3);
        assert_eq!(report.last_update, "2024-03-01 17:30:16");
        assert_eq!(report.uv_index, None);
    }

    #[test]
    fn form_payload_parses_to_the_same_report() {
        let json = parse_station_report(JSON_BODY.as_bytes(), PayloadFormat::Json).unwrap();
        let form = "tempf=68.0&humidity=50&dewptf=48.5&windspeedmph=3.1&eventrainin=0.0&baromrelin=29.92&solarradiation=412.3&dateutc=2024-03-01%2017%3A30%3A16";
        let parsed = parse_station_report(form.as_bytes(), PayloadFormat::FormUrlEncoded).unwrap();
        assert_eq!(parsed, json);
    }

    #[test]
    fn out_of_range_humidity_names_field_and_bound() {
        let body = JSON_BODY.replace("\"humidity\":50", "\"humidity\":140");
        let err = parse_station_report(body.as_bytes(), PayloadFormat::Json).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("humidity"), "{msg}");
        assert!(msg.contains("[0, 100]"), "{msg}");
    }

    #[test]
    fn missing_field_is_named() {
        let body = JSON_BODY.replace("\"tempf\":68.0,", "");
        let err = parse_station_report(body.as_bytes(), PayloadFormat::Json).unwrap_err();
        assert!(matches!(err, Error::MissingField(ref f) if f == "tempf"));
    }

    #[test]
    fn unparseable_number_is_a_type_error() {
        let body = JSON_BODY.replace("68.0", "\"warm\"");
        let err = parse_station_report(body.as_bytes(), PayloadFormat::Json).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "tempf"));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let body = JSON_BODY.replace(
            "\"tempf\":68.0,",
            "\"tempf\":68.0,\"stationtype\":\"AMBWeatherV4\",",
        );
        assert!(parse_station_report(body.as_bytes(), PayloadFormat::Json).is_ok());
    }

    #[test]
    fn dew_point_above_temperature_is_rejected() {
        let body = JSON_BODY.replace("\"dewptf\":48.5", "\"dewptf\":70.0");
        assert!(parse_station_report(body.as_bytes(), PayloadFormat::Json).is_err());
    }

    #[test]
    fn empty_body_is_rejected() {
        assert!(parse_station_report(b"", PayloadFormat::Json).is_err());
    }

    fn arb_report() -> impl Strategy<Value = StationReport> {
        (
            -40.0f64..120.0,
            0.0f64..=100.0,
            0.0f64..30.0,
            0.0f64..5.0,
            25.0f64..32.0,
            0.0f64..1400.0,
            proptest::option::of(0.0f64..12.0),
            0u32..86_400,
        )
            .prop_map(|(temp, hum, wind, rain, baro, solar, uv, sec)| {
                let t = chrono::NaiveDate::from_ymd_opt(2024, 3, 1)
                    .unwrap()
                    .and_hms_opt(sec / 3600, (sec / 60) % 60, sec % 60)
                    .unwrap();
                StationReport {
                    last_update: t.format("%Y-%m-%d %H:%M:%S").to_string(),
                    temp_f: temp,
                    humidity_pct: hum,
                    dew_point_f: temp - 5.0,
                    wind_speed_mph: wind,
                    rain_in: rain,
                    barometer_inhg: baro,
                    solar_radiation_wm2: solar,
                    uv_index: uv,
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity_in_both_formats(report in arb_report()) {
            let via_json = parse_station_report(
                report.to_json_body().as_bytes(),
                PayloadFormat::Json,
            ).unwrap();
            prop_assert_eq!(&via_json, &report);

            let via_form = parse_station_report(
                report.to_form_body().as_bytes(),
                PayloadFormat::FormUrlEncoded,
            ).unwrap();
            prop_assert_eq!(&via_form, &report);
        }
    }
}
