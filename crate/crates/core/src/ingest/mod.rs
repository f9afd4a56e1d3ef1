//! Station report ingestion: HTTP intake, sun-position enrichment,
//! sanitized storage keys, and one durable JSON document per report.

mod report;
mod server;
mod store;

pub use report::{parse_station_report, parse_timestamp, PayloadFormat, StationReport};
pub use server::{router, serve, IngestState};
pub use store::{enrich, load_record, sanitize_key, store_record, EnrichedRecord, StorageKey};
