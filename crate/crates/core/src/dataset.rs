//! Sample extraction from stored records, deterministic splits and
//! batches, and the on-disk dataset table.
//!
//! The model contract is the feature order in [`FEATURE_NAMES`]; the
//! timestamp and the target never enter the feature vector.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::load_record;

/// Fixed feature order; also written into model files so a model cannot be
/// applied to a permuted vector.
pub const FEATURE_NAMES: [&str; 7] = [
    "temp_f",
    "humidity_pct",
    "dew_point_f",
    "wind_speed_mph",
    "rain_in",
    "barometer_inhg",
    "solar_altitude_pct",
];

pub const FEATURE_COUNT: usize = 7;

/// Ordered 7-tuple of finite weather features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector([f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("feature vector contains non-finite values"));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// One training example; the timestamp is metadata only.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    /// Measured solar radiation in W/m².
    pub target: f64,
    pub timestamp: DateTime<Utc>,
}

/// Train/validation partition produced by [`split`].
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

/// Outcome of a directory load: counts plus human-readable warnings.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Reads every record file under `root` into chronologically sorted
/// samples. Malformed files are skipped and counted; more than 10%
/// malformed is a hard error.
pub fn load_records(root: &Path) -> Result<(Vec<Sample>, LoadReport)> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    paths.sort();

    let mut report = LoadReport::default();
    let mut samples = Vec::with_capacity(paths.len());
    for path in &paths {
        match load_record(path).and_then(|record| record.to_sample()) {
            Ok(sample) => {
                samples.push(sample);
                report.loaded += 1;
            }
            Err(e) => {
                report.skipped += 1;
                report.warnings.push(format!("skipped {}: {e}", path.display()));
            }
        }
    }
    if report.skipped * 10 > paths.len() {
        return Err(Error::validation(format!(
            "{} of {} record files malformed (> 10%)",
            report.skipped,
            paths.len()
        )));
    }
    if paths.is_empty() {
        report.warnings.push(format!("no record files under {}", root.display()));
        log::warn!("no record files under {}", root.display());
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    samples.sort_by_key(|s| s.timestamp);
    Ok((samples, report))
}

/// Deterministic shuffle-then-partition. The same seed always yields the
/// same split; train size is `round(n * train_fraction)` clamped so both
/// parts are non-empty.
pub fn split(samples: Vec<Sample>, train_fraction: f64, split_seed: u64) -> Result<DatasetSplit> {
    if samples.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 samples to split, got {}",
            samples.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::out_of_range("train_fraction", "(0, 1)", train_fraction));
    }
    let mut shuffled = samples;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    shuffled.shuffle(&mut rng);
    let n = shuffled.len();
    let train_len = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let validation = shuffled.split_off(train_len);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        split_seed,
        train_fraction,
    })
}

/// One gradient-step batch: a feature matrix and matching target vector.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Reshuffles `samples` from `epoch_seed` and chunks them; the final
/// partial batch is included, so every sample appears exactly once.
pub fn batches(samples: &[Sample], batch_size: usize, epoch_seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::validation("batch_size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);

    let mut out = Vec::with_capacity(samples.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut features = Array2::zeros((chunk.len(), FEATURE_COUNT));
        let mut targets = Array1::zeros(chunk.len());
        for (row, &idx) in chunk.iter().enumerate() {
            for (col, &v) in samples[idx].features.as_slice().iter().enumerate() {
                features[[row, col]] = v;
            }
            targets[row] = samples[idx].target;
        }
        out.push(Batch { features, targets });
    }
    Ok(out)
}

/// Per-feature affine transform fitted on the training split.
///
/// Zero-variance features are stored as identity (mean 0, std 1) so that
/// applying the stats leaves them unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl FeatureStats {
    /// Population statistics over the given samples.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("cannot fit statistics on an empty split"));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; FEATURE_COUNT];
        for s in samples {
            for (i, &v) in s.features.as_slice().iter().enumerate() {
                mean[i] += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; FEATURE_COUNT];
        for s in samples {
            for (i, &v) in s.features.as_slice().iter().enumerate() {
                var[i] += (v - mean[i]) * (v - mean[i]);
            }
        }
        let mut std = vec![0.0; FEATURE_COUNT];
        let mut zero_variance = vec![false; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            std[i] = (var[i] / n).sqrt();
            if std[i] == 0.0 {
                zero_variance[i] = true;
                mean[i] = 0.0;
                std[i] = 1.0;
                log::warn!(
                    "feature `{}` has zero variance; left unscaled",
                    FEATURE_NAMES[i]
                );
            }
        }
        Ok(FeatureStats {
            mean,
            std,
            zero_variance,
        })
    }

    /// Applies the transform. Not idempotent: applying twice shifts and
    /// scales twice.
    pub fn apply(&self, fv: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            out[i] = (fv.get(i) - self.mean[i]) / self.std[i];
        }
        FeatureVector(out)
    }

    pub fn apply_to_samples(&self, samples: &mut [Sample]) {
        for s in samples {
            s.features = self.apply(&s.features);
        }
    }
}

/// Fits statistics on the train split only and applies them to both
/// splits. Returns the transformed split and the fitted stats, which must
/// be stored beside the model for inference parity.
pub fn standardize(mut split: DatasetSplit) -> Result<(DatasetSplit, FeatureStats)> {
    let stats = FeatureStats::fit(&split.train)?;
    stats.apply_to_samples(&mut split.train);
    stats.apply_to_samples(&mut split.validation);
    Ok((split, stats))
}

/// Metadata preserved in the dataset file header comments.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub split_seed: u64,
    pub train_fraction: f64,
    pub standardize: bool,
    /// Present when `standardize` is set; fitted on the train split.
    pub stats: Option<FeatureStats>,
}

const DATASET_MAGIC: &str = "# solarcast-dataset v1";

/// Writes the columnar dataset file: `#` metadata lines, a header row
/// naming the 7 features plus target and timestamp, then one row per
/// sample in the given order. Feature values are stored raw (never
/// standardized); the header records how training should transform them.
pub fn write_dataset(path: &Path, samples: &[Sample], meta: &DatasetMeta) -> Result<()> {
    let mut out = String::new();
    out.push_str(DATASET_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "# split_seed={}", meta.split_seed);
    let _ = writeln!(out, "# train_fraction={}", meta.train_fraction);
    let _ = writeln!(out, "# standardize={}", meta.standardize);
    if let Some(stats) = &meta.stats {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "# feature_mean={}", join(&stats.mean));
        let _ = writeln!(out, "# feature_std={}", join(&stats.std));
    }
    out.push_str(&FEATURE_NAMES.join(","));
    out.push_str(",solar_radiation_wm2,timestamp\n");
    for s in samples {
        for v in s.features.as_slice() {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{}", s.target, s.timestamp.to_rfc3339());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a dataset file written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<(Vec<Sample>, DatasetMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().peekable();
    if lines.next() != Some(DATASET_MAGIC) {
        return Err(Error::Format(format!(
            "{} is not a solarcast dataset file",
            path.display()
        )));
    }
    let mut split_seed = 0u64;
    let mut train_fraction = 0.8f64;
    let mut standardize = false;
    let mut mean: Option<Vec<f64>> = None;
    let mut std: Option<Vec<f64>> = None;
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        let (key, value) = rest
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad metadata line: {line}")))?;
        match key {
            "split_seed" => {
                split_seed = value
                    .parse()
                    .map_err(|e| Error::Format(format!("split_seed: {e}")))?
            }
            "train_fraction" => {
                train_fraction = value
                    .parse()
                    .map_err(|e| Error::Format(format!("train_fraction: {e}")))?
            }
            "standardize" => {
                standardize = value
                    .parse()
                    .map_err(|e| Error::Format(format!("standardize: {e}")))?
            }
            "feature_mean" => mean = Some(parse_float_list(value)?),
            "feature_std" => std = Some(parse_float_list(value)?),
            other => return Err(Error::Format(format!("unknown metadata key `{other}`"))),
        }
        lines.next();
    }

    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing header row".into()))?;
    let expected = format!("{},solar_radiation_wm2,timestamp", FEATURE_NAMES.join(","));
    if header != expected {
        return Err(Error::Format(format!(
            "unexpected header row `{header}` (feature order mismatch)"
        )));
    }

    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != FEATURE_COUNT + 2 {
            return Err(Error::Format(format!(
                "row {} has {} columns, expected {}",
                lineno + 1,
                cols.len(),
                FEATURE_COUNT + 2
            )));
        }
        let mut values = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            values[i] = cols[i]
                .parse()
                .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 1)))?;
        }
        let target: f64 = cols[FEATURE_COUNT]
            .parse()
            .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 1)))?;
        let timestamp = DateTime::parse_from_rfc3339(cols[FEATURE_COUNT + 1])
            .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 1)))?
            .with_timezone(&Utc);
        samples.push(Sample {
            features: FeatureVector::new(values)?,
            target,
            timestamp,
        });
    }

    let stats = match (mean, std) {
        (Some(mean), Some(std)) => {
            if mean.len() != FEATURE_COUNT || std.len() != FEATURE_COUNT {
                return Err(Error::Format("feature stats arity mismatch".into()));
            }
            let zero_variance = std.iter().map(|&s| s == 1.0).collect::<Vec<_>>();
            let zero_variance = mean
                .iter()
                .zip(zero_variance)
                .map(|(&m, z)| z && m == 0.0)
                .collect();
            Some(FeatureStats {
                mean,
                std,
                zero_variance,
            })
        }
        (None, None) => None,
        _ => return Err(Error::Format("feature_mean/feature_std must appear together".into())),
    };
    if standardize && stats.is_none() {
        return Err(Error::Format(
            "standardize=true but no feature stats in header".into(),
        ));
    }
    Ok((
        samples,
        DatasetMeta {
            split_seed,
            train_fraction,
            standardize,
            stats,
        },
    ))
}

fn parse_float_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.parse().map_err(|e| Error::Format(format!("float list: {e}"))))
        .collect()
}
