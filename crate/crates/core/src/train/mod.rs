//! Training loop, hyperparameter sweep, and the SGD-vs-Adam comparison
//! experiment.
//!
//! Runs are fully deterministic: the epoch shuffle is seeded with
//! `shuffle_seed + epoch_index` and each sweep cell trains independently
//! with the same data seed.

mod curves;

pub use curves::{emit_curves, read_curve_csv, write_curve_csv, write_curve_svg, CurvePaths};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{batches, DatasetSplit, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::nn::{
    backward, forward, mae_loss, mse_value, AdamState, MLPConfig, MLPModel, Optimizer, SgdState,
    ADAM_DEFAULT_BETA1, ADAM_DEFAULT_BETA2, ADAM_DEFAULT_EPSILON, ADAM_DEFAULT_LR,
};

/// Loss deltas below this for [`FROZEN_WINDOW`] consecutive epochs flag a
/// run as frozen.
pub const FROZEN_DELTA: f64 = 1e-12;
pub const FROZEN_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerChoice {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerChoice {
    pub fn sgd_default() -> Self {
        OptimizerChoice::Sgd { lr: 0.001 }
    }

    pub fn adam_default() -> Self {
        OptimizerChoice::Adam {
            lr: ADAM_DEFAULT_LR,
            beta1: ADAM_DEFAULT_BETA1,
            beta2: ADAM_DEFAULT_BETA2,
            epsilon: ADAM_DEFAULT_EPSILON,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerChoice::Sgd { .. } => "sgd",
            OptimizerChoice::Adam { .. } => "adam",
        }
    }

    fn build(&self, model: &MLPModel) -> Optimizer {
        match *self {
            OptimizerChoice::Sgd { lr } => Optimizer::Sgd(SgdState { lr }),
            OptimizerChoice::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => Optimizer::Adam(AdamState::new(lr, beta1, beta2, epsilon, model)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerChoice,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub model_config: MLPConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        self.model_config.validate()
    }
}

/// Per-epoch training statistics. MAE is the primary loss; MSE is logged
/// as a secondary column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch_index: usize,
    /// Mean per-sample absolute error over the epoch's batches, W/m².
    pub mean_train_mae: f64,
    /// Mean per-sample squared error over the epoch's batches, (W/m²)².
    pub mean_train_mse: f64,
    pub wall_seconds: f64,
    pub diverged: bool,
    pub frozen: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MLPModel,
    pub epochs: Vec<EpochStats>,
    pub optimizer_steps: u64,
}

impl TrainOutcome {
    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn diverged(&self) -> bool {
        self.epochs.iter().any(|e| e.diverged)
    }

    pub fn frozen(&self) -> bool {
        self.epochs.iter().any(|e| e.frozen)
    }
}

/// Marks epochs where the loss moved less than [`FROZEN_DELTA`] for
/// [`FROZEN_WINDOW`] consecutive epoch-to-epoch deltas.
pub fn frozen_flags(losses: &[f64]) -> Vec<bool> {
    let mut flags = vec![false; losses.len()];
    for i in FROZEN_WINDOW..losses.len() {
        let window_ok = (i - FROZEN_WINDOW + 1..=i)
            .all(|k| (losses[k] - losses[k - 1]).abs() < FROZEN_DELTA);
        flags[i] = window_ok;
    }
    flags
}

/// Trains a fresh model on the split's training side.
///
/// Training halts early on a non-finite loss; the stats gathered so far
/// are returned with the final epoch flagged `diverged`.
pub fn train(config: &TrainConfig, split: &DatasetSplit) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::validation("training split is empty"));
    }
    if config.model_config.input_dim != FEATURE_COUNT {
        return Err(Error::validation(format!(
            "model input_dim {} does not match the {FEATURE_COUNT}-feature contract",
            config.model_config.input_dim
        )));
    }

    let mut model = MLPModel::init(&config.model_config)?;
    let mut optimizer = config.optimizer.build(&model);
    let n = split.train.len() as f64;
    let mut stats: Vec<EpochStats> = Vec::with_capacity(config.epochs);
    let mut losses: Vec<f64> = Vec::with_capacity(config.epochs);
    let mut steps: u64 = 0;

    for epoch in 1..=config.epochs {
        let start = std::time::Instant::now();
        let epoch_seed = config.shuffle_seed.wrapping_add(epoch as u64 - 1);
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        let mut bad_loss = false;

        for batch in batches(&split.train, config.batch_size, epoch_seed)? {
            let (pred, cache) = forward(&model, &batch.features)?;
            let (batch_mae, loss_grad) = mae_loss(&pred, &batch.targets)?;
            let batch_mse = mse_value(&pred, &batch.targets)?;
            abs_sum += batch_mae * batch.len() as f64;
            sq_sum += batch_mse * batch.len() as f64;
            if !batch_mae.is_finite() {
                bad_loss = true;
                break;
            }
            let grads = backward(&model, &cache, &loss_grad)?;
            optimizer.step(&mut model, &grads)?;
            steps += 1;
        }

        let mean_mae = abs_sum / n;
        let mean_mse = sq_sum / n;
        let diverged = bad_loss || !mean_mae.is_finite();
        losses.push(mean_mae);
        let frozen = *frozen_flags(&losses).last().unwrap_or(&false);
        stats.push(EpochStats {
            epoch_index: epoch,
            mean_train_mae: mean_mae,
            mean_train_mse: mean_mse,
            wall_seconds: start.elapsed().as_secs_f64(),
            diverged,
            frozen,
        });
        if diverged {
            log::warn!("epoch {epoch}: non-finite loss, halting");
            break;
        }
    }

    model.check_shapes()?;
    Ok(TrainOutcome {
        model,
        epochs: stats,
        optimizer_steps: steps,
    })
}

/// Grid over depth, width, trailing ReLU, and optimizer.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub final_relu: Vec<bool>,
    pub optimizers: Vec<OptimizerChoice>,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub init_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            depths: vec![1, 2, 3],
            widths: vec![8, 16, 32, 64, 128, 256],
            final_relu: vec![false, true],
            optimizers: vec![OptimizerChoice::sgd_default(), OptimizerChoice::adam_default()],
            epochs: 100,
            batch_size: 128,
            shuffle_seed: 0,
            init_seed: 0,
        }
    }
}

impl SweepGrid {
    pub fn configs(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &depth in &self.depths {
            for &width in &self.widths {
                for &final_relu in &self.final_relu {
                    for optimizer in &self.optimizers {
                        out.push(TrainConfig {
                            optimizer: *optimizer,
                            epochs: self.epochs,
                            batch_size: self.batch_size,
                            shuffle_seed: self.shuffle_seed,
                            model_config: MLPConfig {
                                input_dim: FEATURE_COUNT,
                                hidden_widths: vec![width; depth],
                                final_relu,
                                init_seed: self.init_seed,
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

/// One trained sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: TrainConfig,
    pub final_stats: EpochStats,
    pub param_count: usize,
    pub diverged: bool,
    pub frozen: bool,
}

#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best finite cell.
    pub best: Option<usize>,
}

impl SweepResult {
    pub fn best_row(&self) -> Option<&SweepRow> {
        self.best.map(|i| &self.rows[i])
    }
}

/// Trains every grid cell independently (in parallel; each cell owns its
/// model) and picks the argmin by final mean MAE. Diverged cells are
/// recorded but excluded from `best`; ties break toward fewer parameters,
/// then the lower init seed.
pub fn sweep(split: &DatasetSplit, grid: &SweepGrid) -> Result<SweepResult> {
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(Error::validation("sweep grid is empty"));
    }
    let rows: Vec<SweepRow> = configs
        .into_par_iter()
        .map(|config| {
            let outcome = train(&config, split)?;
            let final_stats = *outcome
                .final_stats()
                .ok_or_else(|| Error::Internal("training produced no epochs".into()))?;
            Ok(SweepRow {
                param_count: config.model_config.param_count(),
                diverged: outcome.diverged(),
                frozen: outcome.frozen(),
                config,
                final_stats,
            })
        })
        .collect::<Result<_>>()?;

    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.diverged && r.final_stats.mean_train_mae.is_finite())
        .min_by(|(_, a), (_, b)| {
            a.final_stats
                .mean_train_mae
                .total_cmp(&b.final_stats.mean_train_mae)
                .then(a.param_count.cmp(&b.param_count))
                .then(a.config.model_config.init_seed.cmp(&b.config.model_config.init_seed))
        })
        .map(|(i, _)| i);
    Ok(SweepResult { rows, best })
}

/// Output of [`compare_optimizers`].
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub sgd: Vec<EpochStats>,
    pub adam: Vec<EpochStats>,
    pub sgd_diverged: bool,
    pub sgd_frozen: bool,
    pub adam_diverged: bool,
    pub adam_frozen: bool,
    /// True when the dataset was not standardized; raw-unit feature scales
    /// carry a higher divergence risk.
    pub raw_units: bool,
}

impl CompareReport {
    pub fn verdict(&self) -> String {
        let sgd_state = if self.sgd_diverged {
            "diverged"
        } else if self.sgd_frozen {
            "froze"
        } else {
            "ran to completion"
        };
        let mut out = format!(
            "sgd {}; adam final MAE {:.4} vs sgd final MAE {:.4}",
            sgd_state,
            self.adam.last().map(|e| e.mean_train_mae).unwrap_or(f64::NAN),
            self.sgd.last().map(|e| e.mean_train_mae).unwrap_or(f64::NAN),
        );
        if self.raw_units {
            out.push_str("; features are in raw units (unstandardized): higher divergence risk");
        }
        out
    }
}

/// Runs SGD(lr 0.001, batch 128) and Adam(defaults) on the 7-32-32-1
/// architecture over the same split and seeds.
pub fn compare_optimizers(
    split: &DatasetSplit,
    epochs: usize,
    raw_units: bool,
    seed: u64,
) -> Result<CompareReport> {
    let model_config = MLPConfig {
        input_dim: FEATURE_COUNT,
        hidden_widths: vec![32, 32],
        final_relu: false,
        init_seed: seed,
    };
    let sgd_outcome = train(
        &TrainConfig {
            optimizer: OptimizerChoice::sgd_default(),
            epochs,
            batch_size: 128,
            shuffle_seed: seed,
            model_config: model_config.clone(),
        },
        split,
    )?;
    let adam_outcome = train(
        &TrainConfig {
            optimizer: OptimizerChoice::adam_default(),
            epochs,
            batch_size: 128,
            shuffle_seed: seed,
            model_config,
        },
        split,
    )?;
    Ok(CompareReport {
        sgd_diverged: sgd_outcome.diverged(),
        sgd_frozen: sgd_outcome.frozen(),
        adam_diverged: adam_outcome.diverged(),
        adam_frozen: adam_outcome.frozen(),
        sgd: sgd_outcome.epochs,
        adam: adam_outcome.epochs,
        raw_units,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureVector, Sample};
    use crate::nn::{sgd_step, GradientSet};
    use chrono::{TimeZone, Utc};

    fn tiny_split(samples: Vec<Sample>) -> DatasetSplit {
        DatasetSplit {
            train: samples,
            validation: vec![],
            split_seed: 0,
            train_fraction: 1.0,
        }
    }

    fn sample(features: [f64; 7], target: f64, i: i64) -> Sample {
        Sample {
            features: FeatureVector::new(features).unwrap(),
            target,
            timestamp: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap()
                + chrono::Duration::seconds(i),
        }
    }

    fn constant_target_split(n: usize, c: f64) -> DatasetSplit {
        let samples = (0..n)
            .map(|i| {
                let x = (i as f64 / n as f64) * 2.0 - 1.0;
                sample([x, -x, x * x, 0.5 * x, -0.25, x.sin(), 0.3], c, i as i64)
            })
            .collect();
        tiny_split(samples)
    }

    #[test]
    fn constant_target_is_learned_by_adam() {
        // The optimum is a bias-only solution; MAE must fall well below
        // its starting value.
        let split = constant_target_split(64, 5.0);
        let config = TrainConfig {
            optimizer: OptimizerChoice::adam_default(),
            epochs: 200,
            batch_size: 16,
            shuffle_seed: 1,
            model_config: MLPConfig {
                input_dim: 7,
                hidden_widths: vec![8],
                final_relu: false,
                init_seed: 1,
            },
        };
        let outcome = train(&config, &split).unwrap();
        let first = outcome.epochs.first().unwrap().mean_train_mae;
        let last = outcome.epochs.last().unwrap().mean_train_mae;
        assert!(
            last < first * 0.01,
            "MAE {last} did not drop below 1% of initial {first}"
        );
    }

    #[test]
    fn full_batch_single_epoch_equals_one_hand_applied_step() {
        // One sample so batch assembly order cannot matter.
        let split = tiny_split(vec![sample([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 2.0, 0)]);
        let model_config = MLPConfig {
            input_dim: 7,
            hidden_widths: vec![4],
            final_relu: false,
            init_seed: 9,
        };
        let config = TrainConfig {
            optimizer: OptimizerChoice::Sgd { lr: 0.05 },
            epochs: 1,
            batch_size: usize::MAX,
            shuffle_seed: 0,
            model_config: model_config.clone(),
        };
        let outcome = train(&config, &split).unwrap();
        assert_eq!(outcome.optimizer_steps, 1);

        let mut expected = MLPModel::init(&model_config).unwrap();
        let b = batches(&split.train, usize::MAX, 0).unwrap();
        let (pred, cache) = forward(&expected, &b[0].features).unwrap();
        let (_, grad) = mae_loss(&pred, &b[0].targets).unwrap();
        let grads = backward(&expected, &cache, &grad).unwrap();
        sgd_step(&mut expected, &grads, &SgdState { lr: 0.05 }).unwrap();
        assert_eq!(outcome.model, expected);
    }

    #[test]
    fn training_is_deterministic() {
        let split = constant_target_split(48, 3.0);
        let config = TrainConfig {
            optimizer: OptimizerChoice::adam_default(),
            epochs: 12,
            batch_size: 8,
            shuffle_seed: 5,
            model_config: MLPConfig {
                input_dim: 7,
                hidden_widths: vec![6, 6],
                final_relu: true,
                init_seed: 5,
            },
        };
        let a = train(&config, &split).unwrap();
        let b = train(&config, &split).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn step_count_is_epochs_times_batches() {
        let split = constant_target_split(50, 1.0);
        let config = TrainConfig {
            optimizer: OptimizerChoice::sgd_default(),
            epochs: 7,
            batch_size: 16,
            shuffle_seed: 0,
            model_config: MLPConfig {
                input_dim: 7,
                hidden_widths: vec![4],
                final_relu: false,
                init_seed: 0,
            },
        };
        let outcome = train(&config, &split).unwrap();
        // ceil(50/16) = 4 batches per epoch.
        assert_eq!(outcome.optimizer_steps, 7 * 4);
        assert_eq!(outcome.epochs.len(), 7);
    }

    #[test]
    fn huge_learning_rate_flags_divergence_and_halts() {
        let split = constant_target_split(64, 100.0);
        let config = TrainConfig {
            optimizer: OptimizerChoice::Sgd { lr: 1e6 },
            epochs: 100,
            batch_size: 16,
            shuffle_seed: 0,
            model_config: MLPConfig {
                input_dim: 7,
                hidden_widths: vec![32, 32],
                final_relu: false,
                init_seed: 0,
            },
        };
        let outcome = train(&config, &split).unwrap();
        assert!(outcome.diverged());
        assert!(outcome.epochs.len() < 100);
        assert!(outcome.epochs.last().unwrap().diverged);
    }

    #[test]
    fn frozen_flags_fire_only_on_flat_sequences() {
        let monotone: Vec<f64> = (1..100).map(|k| 100.0 / k as f64).collect();
        assert!(frozen_flags(&monotone).iter().all(|&f| !f));

        let mut flat = vec![5.0, 4.0, 3.0];
        flat.extend(std::iter::repeat(2.0).take(15));
        let flags = frozen_flags(&flat);
        assert!(flags.iter().any(|&f| f));
        // The first flagged epoch needs FROZEN_WINDOW flat deltas behind it.
        let first = flags.iter().position(|&f| f).unwrap();
        assert_eq!(first, 3 + FROZEN_WINDOW);
    }

    #[test]
    fn frozen_flag_appears_in_epoch_stats_for_a_stuck_run() {
        // lr = 0 never changes the model, so the loss is exactly flat.
        let split = constant_target_split(32, 2.0);
        let config = TrainConfig {
            optimizer: OptimizerChoice::Sgd { lr: 0.0 },
            epochs: 15,
            batch_size: 32,
            shuffle_seed: 0,
            model_config: MLPConfig {
                input_dim: 7,
                hidden_widths: vec![4],
                final_relu: false,
                init_seed: 2,
            },
        };
        let outcome = train(&config, &split).unwrap();
        assert!(outcome.frozen());
    }

    #[test]
    fn singleton_sweep_selects_its_only_cell() {
        let split = constant_target_split(40, 2.0);
        let grid = SweepGrid {
            depths: vec![1],
            widths: vec![8],
            final_relu: vec![false],
            optimizers: vec![OptimizerChoice::adam_default()],
            epochs: 3,
            batch_size: 16,
            shuffle_seed: 0,
            init_seed: 0,
        };
        let result = sweep(&split, &grid).unwrap();
        assert_eq!(result.rows.len(), 1);
        assert_eq!(result.best, Some(0));
    }

    #[test]
    fn diverged_cells_are_excluded_from_best() {
        let split = constant_target_split(40, 2.0);
        let grid = SweepGrid {
            depths: vec![2],
            widths: vec![8],
            final_relu: vec![false],
            optimizers: vec![
                OptimizerChoice::Sgd { lr: 1e6 },
                OptimizerChoice::adam_default(),
            ],
            epochs: 10,
            batch_size: 16,
            shuffle_seed: 0,
            init_seed: 0,
        };
        let result = sweep(&split, &grid).unwrap();
        assert_eq!(result.rows.len(), 2);
        let best = result.best_row().unwrap();
        assert_eq!(best.config.optimizer.name(), "adam");
        assert!(result.rows.iter().any(|r| r.diverged));
    }

    #[test]
    fn default_grid_has_72_cells() {
        assert_eq!(SweepGrid::default().configs().len(), 3 * 6 * 2 * 2);
    }

    #[test]
    fn compare_emits_full_curves_for_both_optimizers() {
        let split = constant_target_split(48, 2.0);
        let report = compare_optimizers(&split, 5, true, 0).unwrap();
        assert_eq!(report.sgd.len(), 5);
        assert_eq!(report.adam.len(), 5);
        assert!(report.raw_units);
        assert!(report.verdict().contains("higher divergence risk"));
    }
}
