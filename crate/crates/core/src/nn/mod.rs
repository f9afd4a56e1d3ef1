//! From-scratch feed-forward regressor: Kaiming-normal init, ReLU layers,
//! MAE loss, and exact reverse-mode gradients.
//!
//! Everything is f64. The model is small enough that determinism and
//! gradient-check precision matter more than speed.

mod gradcheck;
mod io;
mod optim;

pub use gradcheck::{compare_gradients, grad_check, GradCheckReport, ParamCoord, ParamKind};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use optim::{
    adam_step, sgd_step, AdamState, Optimizer, SgdState, ADAM_DEFAULT_BETA1, ADAM_DEFAULT_BETA2,
    ADAM_DEFAULT_EPSILON, ADAM_DEFAULT_LR,
};

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and init seed of the regressor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MLPConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Extra ReLU after the output layer, pinning predictions at >= 0.
    pub final_relu: bool,
    pub init_seed: u64,
}

impl MLPConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::validation("input_dim must be >= 1"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.len() > 3 {
            return Err(Error::validation(format!(
                "hidden layer count must be within [1, 3], got {}",
                self.hidden_widths.len()
            )));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::validation("hidden widths must be >= 1"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer, ending in the single output neuron.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }
}

/// Weights and biases; weight matrices are fan_out x fan_in.
#[derive(Debug, Clone, PartialEq)]
pub struct MLPModel {
    config: MLPConfig,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MLPModel {
    /// Kaiming-normal init: weights ~ N(0, sqrt(2 / fan_in)), biases zero.
    /// Deterministic per `config.init_seed`.
    pub fn init(config: &MLPConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (fan_in, fan_out) in config.layer_dims() {
            let std = (2.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std)
                .map_err(|e| Error::Internal(format!("kaiming distribution: {e}")))?;
            let data: Vec<f64> = (0..fan_out * fan_in).map(|_| dist.sample(&mut rng)).collect();
            let w = Array2::from_shape_vec((fan_out, fan_in), data)
                .map_err(|e| Error::Internal(format!("weight shape: {e}")))?;
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MLPModel {
            config: config.clone(),
            weights,
            biases,
        })
    }

    /// Rebuilds a model from stored parameters, checking shape chaining.
    pub fn from_parameters(
        config: MLPConfig,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        if weights.len() != dims.len() || biases.len() != dims.len() {
            return Err(Error::Format(format!(
                "expected {} layers, got {} weight and {} bias tensors",
                dims.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (k, (fan_in, fan_out)) in dims.iter().enumerate() {
            if weights[k].dim() != (*fan_out, *fan_in) {
                return Err(Error::Format(format!(
                    "layer {k} weights are {:?}, expected ({fan_out}, {fan_in})",
                    weights[k].dim()
                )));
            }
            if biases[k].len() != *fan_out {
                return Err(Error::Format(format!(
                    "layer {k} biases are {}, expected {fan_out}",
                    biases[k].len()
                )));
            }
        }
        Ok(MLPModel {
            config,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &MLPConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Shape-chaining invariant; cheap enough to assert after every update.
    pub fn check_shapes(&self) -> Result<()> {
        for (k, (fan_in, fan_out)) in self.config.layer_dims().iter().enumerate() {
            if self.weights[k].dim() != (*fan_out, *fan_in) || self.biases[k].len() != *fan_out {
                return Err(Error::Internal(format!(
                    "layer {k} shape broke chaining: weights {:?}, biases {}",
                    self.weights[k].dim(),
                    self.biases[k].len()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }
}

/// Per-parameter partials of the loss, shape-congruent with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &MLPModel) -> Self {
        GradientSet {
            d_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            d_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn congruent_with(&self, model: &MLPModel) -> bool {
        self.d_weights.len() == model.weights.len()
            && self.d_biases.len() == model.biases.len()
            && self
                .d_weights
                .iter()
                .zip(&model.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .d_biases
                .iter()
                .zip(&model.biases)
                .all(|(g, b)| g.len() == b.len())
    }

    pub fn all_finite(&self) -> bool {
        self.d_weights.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self.d_biases.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Pre-activations and activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre_activations: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.input.nrows()
    }

    /// Pre-activation matrices per layer (batch x fan_out).
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre_activations
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Subgradient at 0 is 0.
fn relu_prime(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Batched forward pass. `x` is batch x input_dim; returns one prediction
/// per row plus the cache for `backward`.
pub fn forward(model: &MLPModel, x: &Array2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
    if x.ncols() != model.config.input_dim {
        return Err(Error::validation(format!(
            "input has {} columns, model expects {}",
            x.ncols(),
            model.config.input_dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("input contains non-finite values"));
    }
    let layers = model.layer_count();
    let mut pre_activations = Vec::with_capacity(layers);
    let mut activations = Vec::with_capacity(layers);
    let mut a = x.clone();
    for (k, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let z = a.dot(&w.t()) + b;
        let is_output = k == layers - 1;
        let next = if !is_output || model.config.final_relu {
            relu(&z)
        } else {
            z.clone()
        };
        pre_activations.push(z);
        activations.push(next.clone());
        a = next;
    }
    let predictions = a.column(0).to_owned();
    Ok((
        predictions,
        ForwardCache {
            input: x.clone(),
            pre_activations,
            activations,
        },
    ))
}

/// Single-sample convenience over [`forward`].
pub fn forward_one(model: &MLPModel, x: &[f64]) -> Result<f64> {
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec())
        .map_err(|e| Error::Internal(format!("row shape: {e}")))?;
    let (pred, _) = forward(model, &row)?;
    Ok(pred[0])
}

/// Mean absolute error and its per-prediction subgradient.
///
/// loss = mean |pred - target|; gradient_i = sign(r_i) / N with sign(0) = 0.
pub fn mae_loss(predictions: &Array1<f64>, targets: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::validation(format!(
            "prediction/target length mismatch: {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    let residuals = predictions - targets;
    let loss = residuals.mapv(f64::abs).sum() / n;
    let grad = residuals.mapv(|r| {
        if r > 0.0 {
            1.0 / n
        } else if r < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    Ok((loss, grad))
}

/// Mean squared error, tracked alongside MAE in training stats.
pub fn mse_value(predictions: &Array1<f64>, targets: &Array1<f64>) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::validation(format!(
            "prediction/target length mismatch: {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    Ok((predictions - targets).mapv(|r| r * r).sum() / n)
}

/// Exact reverse-mode gradients of `mae_loss . forward` for every weight
/// and bias. `loss_gradient` is dL/dprediction per row of the cached batch.
pub fn backward(
    model: &MLPModel,
    cache: &ForwardCache,
    loss_gradient: &Array1<f64>,
) -> Result<GradientSet> {
    let layers = model.layer_count();
    if cache.pre_activations.len() != layers
        || cache.input.ncols() != model.config.input_dim
        || loss_gradient.len() != cache.batch_len()
    {
        return Err(Error::Internal(
            "forward cache does not match model and loss gradient".into(),
        ));
    }
    for (k, z) in cache.pre_activations.iter().enumerate() {
        if z.ncols() != model.biases[k].len() {
            return Err(Error::Internal(format!(
                "cache layer {k} width {} does not match model {}",
                z.ncols(),
                model.biases[k].len()
            )));
        }
    }

    let n = cache.batch_len();
    let mut delta = loss_gradient
        .view()
        .to_shape((n, 1))
        .map_err(|e| Error::Internal(format!("delta shape: {e}")))?
        .to_owned();
    if model.config.final_relu {
        delta = &delta * &relu_prime(&cache.pre_activations[layers - 1]);
    }

    let mut d_weights = vec![Array2::zeros((0, 0)); layers];
    let mut d_biases = vec![Array1::zeros(0); layers];
    for k in (0..layers).rev() {
        let a_prev = if k == 0 {
            &cache.input
        } else {
            &cache.activations[k - 1]
        };
        d_weights[k] = delta.t().dot(a_prev);
        d_biases[k] = delta.sum_axis(Axis(0));
        if k > 0 {
            delta = delta.dot(&model.weights[k]) * relu_prime(&cache.pre_activations[k - 1]);
        }
    }
    Ok(GradientSet {
        d_weights,
        d_biases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_config() -> MLPConfig {
        MLPConfig {
            input_dim: 2,
            hidden_widths: vec![1],
            final_relu: false,
            init_seed: 1,
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        let mut c = toy_config();
        c.hidden_widths = vec![];
        assert!(c.validate().is_err());
        c.hidden_widths = vec![4, 4, 4, 4];
        assert!(c.validate().is_err());
        c.hidden_widths = vec![4, 0];
        assert!(c.validate().is_err());
        c.hidden_widths = vec![4, 4, 4];
        assert!(c.validate().is_ok());
    }

    #[test]
    fn init_biases_are_exactly_zero() {
        let config = MLPConfig {
            input_dim: 7,
            hidden_widths: vec![32, 32],
            final_relu: false,
            init_seed: 42,
        };
        let model = MLPModel::init(&config).unwrap();
        for b in model.biases() {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_weight_std_matches_kaiming_at_large_sample() {
        // fan_in 7: std should be sqrt(2/7) ~= 0.5345.
        let config = MLPConfig {
            input_dim: 7,
            hidden_widths: vec![15_000],
            final_relu: false,
            init_seed: 9,
        };
        let model = MLPModel::init(&config).unwrap();
        let w = &model.weights()[0];
        let n = w.len() as f64;
        assert!(n >= 1e5);
        let mean = w.sum() / n;
        let var = w.mapv(|v| (v - mean) * (v - mean)).sum() / n;
        let expected = (2.0f64 / 7.0).sqrt();
        let rel = (var.sqrt() - expected).abs() / expected;
        assert!(rel < 0.02, "sample std off by {:.4}%", rel * 100.0);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let config = MLPConfig {
            input_dim: 7,
            hidden_widths: vec![8, 8],
            final_relu: true,
            init_seed: 123,
        };
        let a = MLPModel::init(&config).unwrap();
        let b = MLPModel::init(&config).unwrap();
        assert_eq!(a, b);

        let mut other = config.clone();
        other.init_seed = 124;
        let c = MLPModel::init(&other).unwrap();
        assert_ne!(a.weights()[0], c.weights()[0]);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let config = MLPConfig {
            input_dim: 3,
            hidden_widths: vec![4],
            final_relu: false,
            init_seed: 0,
        };
        let model = MLPModel::from_parameters(
            config.clone(),
            vec![Array2::zeros((4, 3)), Array2::zeros((1, 4))],
            vec![Array1::zeros(4), Array1::zeros(1)],
        )
        .unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]];
        let (pred, _) = forward(&model, &x).unwrap();
        assert_eq!(pred, array![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_hand_computed_two_layer_formula() {
        // One hidden unit on two features:
        //   h = relu(0.5*x0 - 1.0*x1 + 0.25); y = 2.0*h - 3.0
        let model = MLPModel::from_parameters(
            toy_config(),
            vec![array![[0.5, -1.0]], array![[2.0]]],
            vec![array![0.25], array![-3.0]],
        )
        .unwrap();
        let y = forward_one(&model, &[2.0, 0.5]).unwrap();
        let h = (0.5 * 2.0 - 1.0 * 0.5 + 0.25f64).max(0.0);
        assert_abs_diff_eq!(y, 2.0 * h - 3.0, epsilon = 1e-12);

        // Hidden unit driven negative: h clamps to 0, y = -3.
        let y = forward_one(&model, &[0.0, 5.0]).unwrap();
        assert_abs_diff_eq!(y, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn final_relu_clamps_negative_outputs_to_zero() {
        let mut config = toy_config();
        config.final_relu = true;
        let model = MLPModel::from_parameters(
            config,
            vec![array![[0.5, -1.0]], array![[2.0]]],
            vec![array![0.25], array![-3.0]],
        )
        .unwrap();
        // Same contrived input as above drives the pre-output to -3.
        let y = forward_one(&model, &[0.0, 5.0]).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let model = MLPModel::init(&toy_config()).unwrap();
        let wrong_arity = array![[1.0, 2.0, 3.0]];
        assert!(forward(&model, &wrong_arity).is_err());
        let non_finite = array![[1.0, f64::NAN]];
        assert!(forward(&model, &non_finite).is_err());
    }

    #[test]
    fn mae_loss_values_and_gradient() {
        let (loss, grad) = mae_loss(&array![1.0, 2.0], &array![1.0, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, array![0.0, 0.0]);

        let (loss, grad) = mae_loss(&array![2.0, 0.0], &array![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(loss, 1.0, epsilon = 1e-15);
        assert_eq!(grad, array![0.5, -0.5]);

        assert!(mae_loss(&array![1.0], &array![1.0, 2.0]).is_err());
    }

    #[test]
    fn mae_gradient_is_scale_invariant_in_residual_magnitude() {
        let targets = array![0.0, 0.0, 0.0];
        let (loss1, grad1) = mae_loss(&array![1.0, -2.0, 3.0], &targets).unwrap();
        let (loss5, grad5) = mae_loss(&array![5.0, -10.0, 15.0], &targets).unwrap();
        assert_abs_diff_eq!(loss5, 5.0 * loss1, epsilon = 1e-12);
        assert_eq!(grad1, grad5);
    }

    #[test]
    fn zero_loss_gradient_backprops_to_zero() {
        let model = MLPModel::init(&MLPConfig {
            input_dim: 7,
            hidden_widths: vec![4],
            final_relu: false,
            init_seed: 3,
        })
        .unwrap();
        let x = Array2::from_shape_fn((5, 7), |(i, j)| (i as f64 - j as f64) / 3.0);
        let (_, cache) = forward(&model, &x).unwrap();
        let grads = backward(&model, &cache, &Array1::zeros(5)).unwrap();
        assert!(grads.d_weights.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(grads.d_biases.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let model = MLPModel::init(&MLPConfig {
            input_dim: 7,
            hidden_widths: vec![5, 3],
            final_relu: false,
            init_seed: 11,
        })
        .unwrap();
        let x = Array2::from_shape_fn((6, 7), |(i, j)| ((i * 7 + j) as f64).sin());
        let y = Array1::from_shape_fn(6, |i| (i as f64) * 0.3 - 1.0);

        let (pred, cache) = forward(&model, &x).unwrap();
        let (_, grad) = mae_loss(&pred, &y).unwrap();
        let batch_grads = backward(&model, &cache, &grad).unwrap();

        // Per-sample loop oracle, averaged by hand.
        let mut acc = GradientSet::zeros_like(&model);
        for i in 0..6 {
            let xi = x.row(i).insert_axis(Axis(0)).to_owned();
            let yi = array![y[i]];
            let (pi, ci) = forward(&model, &xi).unwrap();
            let (_, gi) = mae_loss(&pi, &yi).unwrap();
            let gs = backward(&model, &ci, &gi).unwrap();
            for k in 0..gs.d_weights.len() {
                acc.d_weights[k] = &acc.d_weights[k] + &gs.d_weights[k];
                acc.d_biases[k] = &acc.d_biases[k] + &gs.d_biases[k];
            }
        }
        for k in 0..acc.d_weights.len() {
            acc.d_weights[k] /= 6.0;
            acc.d_biases[k] /= 6.0;
            for (a, b) in acc.d_weights[k].iter().zip(batch_grads.d_weights[k].iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for (a, b) in acc.d_biases[k].iter().zip(batch_grads.d_biases[k].iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let model_a = MLPModel::init(&MLPConfig {
            input_dim: 4,
            hidden_widths: vec![3],
            final_relu: false,
            init_seed: 1,
        })
        .unwrap();
        let model_b = MLPModel::init(&MLPConfig {
            input_dim: 4,
            hidden_widths: vec![5],
            final_relu: false,
            init_seed: 1,
        })
        .unwrap();
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64);
        let (pred, cache) = forward(&model_a, &x).unwrap();
        let (_, grad) = mae_loss(&pred, &Array1::zeros(2)).unwrap();
        let err = backward(&model_b, &cache, &grad).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn batch_forward_equals_row_wise_forward() {
        let model = MLPModel::init(&MLPConfig {
            input_dim: 7,
            hidden_widths: vec![9, 4],
            final_relu: true,
            init_seed: 77,
        })
        .unwrap();
        let x = Array2::from_shape_fn((13, 7), |(i, j)| ((i * 31 + j * 7) as f64 * 0.01).cos());
        let (batch_pred, _) = forward(&model, &x).unwrap();
        for i in 0..13 {
            let single = forward_one(&model, x.row(i).as_slice().unwrap()).unwrap();
            assert_abs_diff_eq!(batch_pred[i], single, epsilon = 1e-12);
        }
    }
}
