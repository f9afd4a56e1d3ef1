//! SGD and Adam update rules over [`MLPModel`] parameters.

use ndarray::{Array1, Array2};

use super::{GradientSet, MLPModel};
use crate::error::{Error, Result};

pub const ADAM_DEFAULT_LR: f64 = 0.001;
pub const ADAM_DEFAULT_BETA1: f64 = 0.9;
pub const ADAM_DEFAULT_BETA2: f64 = 0.999;
pub const ADAM_DEFAULT_EPSILON: f64 = 1e-8;

/// Plain stochastic gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdState {
    pub lr: f64,
}

/// Adam with bias correction; moment tensors are shape-congruent with the
/// model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment_w: Vec<Array2<f64>>,
    second_moment_w: Vec<Array2<f64>>,
    first_moment_b: Vec<Array1<f64>>,
    second_moment_b: Vec<Array1<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64, model: &MLPModel) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            epsilon,
            first_moment_w: model.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            second_moment_w: model.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            first_moment_b: model.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            second_moment_b: model.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            step_count: 0,
        }
    }

    pub fn with_defaults(model: &MLPModel) -> Self {
        Self::new(
            ADAM_DEFAULT_LR,
            ADAM_DEFAULT_BETA1,
            ADAM_DEFAULT_BETA2,
            ADAM_DEFAULT_EPSILON,
            model,
        )
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Either update rule, dispatched per step by the training loop.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(SgdState),
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, model: &mut MLPModel, grads: &GradientSet) -> Result<()> {
        match self {
            Optimizer::Sgd(state) => sgd_step(model, grads, state),
            Optimizer::Adam(state) => adam_step(model, grads, state),
        }
    }
}

fn check_congruence(model: &MLPModel, grads: &GradientSet) -> Result<()> {
    if !grads.congruent_with(model) {
        return Err(Error::validation(
            "gradient set is not shape-congruent with the model",
        ));
    }
    Ok(())
}

/// theta <- theta - lr * g for every parameter.
pub fn sgd_step(model: &mut MLPModel, grads: &GradientSet, state: &SgdState) -> Result<()> {
    check_congruence(model, grads)?;
    let lr = state.lr;
    for (w, g) in model.weights_mut().iter_mut().zip(&grads.d_weights) {
        w.zip_mut_with(g, |w, &g| *w -= lr * g);
    }
    for (b, g) in model.biases_mut().iter_mut().zip(&grads.d_biases) {
        b.zip_mut_with(g, |b, &g| *b -= lr * g);
    }
    Ok(())
}

/// Standard Adam recurrence with bias correction:
///   m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
pub fn adam_step(model: &mut MLPModel, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    check_congruence(model, grads)?;
    if state.first_moment_w.len() != model.layer_count() {
        return Err(Error::validation(
            "optimizer state is not shape-congruent with the model",
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    for k in 0..model.layer_count() {
        let g = &grads.d_weights[k];
        state.first_moment_w[k].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        state.second_moment_w[k].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let m = &state.first_moment_w[k];
        let v = &state.second_moment_w[k];
        ndarray::Zip::from(&mut model.weights_mut()[k])
            .and(m)
            .and(v)
            .for_each(|w, &m, &v| {
                *w -= lr * (m / bias1) / ((v / bias2).sqrt() + eps);
            });

        let g = &grads.d_biases[k];
        state.first_moment_b[k].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        state.second_moment_b[k].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let m = &state.first_moment_b[k];
        let v = &state.second_moment_b[k];
        ndarray::Zip::from(&mut model.biases_mut()[k])
            .and(m)
            .and(v)
            .for_each(|b, &m, &v| {
                *b -= lr * (m / bias1) / ((v / bias2).sqrt() + eps);
            });
    }
    Ok(())
}
