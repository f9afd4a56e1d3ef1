//! Central finite-difference oracle for the backward pass.
//!
//! MAE over a ReLU network is piecewise linear in any single parameter, so
//! away from kinks the central difference is exact up to rounding. A
//! coordinate is excluded when the loss surface is non-differentiable
//! nearby: a pre-activation or residual within `kink_eps` of zero, or one
//! whose sign flips between the two probe points.

use ndarray::{Array1, Array2};

use super::{forward, mae_loss, GradientSet, MLPModel};
use crate::error::{Error, Result};

/// Relative-error denominators are floored here so that near-zero
/// gradient pairs are compared absolutely (at floor * tolerance).
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Flat coordinate of one parameter: layer, tensor kind, row-major index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCoord {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<ParamCoord>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Signs of every pre-activation plus the residuals, used to detect kink
/// crossings between probe points.
struct SurfaceSigns {
    pre_activation_signs: Vec<Vec<i8>>,
    residual_signs: Vec<i8>,
    near_kink: bool,
}

fn sign_of(v: f64, eps: f64) -> (i8, bool) {
    if v.abs() < eps {
        (0, true)
    } else if v > 0.0 {
        (1, false)
    } else {
        (-1, false)
    }
}

fn evaluate(
    model: &MLPModel,
    x: &Array2<f64>,
    y: &Array1<f64>,
    kink_eps: f64,
) -> Result<(f64, SurfaceSigns)> {
    let (pred, cache) = forward(model, x)?;
    let (loss, _) = mae_loss(&pred, y)?;
    let mut near_kink = false;
    let pre_activation_signs = cache
        .pre_activations()
        .iter()
        .map(|z| {
            z.iter()
                .map(|&v| {
                    let (s, near) = sign_of(v, kink_eps);
                    near_kink |= near;
                    s
                })
                .collect()
        })
        .collect();
    let residual_signs = pred
        .iter()
        .zip(y.iter())
        .map(|(&p, &t)| {
            let (s, near) = sign_of(p - t, kink_eps);
            near_kink |= near;
            s
        })
        .collect();
    Ok((
        loss,
        SurfaceSigns {
            pre_activation_signs,
            residual_signs,
            near_kink,
        },
    ))
}

fn signs_differ(a: &SurfaceSigns, b: &SurfaceSigns) -> bool {
    a.near_kink
        || b.near_kink
        || a.pre_activation_signs != b.pre_activation_signs
        || a.residual_signs != b.residual_signs
}

fn coordinate_count(model: &MLPModel) -> usize {
    model.weights().iter().map(|w| w.len()).sum::<usize>()
        + model.biases().iter().map(|b| b.len()).sum::<usize>()
}

/// Compares a provided gradient set against central finite differences.
///
/// Exposed separately from [`grad_check`] so a deliberately corrupted
/// gradient can be fed in and located.
pub fn compare_gradients(
    model: &MLPModel,
    x: &Array2<f64>,
    y: &Array1<f64>,
    grads: &GradientSet,
    h: f64,
    kink_eps: f64,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::validation("finite-difference step h must be > 0"));
    }
    if !grads.congruent_with(model) {
        return Err(Error::validation(
            "gradient set is not shape-congruent with the model",
        ));
    }

    let mut work = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    let total = coordinate_count(model);
    let mut visited = 0usize;

    for layer in 0..model.layer_count() {
        for kind in [ParamKind::Weight, ParamKind::Bias] {
            let len = match kind {
                ParamKind::Weight => model.weights()[layer].len(),
                ParamKind::Bias => model.biases()[layer].len(),
            };
            for index in 0..len {
                visited += 1;
                let analytic = match kind {
                    ParamKind::Weight => grads.d_weights[layer].as_slice().unwrap()[index],
                    ParamKind::Bias => grads.d_biases[layer][index],
                };
                let original = read_param(&work, layer, kind, index);

                write_param(&mut work, layer, kind, index, original + h);
                let (loss_plus, signs_plus) = evaluate(&work, x, y, kink_eps)?;
                write_param(&mut work, layer, kind, index, original - h);
                let (loss_minus, signs_minus) = evaluate(&work, x, y, kink_eps)?;
                write_param(&mut work, layer, kind, index, original);

                if signs_differ(&signs_plus, &signs_minus) {
                    report.skipped += 1;
                    continue;
                }
                let fd = (loss_plus - loss_minus) / (2.0 * h);
                let denom = analytic.abs().max(fd.abs()).max(REL_ERROR_FLOOR);
                let rel = (analytic - fd).abs() / denom;
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some(ParamCoord { layer, kind, index });
                }
            }
        }
    }
    debug_assert_eq!(visited, total);
    Ok(report)
}

/// Runs the backward pass and checks every coordinate against central
/// finite differences with step `h`, excluding kink neighborhoods of
/// radius `kink_eps`.
pub fn grad_check(
    model: &MLPModel,
    x: &Array2<f64>,
    y: &Array1<f64>,
    h: f64,
    kink_eps: f64,
) -> Result<GradCheckReport> {
    let (pred, cache) = forward(model, x)?;
    let (_, loss_grad) = mae_loss(&pred, y)?;
    let grads = super::backward(model, &cache, &loss_grad)?;
    compare_gradients(model, x, y, &grads, h, kink_eps)
}

fn read_param(model: &MLPModel, layer: usize, kind: ParamKind, index: usize) -> f64 {
    match kind {
        ParamKind::Weight => model.weights()[layer].as_slice().unwrap()[index],
        ParamKind::Bias => model.biases()[layer][index],
    }
}

fn write_param(model: &mut MLPModel, layer: usize, kind: ParamKind, index: usize, value: f64) {
    match kind {
        ParamKind::Weight => model.weights_mut()[layer].as_slice_mut().unwrap()[index] = value,
        ParamKind::Bias => model.biases_mut()[layer][index] = value,
    }
}
