//! Projector-only proxy training: full-batch gradient descent on the mean-squared
//! error between the mean fused token of each pair and its target vector.

use ndarray::{Array1, Array2};

use super::projector::{scope_inputs, AffineMap, Projector, TargetScope};
use super::propagate::HopStack;
use crate::error::{GwmError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub stack: HopStack<T>,
    pub scope: TargetScope,
    pub target: Array1<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Recorded in the report; full-batch descent itself draws no randomness.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorGradient<T> {
    pub layers: Vec<AffineMap<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport<T> {
    pub initial_loss: T,
    pub final_loss: T,
    pub steps_run: usize,
    pub seed: u64,
}

/// Loss over all pairs and its closed-form gradient with respect to every projector
/// parameter.
pub fn projector_loss_and_gradient<T: Scalar>(
    pairs: &[TrainingPair<T>],
    projector: &Projector<T>,
) -> Result<(T, ProjectorGradient<T>)> {
    let (d_out, d_in) = (projector.d_out(), projector.d_in());
    let mut grad = ProjectorGradient {
        layers: (0..=projector.hops())
            .map(|_| AffineMap { weight: Array2::zeros((d_out, d_in)), bias: Array1::zeros(d_out) })
            .collect(),
    };
    if pairs.is_empty() {
        return Err(GwmError::InvalidArgument("no training pairs".into()));
    }
    let scale = T::of(2.0 / (pairs.len() * d_out) as f64);
    let mut loss = T::zero();
    let act = projector.activation();
    for pair in pairs {
        if pair.target.len() != d_out {
            return Err(GwmError::ShapeMismatch(format!(
                "target has {} entries, projector emits {d_out}",
                pair.target.len()
            )));
        }
        if pair.stack.dim() != d_in || pair.stack.depth() > projector.hops() {
            return Err(GwmError::ShapeMismatch("hop stack does not fit the projector".into()));
        }
        let inputs = scope_inputs(&pair.stack, &pair.scope)?;
        let k = T::of(inputs.len() as f64);
        let outputs: Vec<Array1<T>> = inputs.iter().map(|(l, x)| projector.forward(*l, x)).collect();
        let mut mean = Array1::<T>::zeros(d_out);
        for a in &outputs {
            mean = mean + a;
        }
        mean.mapv_inplace(|v| v / k);
        let residual = &mean - &pair.target;
        loss = loss + residual.iter().map(|&r| r * r).sum::<T>();

        let g_mean = residual.mapv(|r| r * scale / k);
        for ((l, x), a) in inputs.iter().zip(&outputs) {
            let g_z: Array1<T> = g_mean
                .iter()
                .zip(a.iter())
                .map(|(&g, &ai)| g * act.derivative_from_output(ai))
                .collect();
            let layer = &mut grad.layers[*l];
            for (r, &gz) in g_z.iter().enumerate() {
                for (c, &xc) in x.iter().enumerate() {
                    layer.weight[[r, c]] = layer.weight[[r, c]] + gz * xc;
                }
                layer.bias[r] = layer.bias[r] + gz;
            }
        }
    }
    Ok((loss / T::of((pairs.len() * d_out) as f64), grad))
}

fn apply_step<T: Scalar>(projector: &mut Projector<T>, grad: &ProjectorGradient<T>, lr: T) {
    for (layer, g) in projector.layers_mut().iter_mut().zip(&grad.layers) {
        layer.weight.zip_mut_with(&g.weight, |w, &gw| *w = *w - lr * gw);
        layer.bias.zip_mut_with(&g.bias, |b, &gb| *b = *b - lr * gb);
    }
}

/// Trains `projector` in place. The parameters with the lowest observed loss are kept,
/// so the final loss never exceeds the initial one. On divergence the last finite
/// parameters are restored and `NonFiniteLoss` is returned.
pub fn train_projector_proxy<T: Scalar>(
    pairs: &[TrainingPair<T>],
    projector: &mut Projector<T>,
    config: TrainConfig,
) -> Result<TrainReport<T>> {
    if config.steps == 0 {
        return Err(GwmError::InvalidArgument("steps must be at least 1".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(GwmError::InvalidArgument(format!("invalid learning rate {}", config.learning_rate)));
    }
    let lr = T::of(config.learning_rate);
    let (initial_loss, mut grad) = projector_loss_and_gradient(pairs, projector)?;
    if !initial_loss.is_finite() {
        return Err(GwmError::NonFiniteLoss { step: 0 });
    }
    let mut best = (initial_loss, projector.clone());
    let mut steps_run = 0;
    for step in 1..=config.steps {
        if best.0 == T::zero() {
            break;
        }
        let previous = projector.clone();
        apply_step(projector, &grad, lr);
        let (loss, next_grad) = projector_loss_and_gradient(pairs, projector)?;
        steps_run = step;
        if !loss.is_finite() || !projector.is_finite() {
            *projector = previous;
            return Err(GwmError::NonFiniteLoss { step });
        }
        if loss < best.0 {
            best = (loss, projector.clone());
        }
        grad = next_grad;
    }
    *projector = best.1;
    Ok(TrainReport { initial_loss, final_loss: best.0, steps_run, seed: config.seed })
}
