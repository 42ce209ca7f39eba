//! Streaming continual-learning optimizer.
//!
//! Per batch: compute the loss gradient, add `lambda * rule(...)` to the
//! importance accumulator, then step each parameter by
//! `eta * grad / sqrt(omega + epsilon)` using the freshly updated omega.
//! The Adagrad rule squares the loss gradient; the S-MAS rule takes the
//! absolute gradient of the batch-mean squared L2 norm of the raw logits,
//! which costs one extra backward pass through the same forward cache.
//! Plain SGD ignores omega entirely.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::{masked_softmax_xent, ClassMask};
use crate::model::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Adagrad,
    Smas,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub rule: Rule,
    /// Learning rate, > 0.
    pub eta: f64,
    /// Stability-plasticity constant, >= 0. Scales importance accumulation.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Small constant inside the inverse square root.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_lambda() -> f64 {
    0.8
}

fn default_epsilon() -> f64 {
    1e-6
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(crate::Error::config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0) {
            return Err(crate::Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(crate::Error::config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Adagrad importance deltas: the elementwise squared loss gradient.
/// Reads the grad buffers filled by the loss backward.
pub fn adagrad_importance(net: &Network) -> Vec<Tensor> {
    net.params()
        .iter()
        .map(|p| {
            let mut d = Tensor::zeros(p.grad.shape());
            for (out, &g) in d.data_mut().iter_mut().zip(p.grad.data()) {
                *out = g * g;
            }
            d
        })
        .collect()
}

/// S-MAS importance deltas: `| d/d theta (1/N) sum_i ||f(x_i)||^2 |` with
/// `f` the raw pre-softmax logits. Reuses the forward cache of the loss
/// pass (same batch, same theta) and runs one extra backward with upstream
/// gradient `2 * logits / N`. Overwrites the grad buffers, so call it
/// before the loss backward.
pub fn smas_importance(net: &mut Network, logits: &Tensor) -> Result<Vec<Tensor>> {
    let n = logits.rows() as f32;
    let upstream = Tensor::from_vec(
        logits.shape(),
        logits.data().iter().map(|&v| 2.0 * v / n).collect(),
    )?;
    net.backward_aux(&upstream)?;
    Ok(net
        .params()
        .iter()
        .map(|p| {
            let mut d = Tensor::zeros(p.grad.shape());
            for (out, &g) in d.data_mut().iter_mut().zip(p.grad.data()) {
                *out = g.abs();
            }
            d
        })
        .collect())
}

/// Applies one streaming step: `omega += lambda * delta`, then
/// `theta -= eta * grad * (omega + epsilon)^(-1/2)` with the updated omega.
pub fn apply_streaming_update(net: &mut Network, deltas: &[Tensor], cfg: &OptimizerConfig) {
    let eta = cfg.eta as f32;
    let lambda = cfg.lambda as f32;
    let eps = cfg.epsilon as f32;
    let mut i = 0;
    net.for_each_param_mut(|p| {
        let delta = deltas[i].data();
        i += 1;
        let grad = p.grad.data();
        let theta = p.theta.data_mut();
        let omega = p.omega.data_mut();
        for j in 0..theta.len() {
            omega[j] += lambda * delta[j];
            theta[j] -= eta * grad[j] / (omega[j] + eps).sqrt();
        }
    });
}

/// Vanilla SGD: `theta -= eta * grad`; omega untouched.
pub fn apply_sgd_update(net: &mut Network, cfg: &OptimizerConfig) {
    let eta = cfg.eta as f32;
    net.for_each_param_mut(|p| {
        for (th, &g) in p.theta.data_mut().iter_mut().zip(p.grad.data()) {
            *th -= eta * g;
        }
    });
}

/// One full training step on a batch: forward, masked loss, backward(s),
/// parameter update. Returns the batch loss.
pub fn train_step(
    net: &mut Network,
    x: &Tensor,
    labels: &[u8],
    mask: &ClassMask,
    cfg: &OptimizerConfig,
) -> Result<f32> {
    let logits = net.forward(x, true)?;
    let (loss, grad_logits) = masked_softmax_xent(&logits, labels, mask)?;
    match cfg.rule {
        Rule::Sgd => {
            net.backward(&grad_logits)?;
            apply_sgd_update(net, cfg);
        }
        Rule::Adagrad => {
            net.backward(&grad_logits)?;
            let deltas = adagrad_importance(net);
            apply_streaming_update(net, &deltas, cfg);
        }
        Rule::Smas => {
            let deltas = smas_importance(net, &logits)?;
            net.backward(&grad_logits)?;
            apply_streaming_update(net, &deltas, cfg);
        }
    }
    Ok(loss)
}
