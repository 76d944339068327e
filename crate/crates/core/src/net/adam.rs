use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments for every trainable tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &Mlp) -> Self {
        let shapes: Vec<usize> = params.trainable_tensors().iter().map(|t| t.len()).collect();
        AdamState {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

impl Mlp {
    /// One Adam step with L2 weight decay folded into the gradient
    /// (`g + weight_decay * p`) before the moment updates.
    pub fn adam_step(&mut self, grads: &Gradients, state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
        if !(lr > 0.0 && weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lr > 0 and weight_decay >= 0, got {lr} and {weight_decay}"
            )));
        }
        let grad_tensors = grads.tensors();
        {
            let params = self.trainable_tensors();
            let consistent = params.len() == grad_tensors.len()
                && params.len() == state.first.len()
                && params
                    .iter()
                    .zip(&grad_tensors)
                    .zip(&state.first)
                    .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
            if !consistent {
                return Err(Error::Contract("parameter, gradient and optimizer-state shapes disagree".into()));
            }
        }
        state.step += 1;
        let step = state.step;
        for (((p, g), m), v) in self
            .trainable_tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(state.first.iter_mut())
            .zip(state.second.iter_mut())
        {
            adam_update(p, g, m, v, step, lr, weight_decay);
        }
        Ok(())
    }
}

fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    step: u64,
    lr: f64,
    weight_decay: f64,
) {
    let bias1 = 1.0 - libm::pow(ADAM_BETA1, step as f64);
    let bias2 = 1.0 - libm::pow(ADAM_BETA2, step as f64);
    let step_size = lr / bias1;
    let bias2_sqrt = libm::sqrt(bias2);
    for i in 0..param.len() {
        let g = grad[i] + weight_decay * param[i];
        first[i] = ADAM_BETA1 * first[i] + (1.0 - ADAM_BETA1) * g;
        second[i] = ADAM_BETA2 * second[i] + (1.0 - ADAM_BETA2) * g * g;
        let denom = libm::sqrt(second[i]) / bias2_sqrt + ADAM_EPS;
        param[i] -= step_size * first[i] / denom;
    }
}
