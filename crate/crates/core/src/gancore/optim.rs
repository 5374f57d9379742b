//! Adam and RMSProp over plain parameter tensors.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Rmsprop,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.5;
pub const ADAM_BETA2: f64 = 0.999;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const OPT_EPS: f64 = 1e-8;

/// Optimizer with per-parameter moment buffers. `first` is only used by Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub steps: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[&Tensor<T>]) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        Optimizer {
            kind,
            learning_rate,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.second.len());
        self.steps += 1;
        let lr = T::of(self.learning_rate);
        let eps = T::of(OPT_EPS);
        match self.kind {
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let t = self.steps as i32;
                let c1 = T::one() - T::of(libm::pow(ADAM_BETA1, t as f64));
                let c2 = T::one() - T::of(libm::pow(ADAM_BETA2, t as f64));
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first[k].data;
                    let v = &mut self.second[k].data;
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * gi;
                        v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p.data[i] = p.data[i] - lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::Rmsprop => {
                let rho = T::of(RMSPROP_DECAY);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let v = &mut self.second[k].data;
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        v[i] = rho * v[i] + (T::one() - rho) * gi * gi;
                        p.data[i] = p.data[i] - lr * gi / (v[i].sqrt() + eps);
                    }
                }
            }
        }
    }
}
