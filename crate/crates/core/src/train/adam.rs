use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Linear decay from `base` at the first step to `floor` at the last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub floor: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            base: lr,
            floor: lr,
            total_steps: 1,
        }
    }

    /// Learning rate of the zero-based step `step`.
    pub fn lr(&self, step: u64) -> f64 {
        if self.total_steps <= 1 {
            return self.base;
        }
        let frac = (step as f64 / (self.total_steps - 1) as f64).min(1.0);
        self.base + (self.floor - self.base) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(sizes: &[usize], schedule: LrSchedule) -> Self {
        OptimizerState {
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            schedule,
            adam: AdamConfig::default(),
        }
    }
}

/// One bias-corrected Adam update. Nothing changes if any gradient is
/// non-finite or misshaped.
pub fn adam_step<T: Scalar>(
    params: &mut [(String, &mut Tensor<T>)],
    grads: &[Vec<T>],
    st: &mut OptimizerState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != st.m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            left: vec![params.len(), st.m.len()],
            right: vec![grads.len()],
        });
    }
    for (((name, p), g), m) in params.iter().zip(grads).zip(&st.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: vec![g.len()],
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    let lr = T::lit(st.schedule.lr(st.step));
    st.step += 1;
    let (b1, b2, eps) = (T::lit(st.adam.beta1), T::lit(st.adam.beta2), T::lit(st.adam.eps));
    let c1 = T::one() - b1.powi(st.step as i32);
    let c2 = T::one() - b2.powi(st.step as i32);
    for (((_, p), g), (m, v)) in params.iter_mut().zip(grads).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
        for (((x, &gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
