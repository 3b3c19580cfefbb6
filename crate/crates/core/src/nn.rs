//! Parameter blocks shared by the encoder and the graph network.

use rand::Rng;

use crate::autodiff::{GruVars, Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer `W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl<T: Scalar> LinearParams<T> {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, bound: f64) -> Self {
        LinearParams {
            w: Tensor::uniform(vec![output, input], bound, rng),
            b: Tensor::uniform(vec![output], bound, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>, requires_grad: bool) -> LinearVars {
        LinearVars {
            w: tape.leaf(&self.w, requires_grad),
            b: tape.leaf(&self.b, requires_grad),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor<T>); 2] {
        [("w", &self.w), ("b", &self.b)]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 2] {
        [("w", &mut self.w), ("b", &mut self.b)]
    }
}

impl LinearVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        tape.linear(x, self.w, self.b)
    }
}

/// GRU weights: `W_*` map the input, `U_*` the previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor<T>,
    pub u_z: Tensor<T>,
    pub b_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub u_r: Tensor<T>,
    pub b_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_h: Tensor<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize, bound: f64) -> Self {
        let mut w = || Tensor::uniform(vec![hidden, input], bound, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || Tensor::uniform(vec![hidden, hidden], bound, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        let mut b = || Tensor::uniform(vec![hidden], bound, rng);
        let (b_z, b_r, b_h) = (b(), b(), b());
        GruParams {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(vec![hidden, input]);
        let u = || Tensor::zeros(vec![hidden, hidden]);
        let b = || Tensor::zeros(vec![hidden]);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }

    pub fn input(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn register(&self, tape: &mut Tape<T>, requires_grad: bool) -> GruVars {
        let mut leaf = |t: &Tensor<T>| tape.leaf(t, requires_grad);
        GruVars {
            w_z: leaf(&self.w_z),
            u_z: leaf(&self.u_z),
            b_z: leaf(&self.b_z),
            w_r: leaf(&self.w_r),
            u_r: leaf(&self.u_r),
            b_r: leaf(&self.b_r),
            w_h: leaf(&self.w_h),
            u_h: leaf(&self.u_h),
            b_h: leaf(&self.b_h),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor<T>); 9] {
        [
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 9] {
        [
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_h", &mut self.w_h),
            ("u_h", &mut self.u_h),
            ("b_h", &mut self.b_h),
        ]
    }
}
