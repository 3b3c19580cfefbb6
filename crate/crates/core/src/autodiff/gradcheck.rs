//! Central finite-difference verification of tape gradients.

use crate::autodiff::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Finite-difference step of the five-point stencil.
pub const STEP: f64 = 1e-3;
/// Lower bound on the relative-error denominator.
pub const DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// `(input, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates where some stencil point lands on the other side of a ReLU kink.
    pub skipped_kinks: usize,
    /// First `(input, coordinate)` where the function or gradient was not finite.
    pub non_finite: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite.is_none() && self.max_rel_error < tol
    }
}

/// Compares the tape gradient of a scalar function against the fourth-order
/// central difference `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h` at every
/// coordinate of every input.
///
/// `f` receives a fresh tape and one leaf per input (all requiring grad) and
/// returns the scalar output node.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>]) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<T>]| -> Result<(T, Vec<bool>)> {
        let mut tape = Tape::with_kink_tracking();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.scalar(out), tape.relu_signature().to_vec()))
    };

    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let base_signature = tape.relu_signature().to_vec();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
        non_finite: None,
    };
    if !tape.scalar(out).is_finite() {
        report.non_finite = Some((0, 0));
        return Ok(report);
    }

    let step = T::lit(STEP);
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (input_idx, var) in vars.iter().enumerate() {
        let analytic: Vec<T> = match tape.grad(*var) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); inputs[input_idx].len()],
        };
        for coord in 0..inputs[input_idx].len() {
            let original = inputs[input_idx].values()[coord];
            let mut at = |offset: T| -> Result<(T, bool)> {
                work[input_idx].values_mut()[coord] = original + offset;
                let (y, sig) = eval(&work)?;
                Ok((y, sig == base_signature))
            };
            let (p1, s1) = at(step)?;
            let (m1, s2) = at(-step)?;
            let (p2, s3) = at(step + step)?;
            let (m2, s4) = at(-(step + step))?;
            work[input_idx].values_mut()[coord] = original;

            let a = analytic[coord].as_f64();
            let eight = T::lit(8.0);
            // Paired differences cancel exactly where the function is flat.
            let numeric = ((eight * (p1 - m1) - (p2 - m2)) / (T::lit(12.0) * step)).as_f64();
            if !a.is_finite() || !numeric.is_finite() {
                report.non_finite.get_or_insert((input_idx, coord));
                continue;
            }
            if !(s1 && s2 && s3 && s4) {
                report.skipped_kinks += 1;
                continue;
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(DENOM_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((input_idx, coord));
                }
            }
        }
    }
    Ok(report)
}
