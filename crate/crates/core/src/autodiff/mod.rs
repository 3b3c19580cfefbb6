//! Reverse-mode automatic differentiation.

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, DENOM_FLOOR, STEP};
pub use tape::{GruVars, Tape, Var};
