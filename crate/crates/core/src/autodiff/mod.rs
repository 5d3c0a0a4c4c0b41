//! Dense matrices, a reverse-mode tape over them, and a finite-difference
//! gradient oracle.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Var, LOG_EPS};

