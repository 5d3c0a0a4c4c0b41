//! Central finite-difference check of tape gradients.

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

/// Floor on the relative-error denominator.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step [`FD_STEP`] over every coordinate of every parameter.
///
/// `f` receives a fresh tape and the parameter handles (registered as
/// trainable, in order) and must return a 1×1 node.
pub fn grad_check<F>(params: &[Matrix], f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let root = f(&mut tape, &vars)?;
        checked_value(&tape, root)?;
        let mut grads = tape.backward(root)?;
        vars.iter()
            .map(|v| grads.take(*v).expect("trainable leaf has a gradient"))
            .collect::<Vec<_>>()
    };

    let eval = |perturbed: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|p| tape.param(p.clone())).collect();
        let root = f(&mut tape, &vars)?;
        checked_value(&tape, root)
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..params[pi].len() {
            let orig = params[pi].values()[k];
            work[pi].values_mut()[k] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[pi].values_mut()[k] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[pi].values_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad.values()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, k));
            }
        }
    }
    Ok(report)
}

fn checked_value(tape: &Tape, root: Var) -> Result<f64> {
    let v = tape.scalar(root)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check objective"));
    }
    Ok(v)
}
