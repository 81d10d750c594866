//! Central finite-difference oracle for reverse-mode gradients.

use super::{Tape, Var};
use crate::error::{Error, Result};

/// Worst disagreement between analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_leaf: Option<Var>,
    pub worst_index: usize,
    pub scalars_checked: usize,
}

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn finite_diff_check(tape: &Tape, root: Var, step: f64) -> Result<f64> {
    finite_diff_report(tape, root, step).map(|r| r.max_rel_error)
}

/// Perturbs every trainable scalar by `±step`, re-evaluates the whole tape and
/// compares `(f(x+h) - f(x-h)) / 2h` against [`Tape::gradients`].
pub fn finite_diff_report(tape: &Tape, root: Var, step: f64) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let analytic = tape.gradients(root)?;
    let mut work = tape.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_leaf: None,
        worst_index: 0,
        scalars_checked: 0,
    };

    for leaf in tape.trainable_leaves() {
        let base = tape.value(leaf).clone();
        let start = leaf.index() + 1;
        for j in 0..base.len() {
            let mut probe = |delta: f64| -> Result<f64> {
                let mut shifted = base.clone();
                shifted.data_mut()[j] += delta;
                work.set_leaf(leaf, shifted)?;
                work.recompute_from(start)?;
                work.value(root).to_scalar()
            };
            let plus = probe(step)?;
            let minus = probe(-step)?;
            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic.get(leaf).map_or(0.0, |g| g.data()[j]);
            let err = relative_error(exact, numeric);
            report.scalars_checked += 1;
            if err > report.max_rel_error || report.worst_leaf.is_none() {
                report.max_rel_error = err;
                report.worst_leaf = Some(leaf);
                report.worst_index = j;
            }
        }
        work.set_leaf(leaf, base)?;
        work.recompute_from(start)?;
    }
    Ok(report)
}
