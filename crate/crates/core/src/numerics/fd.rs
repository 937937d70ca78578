//! Central finite-difference gradient verification.
//!
//! This is the independent check used by the test suites: it never touches
//! the tape's backward pass, only repeated forward evaluations of a loss
//! builder at perturbed parameter values.

use crate::error::Result;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{ParamId, ParamSet};

/// Worst relative disagreement between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error with a unit floor, so tiny gradients are compared
/// absolutely and large ones proportionally.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1.0, f64::max(a.abs(), b.abs()))
}

/// Compares the tape gradient of `build`'s scalar output against central
/// finite differences with step `h`, over every element of every trainable
/// parameter in `params`.
pub fn check_gradients<F>(params: &mut ParamSet, h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss, params)?;

    let ids: Vec<ParamId> = params.trainable_ids();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };

    for id in ids {
        let analytic = params.get(id).grad().unwrap().to_vec();
        for i in 0..analytic.len() {
            let orig = params.get(id).data()[i];

            params.get_mut(id).data_mut()[i] = orig + h;
            let mut t_plus = Tape::new();
            let l_plus = build(&mut t_plus, params)?;
            let f_plus = t_plus.scalar(l_plus);

            params.get_mut(id).data_mut()[i] = orig - h;
            let mut t_minus = Tape::new();
            let l_minus = build(&mut t_minus, params)?;
            let f_minus = t_minus.scalar(l_minus);

            params.get_mut(id).data_mut()[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let err = rel_err(analytic[i], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
