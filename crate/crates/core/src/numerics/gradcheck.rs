//! Central-difference verification of tape gradients.

use super::{ParamStore, Tape, Var};
use crate::error::Result;

/// Denominator floor for relative error, so gradients that are zero on both
/// routes do not divide by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub checked_values: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares tape gradients of `forward` against central differences with
/// the given step for every trainable parameter value. `forward` must be
/// deterministic; parameter values are restored afterwards.
pub fn gradient_check<F>(store: &mut ParamStore, step: f64, mut forward: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    tape.backward(loss, store)?;

    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, _)| id)
        .collect();
    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = forward(&mut t, store)?;
        Ok(t.value(l).item())
    };

    let mut report = GradCheckReport {
        params: Vec::with_capacity(ids.len()),
        max_rel_error: 0.0,
        checked_values: 0,
    };
    for id in ids {
        let analytic = store.get(id).grad.clone();
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for k in 0..analytic.len() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + step;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig - step;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[k];
            check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric));
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            report.checked_values += 1;
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.params.push(check);
    }
    store.zero_grads();
    Ok(report)
}
