//! Central finite-difference checks of tape gradients.

use super::tape::{ParamStore, Tape, Var};

pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale, since
/// central differences cannot resolve them relatively.
pub const FLOOR: f64 = 1e-5;

/// Entries checked per parameter tensor unless it is smaller.
pub const ENTRIES_PER_PARAM: usize = 24;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares the backward pass of `build` against central differences with
/// step [`STEP`], over up to [`ENTRIES_PER_PARAM`] evenly spaced entries of
/// every parameter. `build` must return a scalar node and be deterministic.
pub fn check_gradients<F>(store: &mut ParamStore, build: F) -> GradReport
where
    F: Fn(&mut Tape<'_>) -> Var,
{
    check_gradients_with(store, build, ENTRIES_PER_PARAM)
}

pub fn check_gradients_with<F>(store: &mut ParamStore, build: F, per_param: usize) -> GradReport
where
    F: Fn(&mut Tape<'_>) -> Var,
{
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let out = build(&mut tape);
        tape.scalar(out)
    };
    let grads = {
        let mut tape = Tape::new(store);
        let out = build(&mut tape);
        tape.backward(out)
    };
    let mut report = GradReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (len, cols) = {
            let t = store.get(id);
            (t.data.len(), t.cols)
        };
        let stride = (len / per_param.max(1)).max(1);
        for k in (0..len).step_by(stride).take(per_param) {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + STEP;
            let plus = eval(store);
            store.get_mut(id).data[k] = orig - STEP;
            let minus = eval(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let analytic = grads.at(id, k / cols, k % cols, cols);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((store.name(id).to_owned(), k, analytic, numeric));
                }
            }
        }
    }
    report
}
