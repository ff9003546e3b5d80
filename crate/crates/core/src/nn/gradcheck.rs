use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over all parameter scalars of
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares tape gradients against central finite differences.
///
/// The numeric derivative uses the five-point central stencil
/// `(8(f(p+e) - f(p-e)) - (f(p+2e) - f(p-2e))) / 12e`, whose truncation
/// error is fourth order in `e`. That permits a step large enough to keep
/// rounding noise well below the `1e-8` floor of the relative error, which
/// the two-point stencil cannot do for deep graphs with tiny gradients.
///
/// `f` must build a `1 x 1` output on the tape it is given; it is called
/// once for the analytic pass and four times per parameter scalar.
pub fn grad_check<F>(store: &ParamStore<f64>, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::with_params(s);
        let out = f(&mut tape)?;
        if tape.dims(out) != (1, 1) {
            let (r, c) = tape.dims(out);
            return Err(Error::shape("grad_check", format!("output must be 1x1, got {r}x{c}")));
        }
        Ok(tape.scalar(out))
    };

    let analytic = {
        let mut tape = Tape::with_params(store);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.tensor(id).len();
        for k in 0..n {
            let orig = store.tensor(id).data()[k];
            let mut at = |offset: f64| -> Result<f64> {
                probe.tensor_mut(id).data_mut()[k] = orig + offset;
                eval(&probe)
            };
            let near = at(eps)? - at(-eps)?;
            let far = at(2.0 * eps)? - at(-2.0 * eps)?;
            probe.tensor_mut(id).data_mut()[k] = orig;

            let numeric = (8.0 * near - far) / (12.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g[k]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = Some(store.entry(id).name.clone());
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Analytic gradient of a single parameter, for targeted assertions.
pub fn analytic_grad<F>(store: &ParamStore<f64>, id: ParamId, f: F) -> Result<Vec<f64>>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
{
    let mut tape = Tape::with_params(store);
    let out = f(&mut tape)?;
    let g = tape.backward(out)?;
    Ok(g.get(id)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; store.tensor(id).len()]))
}
