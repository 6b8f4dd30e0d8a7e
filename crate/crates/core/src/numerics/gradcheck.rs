use super::{NumericsError, ParamId, ParamStore, Tape, Var};

/// Largest coordinate-wise disagreement between tape gradients and central
/// finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// `(parameter, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the gradient of the scalar built by `f` against
/// `(f(w + eps) - f(w - eps)) / 2eps` on every coordinate of `only` (or of
/// every parameter). `f` must be deterministic.
pub fn grad_check<E, F>(
    params: &ParamStore,
    only: Option<&[ParamId]>,
    eps: f64,
    f: F,
) -> Result<GradCheckReport, E>
where
    E: From<NumericsError>,
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => params.ids().collect(),
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        worst: None,
    };
    for id in ids {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + eps;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - eps;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).data()[k];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((params.name(id).to_string(), k, a, numeric));
            }
        }
    }
    Ok(report)
}
