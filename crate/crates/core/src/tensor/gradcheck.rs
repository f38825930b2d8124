use super::{Graph, ParamId, ParamSet, Rng, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-4)`; the floor keeps round-off in
/// near-zero gradients from dominating.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn evaluate<F>(f: &F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let out = f(&mut g)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::usage("grad_check function must return a scalar"));
    }
    Ok(v.item())
}

/// Checks every entry of every parameter with central differences of width
/// `2·step`. `f` must rebuild its tape deterministically on each call.
pub fn grad_check<F>(f: F, params: &ParamSet, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    grad_check_sampled(f, params, step, &params.ids().collect::<Vec<_>>(), usize::MAX, &mut Rng::new(0))
}

/// Like [`grad_check`] but restricted to the given parameters, probing at
/// most `max_entries` randomly chosen entries of each.
pub fn grad_check_sampled<F>(
    f: F,
    params: &ParamSet,
    step: f64,
    ids: &[ParamId],
    max_entries: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(params);
        let out = f(&mut g)?;
        g.backward(out)?
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };
    for &id in ids {
        let n = params.value(id).len();
        let mut entries: Vec<usize> = (0..n).collect();
        if n > max_entries {
            rng.shuffle(&mut entries);
            entries.truncate(max_entries);
        }
        for idx in entries {
            let analytic = grads.param(id).map_or(0.0, |t| t.data()[idx]);
            let orig = work.value(id).data()[idx];
            work.value_mut(id).data_mut()[idx] = orig + step;
            let plus = evaluate(&f, &work)?;
            work.value_mut(id).data_mut()[idx] = orig - step;
            let minus = evaluate(&f, &work)?;
            work.value_mut(id).data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if report.entries_checked == 1 || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = params.get(id).name().to_string();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}
