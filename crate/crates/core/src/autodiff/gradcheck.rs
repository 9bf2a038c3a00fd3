//! Finite-difference validation of backward passes.
//!
//! The harness rebuilds the graph from scratch for every probe, so the
//! closure must be a pure function of the parameter values (seed any RNG it
//! uses internally).

use super::{Graph, Parameter, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference sweep over a set of parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error seen across all parameter elements.
    pub max_rel_err: f64,
    /// Parameter name and flat element index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Total number of scalar derivatives compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compare analytic gradients against central finite differences.
///
/// `build` constructs the scalar loss in a fresh graph; it is called once for
/// the analytic pass and twice per parameter element for the numeric probes.
/// The relative error of each element is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn grad_check(
    build: impl Fn(&mut Graph) -> Result<Var>,
    params: &[&Parameter],
    eps: f64,
) -> Result<GradCheckReport> {
    if eps <= 0.0 {
        return Err(Error::Config(format!("grad_check eps {eps} must be positive")));
    }
    let mut g = Graph::new();
    let loss = build(&mut g)?;
    if !g.shape(loss).is_empty() {
        return Err(Error::ShapeMismatch(
            "grad_check: build closure must return a scalar loss".into(),
        ));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            g.grad_of_param(p)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; p.value().numel()])
        })
        .collect();
    drop(g);

    let eval = |()| -> Result<f64> {
        let mut g = Graph::new();
        let loss = build(&mut g)?;
        Ok(g.value(loss).item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    for (p, grads) in params.iter().zip(&analytic) {
        let n = p.value().numel();
        for i in 0..n {
            let orig = p.value().data()[i];
            p.value_mut().data_mut()[i] = orig + eps;
            let f_plus = eval(())?;
            p.value_mut().data_mut()[i] = orig - eps;
            let f_minus = eval(())?;
            p.value_mut().data_mut()[i] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = grads[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((p.name.clone(), i));
            }
        }
    }
    Ok(report)
}
