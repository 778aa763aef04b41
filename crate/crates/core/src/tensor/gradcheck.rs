use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compares the tape gradient of `f` against `(f(p+h) - f(p-h)) / 2h` for
/// every entry of every parameter. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` receives a fresh tape and one variable per tensor in `params`, in
/// order, and must return a one-element variable.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Argument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    if !out.item().is_finite() {
        return Err(Error::Numeric(
            "non-finite objective at the base point".into(),
        ));
    }
    let grads = tape.backward(out)?.params();

    let probe = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values.iter().map(|p| tape.constant(p.clone())).collect();
        let y = f(&tape, &vars)?.item();
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Numeric(
                "non-finite objective at a probe point".into(),
            ))
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, grad) in grads.iter().enumerate() {
        for ei in 0..params[pi].len() {
            let x = params[pi].data()[ei];
            work[pi].data_mut()[ei] = x + step;
            let plus = probe(&work)?;
            work[pi].data_mut()[ei] = x - step;
            let minus = probe(&work)?;
            work[pi].data_mut()[ei] = x;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grad.data()[ei];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            report.entries += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, ei));
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
