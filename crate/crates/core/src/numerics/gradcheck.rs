//! Central finite-difference gradient checker.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1e-12, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// `(tensor index, coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    /// `max |analytic − numeric|`, useful where gradients are near the
    /// round-off floor of the finite differences.
    pub max_abs_error: f64,
    pub coordinates: usize,
}

/// Relative error used by the checker.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Builds the scalar computation `f` on a fresh tape with `params` as tracked
/// leaves, backpropagates, and compares every coordinate against central
/// finite differences of step `step`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&f, params)?;
    let value = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p)).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).data()[0])
    };
    compare_gradients(value, params, &analytic, step)
}

/// Gradients of `f` w.r.t. each parameter, via the tape.
pub fn analytic_gradients<F>(f: &F, params: &[Tensor]) -> Result<Vec<Vec<f64>>>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.len()])
        })
        .collect())
}

/// Central finite differences of `value` with step `step`, per coordinate.
pub fn numeric_gradients<V>(value: V, params: &[Tensor], step: f64) -> Result<Vec<Vec<f64>>>
where
    V: Fn(&[Tensor]) -> Result<f64>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::invalid("grad_check step must be positive"));
    }
    let mut work: Vec<Tensor> = params.iter().map(Tensor::detached).collect();
    let base = value(&work)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check function value".into()));
    }
    let mut out = Vec::with_capacity(work.len());
    for t in 0..work.len() {
        let mut g = vec![0.0; work[t].len()];
        for (c, slot) in g.iter_mut().enumerate() {
            let orig = work[t].data()[c];
            work[t].data_mut()[c] = orig + step;
            let plus = value(&work)?;
            work[t].data_mut()[c] = orig - step;
            let minus = value(&work)?;
            work[t].data_mut()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "grad_check function value at tensor {t} coordinate {c}"
                )));
            }
            *slot = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares supplied `analytic` gradients against central differences of the
/// plain scalar function `value`.
pub fn compare_gradients<V>(
    value: V,
    params: &[Tensor],
    analytic: &[Vec<f64>],
    step: f64,
) -> Result<GradCheckReport>
where
    V: Fn(&[Tensor]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::invalid(
            "one analytic gradient per parameter required",
        ));
    }
    for (p, a) in params.iter().zip(analytic) {
        if a.len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "grad_check",
                lhs: p.shape().to_vec(),
                rhs: vec![a.len()],
            });
        }
    }
    let numeric = numeric_gradients(value, params, step)?;
    Ok(summarize(analytic, &numeric))
}

/// Analytic and numeric gradients side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradientComparison {
    pub fn report(&self) -> GradCheckReport {
        summarize(&self.analytic, &self.numeric)
    }

    /// `max |a − n| / max(floor, |a| + |n|)`: the relative error with the
    /// denominator clamped at `floor` instead of 1e-12, so coordinates whose
    /// gradient sits below the finite-difference round-off are judged by
    /// absolute error.
    pub fn max_rel_error_with_floor(&self, floor: f64) -> f64 {
        self.analytic
            .iter()
            .flatten()
            .zip(self.numeric.iter().flatten())
            .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
            .fold(0.0, f64::max)
    }

    /// Coordinates whose plain relative error exceeds `tol`.
    pub fn count_above(&self, tol: f64) -> usize {
        self.analytic
            .iter()
            .flatten()
            .zip(self.numeric.iter().flatten())
            .filter(|(a, n)| relative_error(**a, **n) > tol)
            .count()
    }
}

/// Error statistics between two gradient sets of identical layout.
pub fn summarize(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        max_abs_error: 0.0,
        coordinates: 0,
    };
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (c, (&a, &n)) in a.iter().zip(n).enumerate() {
            let err = relative_error(a, n);
            report.coordinates += 1;
            report.max_abs_error = report.max_abs_error.max((a - n).abs());
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (t, c);
            }
        }
    }
    report
}
