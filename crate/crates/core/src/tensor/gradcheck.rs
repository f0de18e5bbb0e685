//! Central finite-difference checks of reverse-mode gradients.

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Outcome of comparing analytic and numeric gradients of one input.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub input: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`; zero when both vanish.
    pub relative_error: f64,
    pub max_abs_error: f64,
}

/// Checks `d f / d inputs[i]` for every input against central differences
/// with step `h`. `f` must build a scalar from the leaves it is given and be
/// deterministic.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut report = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        report.push(compare(i, grad, &numeric));
    }
    Ok(report)
}

pub(crate) fn compare(input: usize, analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    GradCheck {
        input,
        relative_error: if scale == 0.0 { 0.0 } else { norm(&diff) / scale },
        max_abs_error: diff.iter().fold(0.0_f64, |m, d| m.max(d.abs())),
    }
}

/// Largest relative error over a report.
pub fn worst(report: &[GradCheck]) -> f64 {
    report.iter().map(|c| c.relative_error).fold(0.0, f64::max)
}
