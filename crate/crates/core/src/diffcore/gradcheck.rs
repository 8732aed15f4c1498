use super::Tensor;

/// Denominator floor for [`relative_error`]. Gradients smaller than this are
/// compared in absolute terms, where the O(ε²) truncation error of central
/// differences dominates any meaningful relative comparison.
pub const GRAD_REL_FLOOR: f64 = 1e-3;

/// Central-difference gradient `(f(x+ε) − f(x−ε)) / 2ε` per coordinate of
/// every parameter tensor.
pub fn finite_diff_grad<F>(mut f: F, params: &[Tensor], eps: f64) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut g = Tensor::zeros(params[k].shape());
        for j in 0..params[k].len() {
            let orig = params[k].data()[j];
            work[k].data_mut()[j] = orig + eps;
            let plus = f(&work);
            work[k].data_mut()[j] = orig - eps;
            let minus = f(&work);
            work[k].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

/// `|a − b| / max(|a|, |b|, GRAD_REL_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_REL_FLOOR)
}

pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
