//! Central finite differences for checking reverse-mode gradients.

/// Numerical gradient of a scalar function of `n` inputs.
///
/// `eval(i, h)` must return the loss with input `i` perturbed by `h`.
pub fn central_difference(n: usize, step: f64, mut eval: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..n)
        .map(|i| (eval(i, step) - eval(i, -step)) / (2.0 * step))
        .collect()
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`; exact zeros on both
/// sides compare as 0.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        return diff;
    }
    diff / scale
}
