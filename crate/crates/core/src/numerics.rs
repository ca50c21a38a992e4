//! Log-domain sums and quadrature weights.

/// log Σ exp(x_i) with max-shift. Empty input or all -inf gives -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// log Σ w_i exp(x_i) for nonnegative weights. Terms with w_i = 0 are
/// skipped so that 0 · exp(-inf) never produces a NaN.
pub fn log_dot_exp(xs: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), w.len());
    let m = xs
        .iter()
        .zip(w)
        .filter(|&(_, &wi)| wi > 0.0)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs
        .iter()
        .zip(w)
        .filter(|&(_, &wi)| wi > 0.0)
        .map(|(&x, &wi)| wi * (x - m).exp())
        .sum();
    m + s.ln()
}

/// Trapezoid weights for strictly increasing nodes: half-cells at the two
/// ends, midpoint-to-midpoint spans inside. A single node gets weight 1
/// unless the caller overrides it with an explicit cell width.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    w[0] = (nodes[1] - nodes[0]) / 2.0;
    w[n - 1] = (nodes[n - 1] - nodes[n - 2]) / 2.0;
    for i in 1..n - 1 {
        w[i] = (nodes[i + 1] - nodes[i - 1]) / 2.0;
    }
    w
}
