/// Biased autocorrelation `r[l] = sum_n x[n] x[n+l]` for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|l| {
            if l >= x.len() {
                0.0
            } else {
                x.iter().zip(&x[l..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Levinson-Durbin recursion. Returns `a[1..=order]` of the inverse filter
/// `A(z) = 1 + sum a_i z^-i`, or `None` when the autocorrelation is not
/// positive definite (zero energy, or a reflection coefficient reaching 1).
pub fn levinson_durbin(r: &[f64], order: usize) -> Option<Vec<f64>> {
    assert!(r.len() > order, "need lags 0..=order");
    let mut err = r[0];
    if !(err > 0.0) || !err.is_finite() {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut prev = a.clone();
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return None;
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
    }
    Some(a[1..].to_vec())
}

/// Inverse-filters `x` with `A(z)`; samples before the frame are taken as 0.
pub fn residual(x: &[f64], a: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let pred: f64 = a
                .iter()
                .enumerate()
                .take_while(|(i, _)| *i < n)
                .map(|(i, c)| c * x[n - 1 - i])
                .sum();
            x[n] + pred
        })
        .collect()
}
