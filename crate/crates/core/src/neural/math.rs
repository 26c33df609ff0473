/// Dot product with four independent accumulators so the loop vectorizes.
/// The summation order is fixed, which keeps results bit-reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x + b` for row-major `W` with `b.len()` rows.
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for ((o, row), bias) in out.iter_mut().zip(w.chunks_exact(cols)).zip(b) {
        *o = bias + dot(row, x);
    }
}

/// Accumulates `dW += dz x^T`, `db += dz` and, if given, `dx += W^T dz`.
pub fn affine_backward(w: &[f64], x: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let cols = x.len();
    for ((d, dw_row), g) in dz.iter().zip(dw.chunks_exact_mut(cols)).zip(db.iter_mut()) {
        *g += d;
        axpy(*d, x, dw_row);
    }
    if let Some(dx) = dx {
        for (d, row) in dz.iter().zip(w.chunks_exact(cols)) {
            axpy(*d, row, dx);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-way softmax.
#[inline]
pub fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}
