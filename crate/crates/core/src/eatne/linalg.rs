//! Row-major dense kernels over flat slices.

/// `out += w * x` for a `rows x cols` matrix.
pub(crate) fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *o += dot(row, x);
    }
}

/// `out += w^T * y` for a `rows x cols` matrix.
pub(crate) fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, &yr) in y.iter().enumerate().take(rows) {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += yr * wv;
        }
    }
}

/// `g += scale * a b^T` into a `a.len() x b.len()` matrix.
pub(crate) fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        let s = scale * ar;
        if s == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, &bv) in row.iter_mut().zip(b) {
            *gv += s * bv;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        log::debug!("cosine of a zero vector taken as 0");
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Cosine plus its gradients with respect to both inputs, scaled by `scale`
/// and accumulated into `ga` / `gb`.
pub(crate) fn cosine_backward(a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = dot(a, b) / (na * nb);
    if scale != 0.0 {
        let inv = 1.0 / (na * nb);
        for k in 0..a.len() {
            ga[k] += scale * (b[k] * inv - c * a[k] / (na * na));
            gb[k] += scale * (a[k] * inv - c * b[k] / (nb * nb));
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_hand_computation() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let mut out = [0.0; 2];
        matvec_acc(&w, 2, 3, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut out = [0.0; 3];
        matvec_t_acc(&w, 2, 3, &[1.0, 1.0], &mut out);
        assert_eq!(out, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        outer_acc(&mut g, &[1.0, 2.0], &[1.0, 0.0, 3.0], 2.0);
        assert_eq!(g, [2.0, 0.0, 6.0, 4.0, 0.0, 12.0]);
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
    }
}
