//! Small dense helpers for symmetric positive semidefinite matrices.
//!
//! Matrices are stored row-major in flat slices. The dimensions involved
//! here are tiny (at most a few dozen), so plain loops beat any BLAS call.

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// In-place Cholesky factorization `A = L Lᵀ` of a symmetric `n×n` matrix.
///
/// On success the lower triangle of `a` holds `L` and the log-determinant of
/// `A` is returned. A pivot `d_k` (the squared diagonal of `L`) below
/// `SINGULAR_PIVOT_RATIO * trace(A)`, or a zero trace, yields `None`.
pub fn cholesky_logdet(a: &mut [f64], n: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), n * n);
    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return None;
    }
    let floor = SINGULAR_PIVOT_RATIO * trace;
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return None;
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        logdet += d.ln();
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Some(logdet)
}

/// Log-determinant of a PSD matrix, `None` when singular by the pivot rule.
pub fn logdet_psd(a: &[f64], n: usize) -> Option<f64> {
    let mut work = a.to_vec();
    cholesky_logdet(&mut work, n)
}

/// Solves `L y = b` in place for a lower-triangular factor produced by
/// [`cholesky_logdet`], returning `‖y‖²`.
pub fn forward_solve_norm2(l: &[f64], n: usize, b: &mut [f64]) -> f64 {
    let mut norm2 = 0.0;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        let yi = s / l[i * n + i];
        b[i] = yi;
        norm2 += yi * yi;
    }
    norm2
}

/// Solves `A x = b` given the Cholesky factor of `A`; `b` is overwritten.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    forward_solve_norm2(l, n, b);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Adds `weight · v vᵀ` to the upper and lower triangles of `a`.
#[inline]
pub fn add_outer(a: &mut [f64], n: usize, weight: f64, v: &[f64]) {
    for i in 0..n {
        let wi = weight * v[i];
        let row = &mut a[i * n..(i + 1) * n];
        for (r, vj) in row.iter_mut().zip(v) {
            *r += wi * vj;
        }
    }
}
