//! Small dense symmetric systems (p = number of model terms, typically < 30).
//! Row-major `&[F]` of length p*p throughout.

use crate::real::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// `Err(j)` reports the first column whose pivot collapses, which callers map
/// to a rank-deficiency diagnostic.
pub fn cholesky<F: Real>(a: &[F], p: usize) -> std::result::Result<Vec<F>, usize> {
    debug_assert_eq!(a.len(), p * p);
    let mut diag_scale = F::zero();
    for j in 0..p {
        let d = a[j * p + j].abs();
        if d > diag_scale {
            diag_scale = d;
        }
    }
    let thresh = diag_scale * F::epsilon() * F::of(64.0);
    let mut l = vec![F::zero(); p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d = d - l[j * p + k] * l[j * p + k];
        }
        if d <= thresh || !d.is_finite() {
            return Err(j);
        }
        let dj = d.sqrt();
        l[j * p + j] = dj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s = s - l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / dj;
        }
    }
    Ok(l)
}

/// Solve A x = b for symmetric positive-definite A.
pub fn solve_spd<F: Real>(a: &[F], b: &[F], p: usize) -> std::result::Result<Vec<F>, usize> {
    let l = cholesky(a, p)?;
    // forward: L y = b
    let mut y = vec![F::zero(); p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    // backward: L^T x = y
    let mut x = vec![F::zero(); p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s = s - l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Ok(x)
}

/// Inverse of a symmetric positive-definite matrix.
pub fn invert_spd<F: Real>(a: &[F], p: usize) -> std::result::Result<Vec<F>, usize> {
    let l = cholesky(a, p)?;
    // invert L in place (lower triangular)
    let mut linv = vec![F::zero(); p * p];
    for i in 0..p {
        linv[i * p + i] = F::one() / l[i * p + i];
        for j in 0..i {
            let mut s = F::zero();
            for k in j..i {
                s = s - l[i * p + k] * linv[k * p + j];
            }
            linv[i * p + j] = s / l[i * p + i];
        }
    }
    // A^{-1} = L^{-T} L^{-1}
    let mut inv = vec![F::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = F::zero();
            for k in i..p {
                s += linv[k * p + i] * linv[k * p + j];
            }
            inv[i * p + j] = s;
            inv[j * p + i] = s;
        }
    }
    Ok(inv)
}

pub fn mat_vec<F: Real>(a: &[F], v: &[F], p: usize) -> Vec<F> {
    let mut out = vec![F::zero(); p];
    for i in 0..p {
        let mut s = F::zero();
        for j in 0..p {
            s += a[i * p + j] * v[j];
        }
        out[i] = s;
    }
    out
}

/// v' A v
pub fn quad_form<F: Real>(v: &[F], a: &[F], p: usize) -> F {
    let av = mat_vec(a, v, p);
    let mut s = F::zero();
    for i in 0..p {
        s += v[i] * av[i];
    }
    s
}
