use crate::linalg::{CMat, CVec, RMat, RVec};
use num_complex::Complex64;

/// `[Re(w); Im(w)]`.
pub fn embed_vector(w: &CVec) -> RVec {
    let n = w.len();
    RVec::from_fn(2 * n, |i, _| if i < n { w[i].re } else { w[i - n].im })
}

pub fn unembed_vector(x: &RVec) -> CVec {
    assert!(
        x.len().is_multiple_of(2),
        "embedded vector must have even length"
    );
    let n = x.len() / 2;
    CVec::from_fn(n, |i, _| Complex64::new(x[i], x[n + i]))
}

/// Coefficients `a` with `aᵀ[Re(w); Im(w)] = Re{h^H w}`.
pub fn re_functional(h: &CVec) -> RVec {
    let n = h.len();
    RVec::from_fn(2 * n, |i, _| if i < n { h[i].re } else { h[i - n].im })
}

/// Coefficients `a` with `aᵀ[Re(w); Im(w)] = Im{h^H w}`.
pub fn im_functional(h: &CVec) -> RVec {
    let n = h.len();
    RVec::from_fn(2 * n, |i, _| if i < n { -h[i].im } else { h[i - n].re })
}

/// Real matrix `[[Re R, −Im R], [Im R, Re R]]` acting on `[Re(w); Im(w)]`.
pub fn embed_matrix(r: &CMat) -> RMat {
    let (m, n) = r.shape();
    RMat::from_fn(2 * m, 2 * n, |i, j| {
        let z = r[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}
