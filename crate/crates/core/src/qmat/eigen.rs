// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Cyclic complex Jacobi eigensolver and the Hermitian exponential.
//!
//! For dimensions ≤ 16 Jacobi converges in a handful of sweeps and keeps the
//! eigenvector matrix unitary to rounding, which is what the propagators
//! need.

use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use super::matrix::{CMatrix, ZERO};
use crate::error::{bail, Result};

/// Hermiticity tolerance enforced at API boundaries.
pub const HERMITIAN_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) and unitary eigenvector matrix V (columns) of a
/// Hermitian matrix, so that `m = V diag(λ) V†`.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Hermitian eigendecomposition. Only the Hermitian part of `m` is used;
/// callers that care should check [`CMatrix::is_hermitian`] first.
pub fn eigh(m: &CMatrix) -> Result<Eigh> {
    let n = m.dim();
    let mut a = m.clone();
    // Symmetrize so rounding noise in the input cannot stall convergence.
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if libm::sqrt(off) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        bail!(Numerical, "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps");
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(Eigh { values, vectors })
}

// One Jacobi rotation zeroing a[p][q]. G = diag(1, e^{-iθ})·[[c, s], [-s, c]]
// on the (p, q) plane, where θ = arg a[p][q]; A ← G†AG, V ← VG.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag < 1e-300 {
        return;
    }
    let n = a.dim();
    let ph = apq / mag; // e^{iθ}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + libm::sqrt(1.0 + theta * theta))
    } else {
        -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
    };
    let c = 1.0 / libm::sqrt(1.0 + t * t);
    let s = t * c;
    let g_qp = -ph.conj() * s; // G[q][p]
    let g_qq = ph.conj() * c; // G[q][q]

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * g_qp;
        a[(k, q)] = akp * s + akq * g_qq;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * g_qp;
        v[(k, q)] = vkp * s + vkq * g_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * g_qp.conj();
        a[(q, k)] = apk * s + aqk * g_qq.conj();
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
}

/// V diag(f(λ)) V†.
pub fn spectral_map(e: &Eigh, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = e.vectors.dim();
    let mut out = CMatrix::zeros(n);
    let fl: Vec<C64> = e.values.iter().map(|&l| f(l)).collect();
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += e.vectors[(i, k)] * fl[k] * e.vectors[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// U = exp(−iHt) by eigendecomposition. `H` in rad/s, `t` in seconds.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let defect = h.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        bail!(Domain, "generator is not Hermitian (defect {defect:.3e})");
    }
    if !t.is_finite() {
        bail!(Argument, "non-finite evolution time {t}");
    }
    let e = eigh(h)?;
    Ok(spectral_map(&e, |l| C64::from_polar(1.0, -l * t)))
}
