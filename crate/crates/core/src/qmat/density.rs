// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use super::eigen::{eigh, HERMITIAN_TOL};
use super::matrix::{pauli, CMatrix, ZERO};
use crate::error::{bail, Result};

/// Smallest eigenvalue accepted as non-negative.
pub const PSD_TOL: f64 = -1e-9;
const TRACE_TOL: f64 = 1e-10;

/// Validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let h = mat.hermiticity_defect();
        if h > HERMITIAN_TOL {
            bail!(Domain, "density matrix not Hermitian (defect {h:.3e})");
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            bail!(Domain, "density matrix trace {tr} != 1");
        }
        let min = eigh(&mat)?.values[0];
        if min < PSD_TOL {
            bail!(Domain, "density matrix has negative eigenvalue {min:.3e}");
        }
        Ok(Self { mat })
    }

    /// Accept without the eigenvalue check. For states produced by CPTP maps
    /// from valid states, where the check would only cost time.
    pub(crate) fn from_channel_output(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn pure(state: &[C64]) -> Result<Self> {
        let n2: f64 = state.iter().map(|z| z.norm_sqr()).sum();
        if n2 <= 0.0 || !n2.is_finite() {
            bail!(Domain, "state vector has zero or non-finite norm");
        }
        let s = 1.0 / libm::sqrt(n2);
        let v: Vec<C64> = state.iter().map(|z| z * s).collect();
        Self::new(CMatrix::outer(&v, &v)?)
    }

    /// Computational basis projector |k⟩⟨k|.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            bail!(Argument, "basis index {k} out of range for dimension {dim}");
        }
        let mut v = alloc::vec![ZERO; dim];
        v[k] = C64::new(1.0, 0.0);
        Self::pure(&v)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim).scale_re(1.0 / dim as f64) }
    }

    /// Single-qubit state from a Bloch vector with |r| ≤ 1.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let m = &CMatrix::identity(2) + &pauli::dot(r);
        Self::new(m.scale_re(0.5))
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self { mat: self.mat.tensor(&other.mat)? })
    }

    pub fn partial_trace(&self, qubit: usize) -> Result<Self> {
        Ok(Self { mat: self.mat.partial_trace(qubit)? })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// Tr(ρ²).
    pub fn purity(&self) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (self.mat[(i, j)] * self.mat[(j, i)]).re;
            }
        }
        s
    }

    pub fn population(&self, k: usize) -> f64 {
        self.mat[(k, k)].re
    }

    /// Tr(ρ·O), real part.
    pub fn expectation(&self, o: &CMatrix) -> f64 {
        (&self.mat * o).trace().re
    }

    /// Bloch vector of a single qubit.
    pub fn bloch(&self) -> Result<[f64; 3]> {
        if self.dim() != 2 {
            bail!(Dimension, "Bloch vector needs a single qubit, got dimension {}", self.dim());
        }
        Ok([
            self.expectation(&pauli::x()),
            self.expectation(&pauli::y()),
            self.expectation(&pauli::z()),
        ])
    }

    /// Unitary evolution U ρ U†.
    pub fn evolve(&self, u: &CMatrix) -> Result<Self> {
        if u.dim() != self.dim() {
            bail!(Dimension, "unitary dimension {} vs state dimension {}", u.dim(), self.dim());
        }
        Ok(Self { mat: self.mat.conjugate_by(u) })
    }

    /// Uhlmann fidelity is not needed here; this is Tr(ρσ) which equals the
    /// fidelity when one argument is pure.
    pub fn overlap(&self, other: &Self) -> f64 {
        (&self.mat * &other.mat).trace().re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_psd() {
        let m = CMatrix::diag(&[C64::new(1.1, 0.0), C64::new(-0.1, 0.0)]).unwrap();
        assert!(DensityMatrix::new(m).is_err());
        let m = CMatrix::diag(&[C64::new(0.6, 0.0), C64::new(0.6, 0.0)]).unwrap();
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::from_bloch([1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn basic_states() {
        let p = DensityMatrix::basis(4, 3).unwrap();
        assert_eq!(p.population(3), 1.0);
        assert!((p.purity() - 1.0).abs() < 1e-15);
        let m = DensityMatrix::maximally_mixed(4);
        assert!((m.purity() - 0.25).abs() < 1e-15);
        let b = DensityMatrix::from_bloch([0.0, 0.6, 0.0]).unwrap().bloch().unwrap();
        assert!((b[1] - 0.6).abs() < 1e-15);
    }

    fn bloch_ball() -> impl Strategy<Value = [f64; 3]> {
        (0.0..1.0f64, 0.0..core::f64::consts::PI, 0.0..core::f64::consts::TAU).prop_map(|(r, t, p)| {
            [r * libm::sin(t) * libm::cos(p), r * libm::sin(t) * libm::sin(p), r * libm::cos(t)]
        })
    }

    proptest! {
        #[test]
        fn tensor_then_trace_recovers_factors(a in bloch_ball(), b in bloch_ball()) {
            let ra = DensityMatrix::from_bloch(a).unwrap();
            let rb = DensityMatrix::from_bloch(b).unwrap();
            let ab = ra.tensor(&rb).unwrap();
            prop_assert!(ab.partial_trace(1).unwrap().matrix().max_abs_diff(ra.matrix()) < 1e-10);
            prop_assert!(ab.partial_trace(0).unwrap().matrix().max_abs_diff(rb.matrix()) < 1e-10);
        }
    }
}
