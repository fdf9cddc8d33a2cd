// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small dense complex linear algebra (dimensions 2–16).

mod density;
mod eigen;
mod matrix;
mod su2;

pub use density::{DensityMatrix, PSD_TOL};
pub use eigen::{eigh, expm_hermitian, spectral_map, Eigh, HERMITIAN_TOL};
pub use matrix::{pauli, CMatrix, MAX_DIM};
pub use su2::{add as add_vec, compose_axis_angle, cross, dot, norm, normalize, scale as scale_vec, AxisAngle, Su2, Vec3};

pub use num_complex::Complex64 as C64;

/// Free function form of [`CMatrix::tensor`].
pub fn tensor(a: &CMatrix, b: &CMatrix) -> crate::Result<CMatrix> {
    a.tensor(b)
}

/// Free function form of [`CMatrix::partial_trace`]; `qubit` 0 is the
/// leftmost factor (the electron, by the crate's ordering convention).
pub fn partial_trace(m: &CMatrix, qubit: usize) -> crate::Result<CMatrix> {
    m.partial_trace(qubit)
}
