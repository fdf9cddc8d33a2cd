// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{bail, Result};

/// Largest supported Hilbert-space (or superoperator) dimension.
pub const MAX_DIM: usize = 16;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

fn valid_dim(dim: usize) -> bool {
    matches!(dim, 2 | 4 | 8 | 16)
}

/// Dense square complex matrix, row-major, dimension 2, 4, 8 or 16.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    /// Zero matrix.
    ///
    /// # Panics
    /// If `dim` is not one of 2, 4, 8, 16. Use [`CMatrix::from_vec`] for
    /// checked construction from untrusted sizes.
    pub fn zeros(dim: usize) -> Self {
        assert!(valid_dim(dim), "unsupported matrix dimension {dim}");
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if !valid_dim(dim) {
            bail!(Dimension, "dimension {dim} not in {{2, 4, 8, 16}}");
        }
        if data.len() != dim * dim {
            bail!(Dimension, "expected {} entries, got {}", dim * dim, data.len());
        }
        Ok(Self { dim, data })
    }

    /// Build from nested rows; handy for literals in tests.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                bail!(Dimension, "row of length {} in {dim}-row matrix", r.len());
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(dim, data)
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[C64]) -> Result<Self> {
        let dim = values.len();
        if !valid_dim(dim) {
            bail!(Dimension, "dimension {dim} not in {{2, 4, 8, 16}}");
        }
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        Ok(m)
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[C64], b: &[C64]) -> Result<Self> {
        if a.len() != b.len() {
            bail!(Dimension, "outer product of lengths {} and {}", a.len(), b.len());
        }
        let dim = a.len();
        let mut data = Vec::with_capacity(dim * dim);
        for x in a {
            for y in b {
                data.push(x * y.conj());
            }
        }
        Self::from_vec(dim, data)
    }

    /// Matrix unit |i⟩⟨j|.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(i, j)] = ONE;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Checked product; the `*` operator panics on mismatch instead.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.dim != rhs.dim {
            bail!(Dimension, "product of {0}x{0} and {1}x{1}", self.dim, rhs.dim);
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Self) -> Self {
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let rrow = &rhs.data[k * n..(k + 1) * n];
                for (d, &b) in dst.iter_mut().zip(rrow) {
                    *d += a * b;
                }
            }
        }
        Self { dim: n, data: out }
    }

    /// U·M·U†.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim {
            bail!(Dimension, "vector of length {} for {}x{} matrix", v.len(), self.dim, self.dim);
        }
        let n = self.dim;
        Ok((0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Like [`max_abs_diff`](Self::max_abs_diff) after removing the best
    /// global phase. Used wherever unitaries are compared projectively.
    pub fn max_abs_diff_up_to_phase(&self, other: &Self) -> f64 {
        let overlap: C64 = self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
        self.scale(phase).max_abs_diff(other)
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = (self.data[i * n + j] - self.data[j * n + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// ‖U U† − I‖_max.
    pub fn unitarity_defect(&self) -> f64 {
        (self * &self.adjoint()).max_abs_diff(&Self::identity(self.dim))
    }

    /// Kronecker product a ⊗ b.
    pub fn tensor(&self, b: &Self) -> Result<Self> {
        let (na, nb) = (self.dim, b.dim);
        let n = na * nb;
        if n > MAX_DIM {
            bail!(Dimension, "tensor product dimension {n} exceeds {MAX_DIM}");
        }
        let mut out = Self::zeros(n);
        for i in 0..na {
            for j in 0..na {
                let a = self.data[i * na + j];
                if a == ZERO {
                    continue;
                }
                for k in 0..nb {
                    for l in 0..nb {
                        out.data[(i * nb + k) * n + j * nb + l] = a * b.data[k * nb + l];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Trace out one qubit; qubit 0 is the leftmost tensor factor.
    pub fn partial_trace(&self, qubit: usize) -> Result<Self> {
        let n_qubits = self.dim.trailing_zeros() as usize;
        if qubit >= n_qubits {
            bail!(Dimension, "qubit {qubit} out of range for {n_qubits}-qubit operator");
        }
        if n_qubits < 2 {
            bail!(Dimension, "cannot trace out the only qubit");
        }
        let left = 1usize << qubit;
        let right = self.dim >> (qubit + 1);
        Ok(self.trace_middle(left, 2, right))
    }

    /// Trace out the right factor of dimension `right_dim`, keeping the left.
    pub fn trace_out_right(&self, right_dim: usize) -> Result<Self> {
        if right_dim == 0 || self.dim % right_dim != 0 || self.dim / right_dim < 2 {
            bail!(Dimension, "cannot trace a {right_dim}-dim factor from dimension {}", self.dim);
        }
        Ok(self.trace_middle(self.dim / right_dim, right_dim, 1))
    }

    /// Trace out the left factor of dimension `left_dim`, keeping the right.
    pub fn trace_out_left(&self, left_dim: usize) -> Result<Self> {
        if left_dim == 0 || self.dim % left_dim != 0 || self.dim / left_dim < 2 {
            bail!(Dimension, "cannot trace a {left_dim}-dim factor from dimension {}", self.dim);
        }
        Ok(self.trace_middle(1, left_dim, self.dim / left_dim))
    }

    // Space is L ⊗ M ⊗ R; M is traced.
    fn trace_middle(&self, l: usize, m: usize, r: usize) -> Self {
        let out_dim = l * r;
        let n = self.dim;
        let mut out = Self::zeros(out_dim);
        for a in 0..l {
            for b in 0..r {
                for c in 0..l {
                    for d in 0..r {
                        let mut acc = ZERO;
                        for k in 0..m {
                            let row = (a * m + k) * r + b;
                            let col = (c * m + k) * r + d;
                            acc += self.data[row * n + col];
                        }
                        out.data[(a * r + b) * out_dim + c * r + d] = acc;
                    }
                }
            }
        }
        out
    }

    /// Row-major vectorization.
    pub fn vec_r(&self) -> Vec<C64> {
        self.data.clone()
    }

    /// Embed a 2×2 operator acting on `qubit` of an `n_qubits` register.
    pub fn embed(op: &Self, qubit: usize, n_qubits: usize) -> Result<Self> {
        if op.dim != 2 {
            bail!(Dimension, "embed expects a single-qubit operator");
        }
        if qubit >= n_qubits {
            bail!(Dimension, "qubit {qubit} out of range for {n_qubits} qubits");
        }
        let mut acc: Option<Self> = None;
        for q in 0..n_qubits {
            let f = if q == qubit { op.clone() } else { Self::identity(2) };
            acc = Some(match acc {
                None => f,
                Some(a) => a.tensor(&f)?,
            });
        }
        Ok(acc.expect("n_qubits >= 1"))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.dim && j < self.dim, "index out of bounds");
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.dim && j < self.dim, "index out of bounds");
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        self.mul_unchecked(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self.data[i * self.dim + j];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Pauli matrices and spin-½ operators.
pub mod pauli {
    use super::*;

    pub fn x() -> CMatrix {
        CMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()
    }

    pub fn y() -> CMatrix {
        CMatrix::from_rows(&[[ZERO, -I], [I, ZERO]]).unwrap()
    }

    pub fn z() -> CMatrix {
        CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap()
    }

    /// Projector onto |0⟩ = |↑⟩.
    pub fn p0() -> CMatrix {
        CMatrix::unit(2, 0, 0)
    }

    pub fn p1() -> CMatrix {
        CMatrix::unit(2, 1, 1)
    }

    /// n·σ for a real 3-vector.
    pub fn dot(n: [f64; 3]) -> CMatrix {
        let mut m = x().scale_re(n[0]);
        m = &m + &y().scale_re(n[1]);
        &m + &z().scale_re(n[2])
    }
}
