// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! SU(2) elements as unit quaternions and the projective axis-angle form.
//!
//! `Su2 { w, v }` stands for `w·I − i v·σ`. Products of these are exact
//! (sign included), which matters when two conditional branches are
//! compared: the relative sign between `V₊V₋` and `V₋V₊` is physical even
//! though each one alone is only defined up to phase.

use core::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::matrix::CMatrix;
use crate::error::{bail, Result};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

const Z_HAT: Vec3 = [0.0, 0.0, 1.0];

/// Rotation `exp(−i·angle/2·axis·σ)` modulo global phase.
///
/// Canonical form: angle in [0, π] (a subset of (−π, π]); angle 0 carries
/// axis ẑ; at angle π the axis sign is fixed so its first non-negligible
/// component is positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisAngle {
    axis: Vec3,
    angle: f64,
}

impl AxisAngle {
    pub const IDENTITY: AxisAngle = AxisAngle { axis: Z_HAT, angle: 0.0 };

    /// Axis must have unit length to within 1e-9; it is renormalized.
    pub fn new(axis: Vec3, angle: f64) -> Result<Self> {
        if !angle.is_finite() || axis.iter().any(|x| !x.is_finite()) {
            bail!(Argument, "non-finite axis-angle");
        }
        let n = norm(axis);
        if libm::fabs(n - 1.0) > 1e-9 {
            if n == 0.0 && angle == 0.0 {
                return Ok(Self::IDENTITY);
            }
            bail!(Argument, "rotation axis has length {n}, expected 1");
        }
        Ok(Su2::from_axis_angle_raw(scale(axis, 1.0 / n), angle).to_axis_angle())
    }

    pub fn x(angle: f64) -> Self {
        Self::new([1.0, 0.0, 0.0], angle).expect("unit axis")
    }

    pub fn y(angle: f64) -> Self {
        Self::new([0.0, 1.0, 0.0], angle).expect("unit axis")
    }

    pub fn z(angle: f64) -> Self {
        Self::new(Z_HAT, angle).expect("unit axis")
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn to_su2(&self) -> Su2 {
        Su2::from_axis_angle_raw(self.axis, self.angle)
    }

    /// 2×2 matrix `exp(−i·angle/2·axis·σ)` (the SU(2) representative).
    pub fn matrix(&self) -> CMatrix {
        self.to_su2().matrix()
    }

    pub fn inverse(&self) -> Self {
        self.to_su2().inverse().to_axis_angle()
    }

    /// Projective distance: ‖q₁ ∓ q₂‖ minimized over the sign, as quaternions.
    pub fn distance(&self, other: &Self) -> f64 {
        self.to_su2().projective_distance(&other.to_su2())
    }
}

/// Composition r1 ∘ r2, meaning the matrix product `R(r1)·R(r2)` (r2 acts
/// first). With half-angles aᵢ = angleᵢ/2 this is
/// cos a = cos a₁ cos a₂ − sin a₁ sin a₂ (p₁·p₂),
/// p sin a = p₁ sin a₁ cos a₂ + p₂ sin a₂ cos a₁ + (p₁×p₂) sin a₁ sin a₂.
pub fn compose_axis_angle(r1: &AxisAngle, r2: &AxisAngle) -> AxisAngle {
    r1.to_su2().compose(&r2.to_su2()).to_axis_angle()
}

/// Unit quaternion `w·I − i v·σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2 {
    pub w: f64,
    pub v: Vec3,
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 { w: 1.0, v: [0.0; 3] };

    fn from_axis_angle_raw(axis: Vec3, angle: f64) -> Self {
        let h = 0.5 * angle;
        Self { w: libm::cos(h), v: scale(axis, libm::sin(h)) }
    }

    /// `exp(−i·angle/2·axis·σ)` with `axis` assumed unit.
    pub fn rotation(axis: Vec3, angle: f64) -> Self {
        Self::from_axis_angle_raw(axis, angle)
    }

    /// Product self·other.
    pub fn compose(&self, other: &Self) -> Self {
        let (w1, v1, w2, v2) = (self.w, self.v, other.w, other.v);
        Self {
            w: w1 * w2 - dot(v1, v2),
            v: add(add(scale(v2, w1), scale(v1, w2)), cross(v1, v2)),
        }
    }

    pub fn inverse(&self) -> Self {
        Self { w: self.w, v: scale(self.v, -1.0) }
    }

    pub fn neg(&self) -> Self {
        Self { w: -self.w, v: scale(self.v, -1.0) }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::IDENTITY;
        let mut base = *self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            k >>= 1;
        }
        acc
    }

    pub fn matrix(&self) -> CMatrix {
        let [x, y, z] = self.v;
        let w = self.w;
        CMatrix::from_rows(&[
            [C64::new(w, -z), C64::new(-y, -x)],
            [C64::new(y, -x), C64::new(w, z)],
        ])
        .expect("2x2")
    }

    /// Extract from a 2×2 matrix proportional to an SU(2) element. The
    /// global phase is removed, so the overall sign of the result is a
    /// convention (largest component made positive real).
    pub fn from_matrix_projective(m: &CMatrix) -> Result<Self> {
        if m.dim() != 2 {
            bail!(Dimension, "expected 2x2 matrix, got {0}x{0}", m.dim());
        }
        let i = C64::new(0.0, 1.0);
        let comps = [
            (m[(0, 0)] + m[(1, 1)]) * 0.5,
            i * (m[(0, 1)] + m[(1, 0)]) * 0.5,
            (m[(1, 0)] - m[(0, 1)]) * 0.5,
            i * (m[(0, 0)] - m[(1, 1)]) * 0.5,
        ];
        let big = comps
            .iter()
            .copied()
            .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
            .expect("non-empty");
        if big.norm() < 1e-300 {
            bail!(Domain, "zero matrix has no rotation");
        }
        let ph = big.conj() / big.norm();
        let r: [f64; 4] = core::array::from_fn(|k| (comps[k] * ph).re);
        let n = libm::sqrt(r.iter().map(|x| x * x).sum());
        Ok(Self { w: r[0] / n, v: [r[1] / n, r[2] / n, r[3] / n] })
    }

    /// Canonical projective axis-angle.
    pub fn to_axis_angle(&self) -> AxisAngle {
        let (mut w, mut v) = (self.w, self.v);
        if w < 0.0 {
            w = -w;
            v = scale(v, -1.0);
        }
        let s = norm(v);
        if s < 1e-15 {
            return AxisAngle::IDENTITY;
        }
        let angle = 2.0 * libm::atan2(s, w);
        let mut axis = scale(v, 1.0 / s);
        if w < 1e-15 {
            if let Some(&lead) = axis.iter().find(|c| libm::fabs(**c) > 1e-12) {
                if lead < 0.0 {
                    axis = scale(axis, -1.0);
                }
            }
        }
        AxisAngle { axis, angle: angle.min(PI) }
    }

    /// Rotation angle in [0, 2π), sign-sensitive (not projective).
    pub fn signed_angle(&self) -> f64 {
        2.0 * libm::atan2(norm(self.v), self.w)
    }

    pub fn projective_distance(&self, other: &Self) -> f64 {
        let d = |s: f64| {
            let dw = self.w - s * other.w;
            let dv = [self.v[0] - s * other.v[0], self.v[1] - s * other.v[1], self.v[2] - s * other.v[2]];
            libm::sqrt(dw * dw + dot(dv, dv))
        };
        d(1.0).min(d(-1.0))
    }
}
