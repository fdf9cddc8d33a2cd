// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Secular electron–nuclear Hamiltonian and the conditional rotations it
//! generates under dynamical decoupling.
//!
//! H = |↑⟩⟨↑| ⊗ H₊ + |↓⟩⟨↓| ⊗ H₋ with H± = (ω_L ± A∥) I_z ± A⊥ I_x. Between
//! pulses the nucleus precesses about m± at ω±; one τ–π–τ block gives
//! V = |↑⟩⟨↓| ⊗ U₊U₋ + |↓⟩⟨↑| ⊗ U₋U₊, and two blocks give the conditional
//! rotation W = |↑⟩⟨↑| ⊗ W₊ + |↓⟩⟨↓| ⊗ W₋ by 2α about q±.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{bail, Result};
use crate::qmat::{self, pauli, AxisAngle, CMatrix, Su2, Vec3};
use crate::units;

/// Secular coupling parameters, all angular frequencies in rad/s.
///
/// The x axis is chosen so that A_y = 0 and A⊥ ≥ 0. The sign of A∥ is
/// physical but not always known experimentally; keep both branches in mind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperfineParams {
    a_par: f64,
    a_perp: f64,
    omega_l: f64,
}

impl HyperfineParams {
    pub fn new(a_par: f64, a_perp: f64, omega_l: f64) -> Result<Self> {
        if !(a_par.is_finite() && a_perp.is_finite() && omega_l.is_finite()) {
            bail!(Argument, "non-finite hyperfine parameter");
        }
        if a_perp < 0.0 {
            bail!(Domain, "a_perp must be >= 0 (gauge A_x >= 0), got {a_perp}");
        }
        if omega_l <= 0.0 {
            bail!(Domain, "omega_l must be > 0, got {omega_l}");
        }
        Ok(Self { a_par, a_perp, omega_l })
    }

    /// Construct from ordinary frequencies in kHz.
    pub fn from_khz(a_par_khz: f64, a_perp_khz: f64, omega_l_khz: f64) -> Result<Self> {
        Self::new(units::khz_to_rad(a_par_khz), units::khz_to_rad(a_perp_khz), units::khz_to_rad(omega_l_khz))
    }

    /// The measured proton coupling: (A∥, A⊥, ω_L)/2π = (19.4, 50.5, 567.4) kHz,
    /// on the A∥ > 0 branch.
    pub fn reference() -> Self {
        Self::from_khz(19.4, 50.5, 567.4).expect("valid constants")
    }

    pub fn a_par(&self) -> f64 {
        self.a_par
    }

    pub fn a_perp(&self) -> f64 {
        self.a_perp
    }

    pub fn omega_l(&self) -> f64 {
        self.omega_l
    }

    pub fn with_a_par(self, a_par: f64) -> Result<Self> {
        Self::new(a_par, self.a_perp, self.omega_l)
    }

    pub fn with_a_perp(self, a_perp: f64) -> Result<Self> {
        Self::new(self.a_par, a_perp, self.omega_l)
    }

    pub fn with_omega_l(self, omega_l: f64) -> Result<Self> {
        Self::new(self.a_par, self.a_perp, omega_l)
    }

    /// ω₊ = √((ω_L + A∥)² + A⊥²).
    pub fn omega_plus(&self) -> f64 {
        libm::hypot(self.omega_l + self.a_par, self.a_perp)
    }

    /// ω₋ = √((ω_L − A∥)² + A⊥²).
    pub fn omega_minus(&self) -> f64 {
        libm::hypot(self.omega_l - self.a_par, self.a_perp)
    }

    /// ω₀ = (ω₊ + ω₋)/2.
    pub fn omega0(&self) -> f64 {
        0.5 * (self.omega_plus() + self.omega_minus())
    }

    /// ω_δ = (ω₊ − ω₋)/2; its sign follows A∥.
    pub fn omega_delta(&self) -> f64 {
        0.5 * (self.omega_plus() - self.omega_minus())
    }

    /// Closed-form strong-field rotation per π pulse, 2A⊥ω_L/(ω₊ω₋).
    pub fn alpha_closed_form(&self) -> f64 {
        2.0 * self.a_perp * self.omega_l / (self.omega_plus() * self.omega_minus())
    }

    pub fn precession(&self) -> ConditionalPrecession {
        let wp = self.omega_plus();
        let wm = self.omega_minus();
        let m_plus = [self.a_perp / wp, 0.0, (self.omega_l + self.a_par) / wp];
        let m_minus = [-self.a_perp / wm, 0.0, (self.omega_l - self.a_par) / wm];
        let c = qmat::dot(m_plus, m_minus).clamp(-1.0, 1.0);
        ConditionalPrecession { omega_plus: wp, omega_minus: wm, m_plus, m_minus, gamma_axes: libm::acos(c) }
    }

    /// Nuclear free evolution U± over `t` seconds, exact SU(2).
    pub fn free_su2(&self, t: f64) -> (Su2, Su2) {
        let c = self.precession();
        (Su2::rotation(c.m_plus, c.omega_plus * t), Su2::rotation(c.m_minus, c.omega_minus * t))
    }

    /// 4×4 secular Hamiltonian, electron ⊗ nucleus.
    pub fn hamiltonian(&self) -> CMatrix {
        let (hp, hm, _) = conditional_hamiltonians(self);
        conditional(&hp, &hm)
    }

    /// 4×4 free propagator exp(−iHt).
    pub fn free_propagator(&self, t: f64) -> CMatrix {
        let (up, um) = self.free_su2(t);
        conditional(&up.matrix(), &um.matrix())
    }
}

/// Frequencies and axes of the two conditional precessions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalPrecession {
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// Unit axes; m± = (±A⊥, 0, ω_L ± A∥)/ω±.
    pub m_plus: Vec3,
    pub m_minus: Vec3,
    /// Angle between m₊ and m₋.
    pub gamma_axes: f64,
}

/// |↑⟩⟨↑| ⊗ a + |↓⟩⟨↓| ⊗ b for 2×2 nuclear operators.
pub fn conditional(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let up = pauli::p0().tensor(a).expect("2x2 operands");
    let down = pauli::p1().tensor(b).expect("2x2 operands");
    &up + &down
}

/// H± = (ω_L ± A∥) I_z ± A⊥ I_x with I = σ/2.
pub fn conditional_hamiltonians(p: &HyperfineParams) -> (CMatrix, CMatrix, ConditionalPrecession) {
    let build = |s: f64| {
        let z = pauli::z().scale_re(0.5 * (p.omega_l + s * p.a_par));
        let x = pauli::x().scale_re(0.5 * s * p.a_perp);
        &z + &x
    };
    (build(1.0), build(-1.0), p.precession())
}

/// One decoupling block τ–π–τ and its square.
#[derive(Clone, Debug)]
pub struct DDBlockResult {
    /// V± = U±U∓ (nuclear part of the off-diagonal blocks of V).
    pub v_plus: AxisAngle,
    pub v_minus: AxisAngle,
    /// Exact W± = V±V∓, sign preserved.
    pub w_plus: Su2,
    pub w_minus: Su2,
    /// Rotation axes of W±.
    pub q_plus: Vec3,
    pub q_minus: Vec3,
    /// Nuclear rotation per π pulse; W± rotate by 2α.
    pub alpha: f64,
    /// Exact 4×4 unitaries V = U·X_e·U and W = V², X_e = σ_x ⊗ I.
    pub v_block: CMatrix,
    pub w_block: CMatrix,
}

/// Propagators for the block τ–π–τ with ideal instantaneous π pulses.
pub fn dd_block(p: &HyperfineParams, tau: f64) -> Result<DDBlockResult> {
    if !(tau > 0.0) || !tau.is_finite() {
        bail!(Argument, "tau must be positive and finite, got {tau}");
    }
    let (up, um) = p.free_su2(tau);
    let vp = up.compose(&um);
    let vm = um.compose(&up);
    let wp = vp.compose(&vm);
    let wm = vm.compose(&vp);
    let wp_aa = wp.to_axis_angle();
    // Keep q± consistent with the sign-preserving pair: flip both if W₊ was
    // flipped during canonicalization, so q₊·q₋ stays meaningful.
    let sgn = if wp.w < 0.0 { -1.0 } else { 1.0 };
    let axis_of = |w: &Su2| {
        let v = qmat::scale_vec(w.v, sgn);
        qmat::normalize(v).unwrap_or([0.0, 0.0, 1.0])
    };

    let x_e = pauli::x().tensor(&CMatrix::identity(2))?;
    let u = conditional(&up.matrix(), &um.matrix());
    let v_block = &(&u * &x_e) * &u;
    let w_block = &v_block * &v_block;
    Ok(DDBlockResult {
        v_plus: vp.to_axis_angle(),
        v_minus: vm.to_axis_angle(),
        w_plus: wp,
        w_minus: wm,
        q_plus: axis_of(&wp),
        q_minus: axis_of(&wm),
        alpha: 0.5 * wp_aa.angle(),
        v_block,
        w_block,
    })
}

/// Strong-field resonant pulse spacings 2τ = (π + 2πm)/ω₀, m = 0..=m_max.
/// These are approximations; see [`refine_resonance`].
pub fn resonance_times(p: &HyperfineParams, m_max: usize) -> Vec<f64> {
    let w0 = p.omega0();
    (0..=m_max).map(|m| (PI + 2.0 * PI * m as f64) / w0).collect()
}

/// cos(φ₊/2)cos(φ₋/2) − sin(φ₊/2)sin(φ₋/2)cos γ with φ± = ω±τ.
///
/// This is the scalar part of V± = U±U∓; it vanishes when V± are π
/// rotations, which is when q₊ and q₋ are antiparallel.
pub fn antiparallel_residual(p: &HyperfineParams, tau: f64) -> f64 {
    let c = p.precession();
    let hp = 0.5 * c.omega_plus * tau;
    let hm = 0.5 * c.omega_minus * tau;
    libm::cos(hp) * libm::cos(hm) - libm::sin(hp) * libm::sin(hm) * libm::cos(c.gamma_axes)
}

/// Pulse spacing 2τ of resonance `m`, refined by bisection on
/// [`antiparallel_residual`] within ±10% of the strong-field value.
pub fn refine_resonance(p: &HyperfineParams, m: usize) -> Result<f64> {
    let two_tau0 = (PI + 2.0 * PI * m as f64) / p.omega0();
    let mut lo = 0.45 * two_tau0;
    let mut hi = 0.55 * two_tau0;
    let mut flo = antiparallel_residual(p, lo);
    let fhi = antiparallel_residual(p, hi);
    if flo == 0.0 {
        return Ok(2.0 * lo);
    }
    if fhi == 0.0 {
        return Ok(2.0 * hi);
    }
    if flo.signum() == fhi.signum() {
        bail!(Numerical, "no sign change of the antiparallel residual within 10% of resonance {m}");
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        let f = antiparallel_residual(p, mid);
        if f.signum() == flo.signum() {
            lo = mid;
            flo = f;
        } else {
            hi = mid;
        }
    }
    Ok(lo + hi)
}

/// Half-spacing τ of the first refined resonance; the default operating
/// point for gates.
pub fn resonant_tau(p: &HyperfineParams) -> Result<f64> {
    Ok(0.5 * refine_resonance(p, 0)?)
}

/// Vᴺ for an even number of ideal π pulses with spacing 2τ:
/// |↑⟩⟨↑| ⊗ W₊^{N/2} + |↓⟩⟨↓| ⊗ W₋^{N/2}.
pub fn xyn_propagator(p: &HyperfineParams, tau: f64, n_pulses: usize) -> Result<CMatrix> {
    if n_pulses < 2 || n_pulses % 2 != 0 {
        bail!(Argument, "n_pulses must be even and >= 2, got {n_pulses}");
    }
    if !(tau > 0.0) || !tau.is_finite() {
        bail!(Argument, "tau must be positive and finite, got {tau}");
    }
    let (up, um) = p.free_su2(tau);
    let vp = up.compose(&um);
    let vm = um.compose(&up);
    let k = u32::try_from(n_pulses / 2).map_err(|_| crate::Error::Argument("n_pulses too large".into()))?;
    let wp = vp.compose(&vm).pow(k);
    let wm = vm.compose(&vp).pow(k);
    Ok(conditional(&wp.matrix(), &wm.matrix()))
}
