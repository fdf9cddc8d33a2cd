// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Channel error models for the SWAP experiment: free evolution with
//! electron dephasing, the SWAP/iSWAP gates and their Larmor-ensemble
//! average, optical excitation during readout and initialization, and the
//! closed-form results derived from them.
//!
//! Channels are superoperators in row-major vectorization,
//! vec(AρB) = (A ⊗ Bᵀ) vec(ρ), so a unitary U maps to U ⊗ Ū.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{bail, Result};
use crate::hyperfine::{conditional, HyperfineParams};
use crate::qmat::{eigh, pauli, spectral_map, AxisAngle, CMatrix, DensityMatrix, Eigh};
use crate::quadrature::composite_gauss_legendre;
use crate::sequences::{sequence_channel, GateRealization, NuclearGate, PulseSequence};
use crate::units;

/// Trace-preservation tolerance used by [`QuantumChannel::validate`].
pub const TP_TOL: f64 = 1e-8;
/// Choi eigenvalue floor used by [`QuantumChannel::validate`].
pub const CP_TOL: f64 = -1e-8;

/// Linear map on d×d matrices (d ≤ 4) stored as a d²×d² superoperator.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChannel {
    dim: usize,
    superop: CMatrix,
}

impl QuantumChannel {
    pub fn identity(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "channels act on dimension 2 or 4");
        Self { dim, superop: CMatrix::identity(dim * dim) }
    }

    pub fn from_superop(dim: usize, superop: CMatrix) -> Result<Self> {
        if !(dim == 2 || dim == 4) || superop.dim() != dim * dim {
            bail!(Dimension, "superoperator of size {} for dimension {dim}", superop.dim());
        }
        Ok(Self { dim, superop })
    }

    /// ρ ↦ KρK† (a single, not necessarily unitary, operator).
    pub fn conjugation(k: &CMatrix) -> Result<Self> {
        let d = k.dim();
        if d > 4 {
            bail!(Dimension, "channels act on dimension 2 or 4, got {d}");
        }
        Self::from_superop(d, k.tensor(&k.conj())?)
    }

    pub fn unitary(u: &CMatrix) -> Result<Self> {
        Self::conjugation(u)
    }

    pub fn from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let Some(first) = ops.first() else { bail!(Argument, "empty Kraus list") };
        let mut acc = Self::conjugation(first)?;
        for k in &ops[1..] {
            if k.dim() != first.dim() {
                bail!(Dimension, "Kraus operators of mixed dimension");
            }
            acc.superop = &acc.superop + &Self::conjugation(k)?.superop;
        }
        Ok(acc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> Result<CMatrix> {
        if m.dim() != self.dim {
            bail!(Dimension, "state dimension {} vs channel dimension {}", m.dim(), self.dim);
        }
        let out = self.superop.apply(m.as_slice())?;
        CMatrix::from_vec(self.dim, out)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_channel_output(self.apply_matrix(rho.matrix())?))
    }

    /// `next ∘ self`: first self, then next.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if next.dim != self.dim {
            bail!(Dimension, "composing channels of dimension {} and {}", self.dim, next.dim);
        }
        Ok(Self { dim: self.dim, superop: &next.superop * &self.superop })
    }

    /// Convex combination Σ wᵢ 𝒮ᵢ; weights must sum to 1.
    pub fn mixture(items: &[(f64, Self)]) -> Result<Self> {
        let Some((_, first)) = items.first() else { bail!(Argument, "empty mixture") };
        let total: f64 = items.iter().map(|(w, _)| w).sum();
        if libm::fabs(total - 1.0) > 1e-12 || items.iter().any(|(w, _)| *w < 0.0) {
            bail!(Argument, "mixture weights must be non-negative and sum to 1 (got {total})");
        }
        let mut s = CMatrix::zeros(first.superop.dim());
        for (w, c) in items {
            if c.dim != first.dim {
                bail!(Dimension, "mixture of channels with different dimensions");
            }
            s = &s + &c.superop.scale_re(*w);
        }
        Ok(Self { dim: first.dim, superop: s })
    }

    /// n-fold composition by repeated squaring.
    pub fn power(&self, n: u64) -> Self {
        let mut acc = Self::identity(self.dim);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc.superop = &base.superop * &acc.superop;
            }
            base.superop = &base.superop * &base.superop;
            k >>= 1;
        }
        acc
    }

    /// Choi matrix J = Σᵢⱼ |i⟩⟨j| ⊗ 𝒮(|i⟩⟨j|).
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut j = CMatrix::zeros(d * d);
        for i in 0..d {
            for jj in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        j[(i * d + a, jj * d + b)] = self.superop[(a * d + b, i * d + jj)];
                    }
                }
            }
        }
        j
    }

    /// Kraus operators from the Choi eigendecomposition; eigenvalues below
    /// `tol` are dropped.
    pub fn kraus(&self, tol: f64) -> Result<Vec<CMatrix>> {
        let d = self.dim;
        let e = eigh(&self.choi())?;
        let mut ops = Vec::new();
        for (k, &lambda) in e.values.iter().enumerate() {
            if lambda <= tol {
                continue;
            }
            let s = libm::sqrt(lambda);
            let mut op = CMatrix::zeros(d);
            for a in 0..d {
                for i in 0..d {
                    op[(a, i)] = e.vectors[(i * d + a, k)] * s;
                }
            }
            ops.push(op);
        }
        Ok(ops)
    }

    /// max |Σₐ 𝒮[(a,a),(i,j)] − δᵢⱼ|; zero for trace-preserving maps.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let s: C64 = (0..d).map(|a| self.superop[(a * d + a, i * d + j)]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }

    pub fn min_choi_eigenvalue(&self) -> Result<f64> {
        Ok(eigh(&self.choi())?.values[0])
    }

    /// Check trace preservation (1e-8) and complete positivity (−1e-8).
    pub fn validate(&self) -> Result<()> {
        let tp = self.trace_defect();
        if tp > TP_TOL {
            bail!(Domain, "channel not trace preserving (defect {tp:.3e})");
        }
        let h = self.choi().hermiticity_defect();
        if h > 1e-8 {
            bail!(Domain, "Choi matrix not Hermitian (defect {h:.3e})");
        }
        let min = self.min_choi_eigenvalue()?;
        if min < CP_TOL {
            bail!(Domain, "channel not completely positive (Choi eigenvalue {min:.3e})");
        }
        Ok(())
    }
}

/// Multiply electron coherences (electron index differs) by `factor`.
fn electron_dephasing_superop(factor: f64) -> CMatrix {
    let mut s = CMatrix::identity(16);
    for a in 0..4 {
        for b in 0..4 {
            if (a >> 1) != (b >> 1) {
                let k = a * 4 + b;
                s[(k, k)] = C64::new(factor, 0.0);
            }
        }
    }
    s
}

/// Exact solution of the Lindblad equation with the secular Hamiltonian and
/// electron pure dephasing (coherence decay e^{−t/T₂}) over `t`. A negative
/// `t` runs the unitary part backwards; dephasing always uses |t|.
pub fn free_evolution_channel(p: &HyperfineParams, t: f64, dephasing_t2: Option<f64>) -> Result<QuantumChannel> {
    let u = QuantumChannel::unitary(&p.free_propagator(t))?;
    match dephasing_t2 {
        None => Ok(u),
        Some(t2) if t2 > 0.0 => {
            let d = electron_dephasing_superop(libm::exp(-libm::fabs(t) / t2));
            Ok(QuantumChannel { dim: 4, superop: &d * &u.superop })
        }
        Some(t2) => bail!(Argument, "dephasing T2 must be > 0, got {t2}"),
    }
}

/// Non-selective electron z measurement.
pub fn electron_z_measurement() -> QuantumChannel {
    QuantumChannel { dim: 4, superop: electron_dephasing_superop(0.0) }
}

// ---------------------------------------------------------------------------
// Larmor ensemble

/// Classical mixture of nuclear Larmor detunings (static within a shot).
#[derive(Clone, Debug, PartialEq)]
pub struct LarmorEnsemble {
    detunings: Vec<f64>,
    weights: Vec<f64>,
}

/// Dark-spin couplings in Hz.
pub const DARK_A1_HZ: f64 = 2.25e3;
pub const DARK_A2_HZ: f64 = 7.18e3;

impl LarmorEnsemble {
    pub fn new(detunings: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if detunings.is_empty() || detunings.len() != weights.len() {
            bail!(Argument, "ensemble needs matching, non-empty detuning and weight lists");
        }
        let total: f64 = weights.iter().sum();
        if libm::fabs(total - 1.0) > 1e-12 || weights.iter().any(|w| *w < 0.0) {
            bail!(Argument, "ensemble weights must be non-negative and sum to 1 (got {total})");
        }
        if detunings.iter().any(|d| !d.is_finite()) {
            bail!(Argument, "non-finite detuning");
        }
        Ok(Self { detunings, weights })
    }

    /// A single, unshifted frequency.
    pub fn single() -> Self {
        Self { detunings: vec![0.0], weights: vec![1.0] }
    }

    /// The four shifts ±A₁ ± A₂ from two static dark spins (couplings in Hz),
    /// uniformly weighted. Order: (+,+), (−,+), (+,−), (−,−).
    pub fn dark_spins(a1_hz: f64, a2_hz: f64) -> Self {
        let d = [a1_hz + a2_hz, a2_hz - a1_hz, a1_hz - a2_hz, -a1_hz - a2_hz];
        Self { detunings: d.iter().map(|&f| units::hz_to_rad(f)).collect(), weights: vec![0.25; 4] }
    }

    /// Detunings multiplied by `k` (k = 0 collapses the spread).
    pub fn scaled(&self, k: f64) -> Self {
        Self { detunings: self.detunings.iter().map(|d| d * k).collect(), weights: self.weights.clone() }
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// (weight, params with ω_L + Δᵢ) for each member.
    pub fn members(&self, p: &HyperfineParams) -> Result<Vec<(f64, HyperfineParams)>> {
        self.detunings
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| Ok((*w, p.with_omega_l(p.omega_l() + d)?)))
            .collect()
    }
}

impl Default for LarmorEnsemble {
    fn default() -> Self {
        Self::dark_spins(DARK_A1_HZ, DARK_A2_HZ)
    }
}

// ---------------------------------------------------------------------------
// SWAP

/// −e^{iπ/4}(|00⟩⟨00| − i|01⟩⟨10| − |10⟩⟨01| − i|11⟩⟨11|).
pub fn swap_target() -> CMatrix {
    let ph = -C64::from_polar(1.0, FRAC_PI_4);
    let mut m = CMatrix::zeros(4);
    m[(0, 0)] = ph;
    m[(1, 2)] = ph * C64::new(0.0, -1.0);
    m[(2, 1)] = -ph;
    m[(3, 3)] = ph * C64::new(0.0, -1.0);
    m
}

/// |00⟩⟨00| + i|01⟩⟨10| + i|10⟩⟨01| + |11⟩⟨11|.
pub fn iswap_target() -> CMatrix {
    let mut m = CMatrix::zeros(4);
    m[(0, 0)] = C64::new(1.0, 0.0);
    m[(1, 2)] = C64::new(0.0, 1.0);
    m[(2, 1)] = C64::new(0.0, 1.0);
    m[(3, 3)] = C64::new(1.0, 0.0);
    m
}

fn kron2(a: &AxisAngle, b: &AxisAngle) -> CMatrix {
    a.matrix().tensor(&b.matrix()).expect("4x4")
}

/// The SWAP decomposition with perfect components:
/// U_XY8 · R_y(−π/2)⊗R_z(π/2) · U_XY8 · R_x(π/2)⊗R_z(π/2) · U_XY8 with
/// U_XY8 = |0⟩⟨0| ⊗ R_x(π/2) + |1⟩⟨1| ⊗ R_x(−π/2).
pub fn ideal_swap_unitary() -> CMatrix {
    let cx = conditional(&AxisAngle::x(FRAC_PI_2).matrix(), &AxisAngle::x(-FRAC_PI_2).matrix());
    let f1 = kron2(&AxisAngle::x(FRAC_PI_2), &AxisAngle::z(FRAC_PI_2));
    let f2 = kron2(&AxisAngle::y(-FRAC_PI_2), &AxisAngle::z(FRAC_PI_2));
    &(&(&(&cx * &f2) * &cx) * &f1) * &cx
}

/// R_z(5π/4)⊗R_z(0) · swap · R_z(π)⊗R_z(π/4).
pub fn iswap_from_swap(swap: &CMatrix) -> Result<CMatrix> {
    if swap.dim() != 4 {
        bail!(Dimension, "iswap_from_swap needs a 4x4 operator");
    }
    let before = kron2(&AxisAngle::z(PI), &AxisAngle::z(FRAC_PI_4));
    let after = kron2(&AxisAngle::z(1.25 * PI), &AxisAngle::IDENTITY);
    Ok(&(&after * swap) * &before)
}

/// Physical SWAP gate and its diagnostics.
#[derive(Clone, Debug)]
pub struct SwapGate {
    pub unitary: CMatrix,
    /// Gate block half-spacing τ₀ (s).
    pub tau0: f64,
    /// Free-precession time standing in for the nuclear R_z(π/2) (s).
    pub t_z: f64,
    /// Rotation per π pulse at τ₀.
    pub alpha: f64,
    /// Set when 8α misses π/2 by more than 20%.
    pub alpha_warning: bool,
}

/// The SWAP decomposition as a pulse sequence. Nuclear R_z(π/2) is free
/// precession for `t_z`; it follows the electron framing pulse.
pub fn swap_sequence(gates: GateRealization, t_z: f64) -> Result<PulseSequence> {
    let mut s = PulseSequence::new(gates)?.with_label("swap (XY-8 blocks)");
    s.gate(NuclearGate::CondRx)?;
    s.pulse([1.0, 0.0, 0.0], FRAC_PI_2)?;
    s.free(t_z)?;
    s.gate(NuclearGate::CondRx)?;
    s.pulse([0.0, 1.0, 0.0], -FRAC_PI_2)?;
    s.free(t_z)?;
    s.gate(NuclearGate::CondRx)?;
    Ok(s)
}

/// Physical SWAP for `p`: XY-8 blocks at the refined resonance, R_z(π/2) by
/// free precession for the nominal π/(2ω₀).
pub fn swap_unitary(p: &HyperfineParams) -> Result<SwapGate> {
    let tau0 = crate::hyperfine::resonant_tau(p)?;
    let t_z = FRAC_PI_2 / p.omega0();
    let seq = swap_sequence(GateRealization::Decoupled { tau: tau0 }, t_z)?;
    let unitary = crate::sequences::sequence_unitary(&seq, p)?;
    let alpha = crate::hyperfine::dd_block(p, tau0)?.alpha;
    let alpha_warning = libm::fabs(8.0 * alpha - FRAC_PI_2) > 0.2 * FRAC_PI_2;
    Ok(SwapGate { unitary, tau0, t_z, alpha, alpha_warning })
}

/// Ensemble-averaged SWAP channel. Each member shifts ω_L but keeps the
/// nominal τ₀ and t_z, as an experiment would; electron dephasing applies
/// during every free-evolution step.
pub fn swap_channel(p: &HyperfineParams, ens: &LarmorEnsemble, dephasing_t2: Option<f64>) -> Result<QuantumChannel> {
    let tau0 = crate::hyperfine::resonant_tau(p)?;
    let seq = swap_sequence(GateRealization::Decoupled { tau: tau0 }, FRAC_PI_2 / p.omega0())?;
    let items: Vec<(f64, QuantumChannel)> = ens
        .members(p)?
        .into_iter()
        .map(|(w, q)| Ok((w, sequence_channel(&seq, &q, dephasing_t2)?)))
        .collect::<Result<_>>()?;
    QuantumChannel::mixture(&items)
}

/// ¼ Σ_ab ⟨ba| 𝒮(|ab⟩⟨ab|) |ba⟩.
pub fn swap_fidelity_computational(ch: &QuantumChannel) -> Result<f64> {
    if ch.dim() != 4 {
        bail!(Dimension, "SWAP fidelity needs a two-qubit channel");
    }
    let mut f = 0.0;
    for e in 0..2 {
        for n in 0..2 {
            let out = ch.apply_matrix(&CMatrix::unit(4, 2 * e + n, 2 * e + n))?;
            let k = 2 * n + e;
            f += out[(k, k)].re;
        }
    }
    Ok(0.25 * f)
}

// ---------------------------------------------------------------------------
// Optical excitation

/// Optical cycle parameters and the excited-state coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalParams {
    /// Excited-state lifetime T₁,op (s).
    pub t1_op: f64,
    /// Photon collection window t_W (s).
    pub t_window: f64,
    /// Spin-flip probability per optical cycle.
    pub p_flip: f64,
    pub n_readout_pulses: usize,
    pub n_init_pulses: usize,
    /// Hyperfine coupling while the electron is optically excited.
    pub excited_hyperfine: HyperfineParams,
}

/// Ratio δ_f/γ of the excited-state A∥ change to the optical decay rate.
pub const REFERENCE_DELTA_F_OVER_GAMMA: f64 = 0.56;

impl OpticalParams {
    /// 60 μs lifetime, 120 μs window, 0.2% flips, 450/40 pulses. The excited
    /// coupling keeps A⊥ and lowers A∥ by δ_A = 2π·0.56/T₁,op.
    pub fn reference(ground: &HyperfineParams) -> Result<Self> {
        let t1_op = 60e-6;
        let delta_a = units::TWO_PI * REFERENCE_DELTA_F_OVER_GAMMA / t1_op;
        Ok(Self {
            t1_op,
            t_window: 120e-6,
            p_flip: 0.002,
            n_readout_pulses: 450,
            n_init_pulses: 40,
            excited_hyperfine: ground.with_a_par(ground.a_par() - delta_a)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_op > 0.0 && self.t_window > 0.0) {
            bail!(Argument, "optical lifetime and window must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_flip) {
            bail!(Argument, "p_flip must be a probability, got {}", self.p_flip);
        }
        if self.n_readout_pulses == 0 || self.n_init_pulses == 0 {
            bail!(Argument, "pulse counts must be >= 1");
        }
        Ok(())
    }

    /// p_R = e^{−t_W/T₁,op}.
    pub fn p_remain(&self) -> f64 {
        libm::exp(-self.t_window / self.t1_op)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExcitationBranch {
    /// Excites |0⟩ and pumps it to |1⟩.
    Init,
    /// Excites |1⟩ (cycling transition).
    Readout,
}

/// Generic excite–decay map.
///
/// Members are (weight, H_g, H_e). The `bright` projector's component is
/// excited at t = 0 and decays at t ~ p(t), after which it evolves under
/// H_g for the rest of the window; the `dark` component evolves under H_g
/// for the whole window. At decay, `flip` (if any) is applied with its
/// probability. Decays after the window are represented by the p_R term.
pub struct ExcitationModel<'a> {
    pub members: &'a [(f64, CMatrix, CMatrix)],
    pub bright: &'a CMatrix,
    pub dark: Option<&'a CMatrix>,
    pub flip: Option<(&'a CMatrix, f64)>,
    pub t1: f64,
    pub t_window: f64,
}

const GL_NODES: usize = 64;
/// Target oscillation periods per quadrature panel.
const PERIODS_PER_PANEL: f64 = 4.0;

fn spread(e: &Eigh) -> f64 {
    e.values.last().copied().unwrap_or(0.0) - e.values.first().copied().unwrap_or(0.0)
}

impl ExcitationModel<'_> {
    pub fn channel(&self) -> Result<QuantumChannel> {
        let d = self.bright.dim();
        let (t1, tw) = (self.t1, self.t_window);
        if !(t1 > 0.0 && tw > 0.0) {
            bail!(Argument, "lifetime and window must be positive");
        }
        let mut superop = CMatrix::zeros(d * d);
        let mut add = |k: &CMatrix, w: f64| {
            let s = k.tensor(&k.conj()).expect("dimension checked");
            superop = &superop + &s.scale_re(w);
        };
        let (flip_op, p_flip) = match self.flip {
            Some((f, p)) => (Some(f), p),
            None => (None, 0.0),
        };
        let p_r = libm::exp(-tw / t1);
        for (weight, hg, he) in self.members {
            if hg.dim() != d || he.dim() != d {
                bail!(Dimension, "Hamiltonian dimension does not match projector");
            }
            let eg = eigh(hg)?;
            let ee = eigh(he)?;
            let ug = |s: f64| spectral_map(&eg, |l| C64::from_polar(1.0, -l * s));
            let ue = |s: f64| spectral_map(&ee, |l| C64::from_polar(1.0, -l * s));

            if let Some(dark) = self.dark {
                add(&(&ug(tw) * dark), *weight);
            }
            // Integrand oscillates at most at spread(H_g) + spread(H_e).
            let w_max = spread(&eg) + spread(&ee);
            let periods = tw * w_max / units::TWO_PI;
            let panels = (libm::ceil(periods / PERIODS_PER_PANEL) as usize).max(libm::ceil(tw / t1) as usize).max(1);
            for (t, wq) in composite_gauss_legendre(0.0, tw, GL_NODES, panels) {
                let pt = libm::exp(-t / t1) / t1 * wq * weight;
                let excited = &ue(t) * self.bright;
                let after = ug(tw - t);
                if p_flip < 1.0 {
                    add(&(&after * &excited), pt * (1.0 - p_flip));
                }
                if let Some(f) = flip_op {
                    add(&(&(&after * f) * &excited), pt * p_flip);
                }
            }
            let excited = &ue(tw) * self.bright;
            if p_flip < 1.0 {
                add(&excited, p_r * weight * (1.0 - p_flip));
            }
            if let Some(f) = flip_op {
                add(&(f * &excited), p_r * weight * p_flip);
            }
        }
        QuantumChannel::from_superop(d, superop)
    }
}

fn electron_projectors() -> (CMatrix, CMatrix) {
    let id = CMatrix::identity(2);
    (pauli::p0().tensor(&id).expect("4x4"), pauli::p1().tensor(&id).expect("4x4"))
}

fn ensemble_hamiltonians(ground: &HyperfineParams, opt: &OpticalParams, ens: &LarmorEnsemble) -> Result<Vec<(f64, CMatrix, CMatrix)>> {
    ens.detunings()
        .iter()
        .zip(ens.weights())
        .map(|(d, w)| {
            let g = ground.with_omega_l(ground.omega_l() + d)?;
            let e = opt.excited_hyperfine.with_omega_l(opt.excited_hyperfine.omega_l() + d)?;
            Ok((*w, g.hamiltonian(), e.hamiltonian()))
        })
        .collect()
}

fn branch_projectors(branch: ExcitationBranch) -> (CMatrix, CMatrix) {
    let (p0, p1) = electron_projectors();
    match branch {
        ExcitationBranch::Readout => (p1, p0),
        ExcitationBranch::Init => (p0, p1),
    }
}

/// Spin-conserving excitation channel 𝒮_excite for one optical pulse:
/// S(0, P_dρP_d) + p_R S(t_W, P_bρP_b) + ∫₀^{t_W} p(t) S(t, P_bρP_b) dt with
/// the bright projector P_b = P₁ for readout and P₀ for initialization.
pub fn excitation_channel(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    branch: ExcitationBranch,
    ens: &LarmorEnsemble,
) -> Result<QuantumChannel> {
    opt.validate()?;
    let members = ensemble_hamiltonians(ground, opt, ens)?;
    let (bright, dark) = branch_projectors(branch);
    ExcitationModel { members: &members, bright: &bright, dark: Some(&dark), flip: None, t1: opt.t1_op, t_window: opt.t_window }
        .channel()
}

/// One optical pulse including spin flips at decay: with probability p_f
/// during readout (cycling broken) and 1 − p_f during initialization
/// (pumping via the excited-state microwave π pulse).
pub fn optical_pulse_channel(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    branch: ExcitationBranch,
    ens: &LarmorEnsemble,
) -> Result<QuantumChannel> {
    opt.validate()?;
    let members = ensemble_hamiltonians(ground, opt, ens)?;
    let (bright, dark) = branch_projectors(branch);
    let x_e = pauli::x().tensor(&CMatrix::identity(2))?;
    let p = match branch {
        ExcitationBranch::Readout => opt.p_flip,
        ExcitationBranch::Init => 1.0 - opt.p_flip,
    };
    ExcitationModel {
        members: &members,
        bright: &bright,
        dark: Some(&dark),
        flip: Some((&x_e, p)),
        t1: opt.t1_op,
        t_window: opt.t_window,
    }
    .channel()
}

/// Whole readout (or init) pulse train as one channel.
pub fn pipeline_channel(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    branch: ExcitationBranch,
    ens: &LarmorEnsemble,
) -> Result<QuantumChannel> {
    let n = match branch {
        ExcitationBranch::Readout => opt.n_readout_pulses,
        ExcitationBranch::Init => opt.n_init_pulses,
    };
    Ok(optical_pulse_channel(ground, opt, branch, ens)?.power(n as u64))
}

/// Electron outcome statistics of a readout train.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutOutcome {
    /// Probability the electron was found bright (|1⟩) at the start.
    pub p_bright: f64,
    pub p_dark: f64,
    /// Expected number of optical excitations over the train.
    pub mean_excitations: f64,
    /// Probability the electron ends in |1⟩.
    pub p_final_bright: f64,
}

/// Apply the readout train pulse by pulse, recording outcome statistics.
pub fn readout_pipeline(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    ens: &LarmorEnsemble,
    rho_in: &DensityMatrix,
) -> Result<(DensityMatrix, ReadoutOutcome)> {
    run_pipeline(ground, opt, ens, rho_in, ExcitationBranch::Readout)
}

/// Apply the initialization train; the electron is pumped to |1⟩ = |↓⟩.
pub fn init_pipeline(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    ens: &LarmorEnsemble,
    rho_in: &DensityMatrix,
) -> Result<(DensityMatrix, ReadoutOutcome)> {
    run_pipeline(ground, opt, ens, rho_in, ExcitationBranch::Init)
}

fn run_pipeline(
    ground: &HyperfineParams,
    opt: &OpticalParams,
    ens: &LarmorEnsemble,
    rho_in: &DensityMatrix,
    branch: ExcitationBranch,
) -> Result<(DensityMatrix, ReadoutOutcome)> {
    if rho_in.dim() != 4 {
        bail!(Dimension, "pipelines act on the 4-dim register, got {}", rho_in.dim());
    }
    let pulse = optical_pulse_channel(ground, opt, branch, ens)?;
    let n = match branch {
        ExcitationBranch::Readout => opt.n_readout_pulses,
        ExcitationBranch::Init => opt.n_init_pulses,
    };
    let bright_idx: [usize; 2] = match branch {
        ExcitationBranch::Readout => [2, 3],
        ExcitationBranch::Init => [0, 1],
    };
    let p_b = |m: &CMatrix| m[(bright_idx[0], bright_idx[0])].re + m[(bright_idx[1], bright_idx[1])].re;
    let mut m = rho_in.matrix().clone();
    let p1_start = m[(2, 2)].re + m[(3, 3)].re;
    let mut excitations = 0.0;
    for _ in 0..n {
        excitations += p_b(&m);
        m = pulse.apply_matrix(&m)?;
    }
    let out = ReadoutOutcome {
        p_bright: p1_start,
        p_dark: 1.0 - p1_start,
        mean_excitations: excitations,
        p_final_bright: m[(2, 2)].re + m[(3, 3)].re,
    };
    Ok((DensityMatrix::from_channel_output(m), out))
}

// ---------------------------------------------------------------------------
// Closed forms

/// Per-excitation coherence factor c = γ/(γ − iδ_A) (δ_A in rad/s).
pub fn coherence_factor(delta_a: f64, gamma: f64) -> C64 {
    C64::new(gamma, 0.0) / C64::new(gamma, -delta_a)
}

/// Bloch-vector length after N excite–decay cycles:
/// (1/√(1 + 4π²δ_f²/γ²))ᴺ with δ_f in Hz and γ in 1/s.
pub fn dephasing_purity(delta_f: f64, gamma_decay: f64, n_excitations: u32) -> Result<f64> {
    if !(gamma_decay > 0.0) {
        bail!(Argument, "decay rate must be > 0, got {gamma_decay}");
    }
    let r = units::TWO_PI * delta_f / gamma_decay;
    Ok(libm::pow(1.0 / libm::sqrt(1.0 + r * r), f64::from(n_excitations)))
}

/// Lower bound T₁ = t_store / ln(f_sim/f_exp) from F_exp = e^{−t_store/T₁} F_sim.
/// Returns +∞ when the fidelities coincide.
pub fn t1_bound(f_exp: f64, f_sim: f64, t_store: f64) -> Result<f64> {
    if !(f_exp > 0.0 && f_sim <= 1.0 && t_store > 0.0) {
        bail!(Argument, "need 0 < f_exp, f_sim <= 1 and t_store > 0");
    }
    if f_exp > f_sim {
        bail!(Domain, "f_exp = {f_exp} exceeds f_sim = {f_sim}; decay model does not apply");
    }
    if f_exp == f_sim {
        return Ok(f64::INFINITY);
    }
    Ok(t_store / libm::log(f_sim / f_exp))
}

// ---------------------------------------------------------------------------
// SWAP experiment

/// How initialization and readout are modeled in the loop.
#[derive(Clone, Debug, PartialEq)]
pub enum OpticsModel {
    /// Perfect projective reset/readout, no time elapses.
    Ideal,
    Physical(OpticalParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapExperimentConfig {
    pub pattern: Vec<u8>,
    /// Number of repetitions of the pattern.
    pub n_loops: usize,
    /// Replace the SWAP by identity.
    pub control: bool,
    pub dephasing_t2: Option<f64>,
    pub optics: OpticsModel,
    /// Use the perfect-component SWAP instead of the physical one.
    pub ideal_swap: bool,
    /// Seed for sampling the shot histogram.
    pub seed: u64,
}

/// Correlation histogram of the loop experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SwapHistogram {
    pub pattern: Vec<u8>,
    pub n_loops: usize,
    /// Sampled counts[i_k][m_k].
    pub counts_same: [[u64; 2]; 2],
    /// Sampled counts[i_k][m_{k+1}].
    pub counts_next: [[u64; 2]; 2],
    /// Expected P(m_k | i_k) and P(m_{k+1} | i_k).
    pub prob_same: [[f64; 2]; 2],
    pub prob_next: [[f64; 2]; 2],
    /// Mean P(m_{k+1} = i_k).
    pub fidelity: f64,
}

/// Simulate init → SWAP → readout loops. Outcome probabilities are exact
/// (non-selective evolution); counts are sampled from them with `seed`.
pub fn swap_experiment(
    p: &HyperfineParams,
    ens: &LarmorEnsemble,
    cfg: &SwapExperimentConfig,
) -> Result<SwapHistogram> {
    if cfg.pattern.is_empty() || cfg.pattern.iter().any(|&b| b > 1) {
        bail!(Argument, "loop pattern must be a non-empty list of 0/1");
    }
    if cfg.n_loops == 0 {
        bail!(Argument, "n_loops must be >= 1");
    }
    let swap = if cfg.control {
        QuantumChannel::identity(4)
    } else if cfg.ideal_swap {
        QuantumChannel::unitary(&ideal_swap_unitary())?
    } else {
        swap_channel(p, ens, cfg.dephasing_t2)?
    };
    let (init, readout) = match &cfg.optics {
        OpticsModel::Ideal => {
            // Reset electron to |1⟩ keeping the nucleus; non-selective z readout.
            let k0 = CMatrix::unit(2, 1, 0).tensor(&CMatrix::identity(2))?;
            let k1 = CMatrix::unit(2, 1, 1).tensor(&CMatrix::identity(2))?;
            (QuantumChannel::from_kraus(&[k0, k1])?, electron_z_measurement())
        }
        OpticsModel::Physical(opt) => (
            pipeline_channel(p, opt, ExcitationBranch::Init, ens)?,
            pipeline_channel(p, opt, ExcitationBranch::Readout, ens)?,
        ),
    };
    let flip = QuantumChannel::unitary(&pauli::x().tensor(&CMatrix::identity(2))?)?;
    // Prepared |i⟩ on the electron: init pumps to |1⟩, a π pulse gives |0⟩.
    let prep = [init.then(&flip)?.then(&swap)?, init.then(&swap)?];

    let total = cfg.pattern.len() * cfg.n_loops;
    let mut rho = DensityMatrix::maximally_mixed(4).into_matrix();
    let mut p_one = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for k in 0..total {
        let i = cfg.pattern[k % cfg.pattern.len()];
        rho = prep[usize::from(i)].apply_matrix(&rho)?;
        p_one.push((rho[(2, 2)].re + rho[(3, 3)].re).clamp(0.0, 1.0));
        rho = readout.apply_matrix(&rho)?;
        labels.push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts_same = [[0u64; 2]; 2];
    let mut counts_next = [[0u64; 2]; 2];
    let mut sum_same = [[0.0; 2]; 2];
    let mut sum_next = [[0.0; 2]; 2];
    let mut n_label = [0.0f64; 2];
    let mut n_label_next = [0.0f64; 2];
    let mut fid = 0.0;
    let draw = |p: f64, rng: &mut ChaCha8Rng| -> Result<u64> {
        let b = Binomial::new(1, p).map_err(|e| crate::Error::Numerical(format!("{e}")))?;
        Ok(b.sample(rng))
    };
    for k in 0..total {
        let i = usize::from(labels[k]);
        let m = draw(p_one[k], &mut rng)? as usize;
        counts_same[i][m] += 1;
        sum_same[i][1] += p_one[k];
        sum_same[i][0] += 1.0 - p_one[k];
        n_label[i] += 1.0;
        if k + 1 < total {
            let q = p_one[k + 1];
            let m2 = draw(q, &mut rng)? as usize;
            counts_next[i][m2] += 1;
            sum_next[i][1] += q;
            sum_next[i][0] += 1.0 - q;
            n_label_next[i] += 1.0;
            fid += if i == 1 { q } else { 1.0 - q };
        }
    }
    let norm = |s: [[f64; 2]; 2], n: [f64; 2]| -> [[f64; 2]; 2] {
        core::array::from_fn(|i| core::array::from_fn(|j| if n[i] > 0.0 { s[i][j] / n[i] } else { 0.0 }))
    };
    Ok(SwapHistogram {
        pattern: cfg.pattern.clone(),
        n_loops: cfg.n_loops,
        counts_same,
        counts_next,
        prob_same: norm(sum_same, n_label),
        prob_next: norm(sum_next, n_label_next),
        fidelity: if total > 1 { fid / (total - 1) as f64 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::C64;
    use rand::Rng;

    fn random_state(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let mut a = CMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                a[(i, j)] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let m = &a * &a.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(m.scale_re(1.0 / tr)).unwrap()
    }

    #[test]
    fn ideal_swap_matches_target() {
        let u = ideal_swap_unitary();
        assert!(u.max_abs_diff(&swap_target()) < 1e-12);
        let i = iswap_from_swap(&u).unwrap();
        // Equal up to a global sign.
        assert!(i.max_abs_diff_up_to_phase(&iswap_target()) < 1e-12);
        // The phased SWAP squares to a diagonal (local z) operator, so the
        // computational basis returns after two applications.
        let u2 = &u * &u;
        for i in 0..4 {
            assert!((u2[(i, i)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kraus_roundtrip() {
        let ch = free_evolution_channel(&HyperfineParams::reference(), 3e-6, Some(5e-6)).unwrap();
        let ops = ch.kraus(1e-12).unwrap();
        let back = QuantumChannel::from_kraus(&ops).unwrap();
        assert!(back.superop().max_abs_diff(ch.superop()) < 1e-10);
        ch.validate().unwrap();
    }

    #[test]
    fn single_frequency_swap_channel_is_unitary_conjugation() {
        let p = HyperfineParams::reference();
        let ch = swap_channel(&p, &LarmorEnsemble::single(), None).unwrap();
        let u = QuantumChannel::unitary(&swap_unitary(&p).unwrap().unitary).unwrap();
        assert!(ch.superop().max_abs_diff(u.superop()) < 1e-8);
    }

    #[test]
    fn swap_fidelity_of_ideal_is_one() {
        let ch = QuantumChannel::unitary(&ideal_swap_unitary()).unwrap();
        assert!((swap_fidelity_computational(&ch).unwrap() - 1.0).abs() < 1e-12);
        let id = QuantumChannel::identity(4);
        assert!(swap_fidelity_computational(&id).unwrap() < 0.51);
    }

    #[test]
    fn fidelity_nonincreasing_with_spread() {
        let p = HyperfineParams::reference();
        let ens = LarmorEnsemble::default();
        let f: Vec<f64> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&k| swap_fidelity_computational(&swap_channel(&p, &ens.scaled(k), None).unwrap()).unwrap())
            .collect();
        assert!(f[0] >= f[1] && f[1] >= f[2], "{f:?}");
    }

    #[test]
    fn excitation_channels_are_cptp() {
        let p = HyperfineParams::reference();
        let opt = OpticalParams::reference(&p).unwrap();
        let ens = LarmorEnsemble::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for branch in [ExcitationBranch::Readout, ExcitationBranch::Init] {
            for ch in [
                excitation_channel(&p, &opt, branch, &ens).unwrap(),
                optical_pulse_channel(&p, &opt, branch, &ens).unwrap(),
            ] {
                ch.validate().unwrap();
                for _ in 0..20 {
                    let rho = random_state(4, &mut rng);
                    let out = ch.apply(&rho).unwrap();
                    assert!((out.matrix().trace().re - 1.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn equal_hamiltonians_preserve_nuclear_coherence() {
        let p = HyperfineParams::reference();
        let mut opt = OpticalParams::reference(&p).unwrap();
        opt.excited_hyperfine = p;
        let ch = excitation_channel(&p, &opt, ExcitationBranch::Readout, &LarmorEnsemble::single()).unwrap();
        let plus = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let rho = DensityMatrix::pure(&plus).unwrap();
        let out = ch.apply(&rho).unwrap();
        let free = rho.evolve(&p.free_propagator(opt.t_window)).unwrap();
        assert!(out.matrix().max_abs_diff(free.matrix()) < 1e-10);
        let b = out.partial_trace(0).unwrap().bloch().unwrap();
        assert!((crate::qmat::norm(b) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn toy_channel_reproduces_purity_formula() {
        // H_g = 0, H_e = δ_A I_z on the nucleus alone, every cycle excites.
        let gamma = 1.0 / 60e-6;
        let delta_a = units::TWO_PI * 0.56 * gamma;
        let hg = CMatrix::zeros(2);
        let he = pauli::z().scale_re(0.5 * delta_a);
        let members = [(1.0, hg, he)];
        let id = CMatrix::identity(2);
        let model = ExcitationModel {
            members: &members,
            bright: &id,
            dark: None,
            flip: None,
            t1: 1.0 / gamma,
            t_window: 45.0 / gamma,
        };
        let ch = model.channel().unwrap();
        let c = coherence_factor(delta_a, gamma);
        let mut m = DensityMatrix::from_bloch([1.0, 0.0, 0.0]).unwrap().into_matrix();
        for n in 1..=20u32 {
            m = ch.apply_matrix(&m).unwrap();
            let len = 2.0 * m[(0, 1)].norm();
            let want = dephasing_purity(0.56 * gamma, gamma, n).unwrap();
            assert!((len - want).abs() < 1e-10, "n = {n}: {len} vs {want}");
            assert!((len - c.norm().powi(n as i32)).abs() < 1e-10);
        }
    }

    #[test]
    fn purity_examples() {
        let g = 1.0 / 60e-6;
        let f1 = dephasing_purity(0.56 * g, g, 1).unwrap();
        assert!((0.26..=0.30).contains(&f1), "{f1}");
        let f450 = dephasing_purity(0.0034 * g, g, 450).unwrap();
        assert!((f450 - 0.90).abs() < 0.01, "{f450}");
        assert_eq!(dephasing_purity(0.0, g, 1000).unwrap(), 1.0);
    }

    #[test]
    fn t1_bound_examples() {
        let t = t1_bound(0.76, 0.84, 59.2e-3).unwrap();
        assert!((t - 0.592).abs() < 0.01, "{t}");
        assert!(t1_bound(0.8, 0.8, 1.0).unwrap().is_infinite());
        let t2 = t1_bound(0.76, 0.84, 2.0 * 59.2e-3).unwrap();
        assert!((t2 / t - 2.0).abs() < 1e-12);
        assert!(matches!(t1_bound(0.9, 0.8, 1.0), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn dark_electron_is_stationary() {
        let p = HyperfineParams::reference();
        let mut opt = OpticalParams::reference(&p).unwrap();
        opt.p_flip = 0.0;
        opt.n_readout_pulses = 20;
        // |0⟩ electron, nucleus in an eigenstate of H₊.
        let (hp, _, _) = crate::hyperfine::conditional_hamiltonians(&p);
        let v = eigh(&hp).unwrap().vectors;
        let nuc = CMatrix::outer(&[v[(0, 0)], v[(1, 0)]], &[v[(0, 0)], v[(1, 0)]]).unwrap();
        let rho = DensityMatrix::new(pauli::p0().tensor(&nuc).unwrap()).unwrap();
        let (out, stats) = readout_pipeline(&p, &opt, &LarmorEnsemble::single(), &rho).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-10);
        assert!(stats.mean_excitations < 1e-12);
    }

    #[test]
    fn init_polarizes_electron() {
        let p = HyperfineParams::reference();
        let opt = OpticalParams::reference(&p).unwrap();
        let rho = DensityMatrix::maximally_mixed(4);
        let (out, _) = init_pipeline(&p, &opt, &LarmorEnsemble::default(), &rho).unwrap();
        let p_down = out.population(2) + out.population(3);
        assert!(p_down > 0.99, "{p_down}");
    }

    #[test]
    fn readout_destroys_nuclear_coherence() {
        let p = HyperfineParams::reference();
        let opt = OpticalParams::reference(&p).unwrap();
        let s = 1.0 / libm::sqrt(2.0);
        let plus = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0)];
        let rho = DensityMatrix::pure(&plus).unwrap();
        let (out, stats) = readout_pipeline(&p, &opt, &LarmorEnsemble::default(), &rho).unwrap();
        let b = out.partial_trace(0).unwrap().bloch().unwrap();
        assert!(libm::hypot(b[0], b[1]) < 0.01, "{b:?}");
        assert!(stats.p_bright > 0.999 && stats.mean_excitations > 200.0);
    }

    #[test]
    fn control_experiment_correlations() {
        let p = HyperfineParams::reference();
        let cfg = SwapExperimentConfig {
            pattern: vec![0, 0, 1, 1],
            n_loops: 50,
            control: true,
            dephasing_t2: None,
            optics: OpticsModel::Ideal,
            ideal_swap: false,
            seed: 1,
        };
        let h = swap_experiment(&p, &LarmorEnsemble::single(), &cfg).unwrap();
        assert!((h.prob_same[0][0] - 1.0).abs() < 1e-12 && (h.prob_same[1][1] - 1.0).abs() < 1e-12);
        assert!((h.fidelity - 0.5).abs() < 0.01);
    }

    #[test]
    fn lossless_swap_experiment() {
        let p = HyperfineParams::reference();
        let cfg = SwapExperimentConfig {
            pattern: vec![0, 0, 1, 1],
            n_loops: 25,
            control: false,
            dephasing_t2: None,
            optics: OpticsModel::Ideal,
            ideal_swap: true,
            seed: 1,
        };
        let h = swap_experiment(&p, &LarmorEnsemble::single(), &cfg).unwrap();
        assert!(h.fidelity > 0.99, "{}", h.fidelity);
    }

    fn retrieval(p: &HyperfineParams, opt: OpticalParams, ens: &LarmorEnsemble, t2: Option<f64>) -> f64 {
        let cfg = SwapExperimentConfig {
            pattern: vec![0, 0, 1, 1],
            n_loops: 10,
            control: false,
            dephasing_t2: t2,
            optics: OpticsModel::Physical(opt),
            ideal_swap: false,
            seed: 7,
        };
        swap_experiment(p, ens, &cfg).unwrap().fidelity
    }

    #[test]
    fn retrieval_monotone_in_error_sources() {
        let p = HyperfineParams::reference();
        let opt = OpticalParams::reference(&p).unwrap();
        let ens = LarmorEnsemble::default();
        let spread: Vec<f64> = [0.0, 1.0, 2.0].iter().map(|&k| retrieval(&p, opt.clone(), &ens.scaled(k), None)).collect();
        assert!(spread[0] >= spread[1] && spread[1] >= spread[2], "{spread:?}");
        let deph: Vec<f64> = [None, Some(40e-6), Some(16.1e-6)].iter().map(|&t| retrieval(&p, opt.clone(), &ens, t)).collect();
        assert!(deph[0] >= deph[1] && deph[1] >= deph[2], "{deph:?}");
        let da: Vec<f64> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&k| {
                let mut o = opt.clone();
                let delta = units::TWO_PI * REFERENCE_DELTA_F_OVER_GAMMA / o.t1_op * k;
                o.excited_hyperfine = p.with_a_par(p.a_par() - delta).unwrap();
                retrieval(&p, o, &ens, None)
            })
            .collect();
        assert!(da[0] >= da[1] - 1e-12 && da[1] >= da[2] - 1e-12, "{da:?}");
    }

    #[test]
    fn pipeline_order_matters() {
        let p = HyperfineParams::reference();
        let opt = OpticalParams::reference(&p).unwrap();
        let ens = LarmorEnsemble::default();
        let init = pipeline_channel(&p, &opt, ExcitationBranch::Init, &ens).unwrap();
        let read = pipeline_channel(&p, &opt, ExcitationBranch::Readout, &ens).unwrap();
        let a = init.then(&read).unwrap();
        let b = read.then(&init).unwrap();
        assert!(a.superop().max_abs_diff(b.superop()) > 1e-3);
    }
}
