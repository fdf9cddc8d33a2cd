// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulse sequences on the electron–nuclear register and the signals they
//! produce: XY-N spectra, Ramsey s₀/s_δ traces and nuclear echoes.
//!
//! The engine works on 4×4 density matrices. Electron π pulses are ideal and
//! instantaneous; free evolution is exact. Electron pure dephasing commutes
//! with the secular Hamiltonian, so a dephasing free step is the unitary
//! followed by damping of the electron coherences.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channels::{electron_z_measurement, free_evolution_channel, QuantumChannel};
use crate::error::{bail, Result};
use crate::hyperfine::{conditional, resonant_tau, HyperfineParams};
use crate::qmat::{self, pauli, AxisAngle, CMatrix, DensityMatrix, Su2, Vec3};

/// Electron T₂ under continuous decoupling; used inside gate blocks.
pub const T2_DECOUPLED_S: f64 = 16.1e-6;

/// Composite nuclear operations built from decoupling blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NuclearGate {
    /// Electron flip controlled by the nuclear x-basis state:
    /// R_x(π/2)_e · XY-8 · R_y(π/2)_e.
    CnNotE,
    /// XY-16: nuclear ±π about x (an unconditional π up to an electron Z).
    UncondPiX,
    /// XY-8: conditional R_x(±π/2).
    CondRx,
}

impl NuclearGate {
    fn n_pulses(self) -> usize {
        match self {
            Self::UncondPiX => 16,
            Self::CnNotE | Self::CondRx => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureBasis {
    ElectronZ,
    ElectronX,
}

/// How composite gates are realized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateRealization {
    /// Physical decoupling blocks with half-spacing `tau` (seconds).
    Decoupled { tau: f64 },
    /// Perfect conditional rotations by exactly ±π/2 (or ±π).
    Ideal,
}

impl GateRealization {
    /// Decoupled blocks at the refined first resonance of `p`.
    pub fn resonant(p: &HyperfineParams) -> Result<Self> {
        Ok(Self::Decoupled { tau: resonant_tau(p)? })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SequenceElement {
    FreeEvolution { duration: f64 },
    /// exp(+iHt): only produced by [`PulseSequence::inverse`].
    ReversedEvolution { duration: f64 },
    ElectronPulse { axis: Vec3, angle: f64 },
    NuclearCompositePulse { kind: NuclearGate, inverse: bool },
    Measure(MeasureBasis),
}

/// Primitive operations after composite expansion.
#[derive(Clone, Debug, PartialEq)]
enum Primitive {
    Free { duration: f64, reversed: bool },
    Electron(Su2),
    Conditional { plus: Su2, minus: Su2 },
    Measure(MeasureBasis),
}

impl Primitive {
    fn inverse(&self) -> Primitive {
        match self {
            Self::Free { duration, reversed } => Self::Free { duration: *duration, reversed: !reversed },
            Self::Electron(r) => Self::Electron(r.inverse()),
            Self::Conditional { plus, minus } => Self::Conditional { plus: plus.inverse(), minus: minus.inverse() },
            Self::Measure(b) => Self::Measure(*b),
        }
    }
}

/// Ordered list of sequence elements plus the gate realization used to
/// expand composite pulses.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    elements: Vec<SequenceElement>,
    gates: GateRealization,
    /// Free-form label ("XY-16", "ramsey-s0", ...); the x/y phase pattern of
    /// decoupling blocks lives here, since ideal pulses make it irrelevant to
    /// the propagator.
    pub label: String,
}

impl PulseSequence {
    pub fn new(gates: GateRealization) -> Result<Self> {
        if let GateRealization::Decoupled { tau } = gates {
            if !(tau > 0.0) || !tau.is_finite() {
                bail!(Argument, "gate block tau must be positive, got {tau}");
            }
        }
        Ok(Self { elements: Vec::new(), gates, label: String::new() })
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn elements(&self) -> &[SequenceElement] {
        &self.elements
    }

    pub fn gates(&self) -> GateRealization {
        self.gates
    }

    pub fn push(&mut self, e: SequenceElement) -> Result<&mut Self> {
        match &e {
            SequenceElement::FreeEvolution { duration } | SequenceElement::ReversedEvolution { duration } => {
                if !(*duration > 0.0) || !duration.is_finite() {
                    bail!(Argument, "free evolution duration must be > 0, got {duration}");
                }
            }
            SequenceElement::ElectronPulse { axis, angle } => {
                if libm::fabs(qmat::norm(*axis) - 1.0) > 1e-9 || !angle.is_finite() {
                    bail!(Argument, "electron pulse needs a unit axis and finite angle");
                }
            }
            _ => {}
        }
        self.elements.push(e);
        Ok(self)
    }

    /// Free evolution; zero durations are skipped.
    pub fn free(&mut self, duration: f64) -> Result<&mut Self> {
        if duration == 0.0 {
            return Ok(self);
        }
        self.push(SequenceElement::FreeEvolution { duration })
    }

    pub fn pulse(&mut self, axis: Vec3, angle: f64) -> Result<&mut Self> {
        self.push(SequenceElement::ElectronPulse { axis, angle })
    }

    pub fn gate(&mut self, kind: NuclearGate) -> Result<&mut Self> {
        self.push(SequenceElement::NuclearCompositePulse { kind, inverse: false })
    }

    pub fn measure(&mut self, basis: MeasureBasis) -> Result<&mut Self> {
        self.push(SequenceElement::Measure(basis))
    }

    /// τ–π–2τ–…–π–τ with `n` electron π pulses about x.
    pub fn decoupling_block(&mut self, tau: f64, n: usize) -> Result<&mut Self> {
        if n == 0 {
            bail!(Argument, "decoupling block needs at least one pulse");
        }
        self.free(tau)?;
        for k in 0..n {
            self.pulse([1.0, 0.0, 0.0], PI)?;
            self.free(if k + 1 == n { tau } else { 2.0 * tau })?;
        }
        Ok(self)
    }

    /// Element-wise inverse in reverse order. Measurements have no inverse.
    pub fn inverse(&self) -> Result<Self> {
        let mut out = Self { elements: Vec::new(), gates: self.gates, label: format!("inverse({})", self.label) };
        for e in self.elements.iter().rev() {
            let inv = match e {
                SequenceElement::FreeEvolution { duration } => SequenceElement::ReversedEvolution { duration: *duration },
                SequenceElement::ReversedEvolution { duration } => SequenceElement::FreeEvolution { duration: *duration },
                SequenceElement::ElectronPulse { axis, angle } => SequenceElement::ElectronPulse { axis: *axis, angle: -angle },
                SequenceElement::NuclearCompositePulse { kind, inverse } => {
                    SequenceElement::NuclearCompositePulse { kind: *kind, inverse: !inverse }
                }
                SequenceElement::Measure(_) => bail!(Argument, "a sequence containing measurements has no inverse"),
            };
            out.elements.push(inv);
        }
        Ok(out)
    }

    /// Total duration in seconds, composite blocks included (pulses are
    /// instantaneous).
    pub fn total_duration(&self) -> f64 {
        self.expand()
            .iter()
            .map(|p| match p {
                Primitive::Free { duration, .. } => *duration,
                _ => 0.0,
            })
            .sum()
    }

    fn expand(&self) -> Vec<Primitive> {
        let mut out = Vec::new();
        for e in &self.elements {
            match e {
                SequenceElement::FreeEvolution { duration } => out.push(Primitive::Free { duration: *duration, reversed: false }),
                SequenceElement::ReversedEvolution { duration } => out.push(Primitive::Free { duration: *duration, reversed: true }),
                SequenceElement::ElectronPulse { axis, angle } => out.push(Primitive::Electron(Su2::rotation(*axis, *angle))),
                SequenceElement::Measure(b) => out.push(Primitive::Measure(*b)),
                SequenceElement::NuclearCompositePulse { kind, inverse } => {
                    let fwd = self.expand_gate(*kind);
                    if *inverse {
                        out.extend(fwd.iter().rev().map(Primitive::inverse));
                    } else {
                        out.extend(fwd);
                    }
                }
            }
        }
        out
    }

    fn expand_gate(&self, kind: NuclearGate) -> Vec<Primitive> {
        let mut core = Vec::new();
        match self.gates {
            GateRealization::Decoupled { tau } => {
                let n = kind.n_pulses();
                core.push(Primitive::Free { duration: tau, reversed: false });
                for k in 0..n {
                    core.push(Primitive::Electron(Su2::rotation([1.0, 0.0, 0.0], PI)));
                    let d = if k + 1 == n { tau } else { 2.0 * tau };
                    core.push(Primitive::Free { duration: d, reversed: false });
                }
            }
            GateRealization::Ideal => {
                let theta = if kind == NuclearGate::UncondPiX { PI } else { FRAC_PI_2 };
                core.push(Primitive::Conditional {
                    plus: Su2::rotation([1.0, 0.0, 0.0], theta),
                    minus: Su2::rotation([1.0, 0.0, 0.0], -theta),
                });
            }
        }
        if kind == NuclearGate::CnNotE {
            let mut v = vec![Primitive::Electron(Su2::rotation([0.0, 1.0, 0.0], FRAC_PI_2))];
            v.extend(core);
            v.push(Primitive::Electron(Su2::rotation([1.0, 0.0, 0.0], FRAC_PI_2)));
            v
        } else {
            core
        }
    }
}

fn electron_op(r: &Su2) -> CMatrix {
    r.matrix().tensor(&CMatrix::identity(2)).expect("4x4")
}

fn damp_electron_coherence(m: &mut CMatrix, factor: f64) {
    for i in 0..2 {
        for j in 2..4 {
            m[(i, j)] = m[(i, j)] * factor;
            m[(j, i)] = m[(j, i)] * factor;
        }
    }
}

/// Apply `seq` to `initial` under the secular Hamiltonian of `p`, with
/// optional electron pure dephasing (coherence decay e^{−t/T₂}) during every
/// free-evolution step.
pub fn simulate_sequence(
    seq: &PulseSequence,
    p: &HyperfineParams,
    initial: &DensityMatrix,
    dephasing_t2: Option<f64>,
) -> Result<DensityMatrix> {
    if initial.dim() != 4 {
        bail!(Dimension, "sequence engine needs a 4-dim (electron ⊗ nucleus) state, got {}", initial.dim());
    }
    if let Some(t2) = dephasing_t2 {
        if !(t2 > 0.0) {
            bail!(Argument, "dephasing T2 must be > 0, got {t2}");
        }
    }
    let mut rho = initial.matrix().clone();
    for prim in seq.expand() {
        match prim {
            Primitive::Free { duration, reversed } => {
                let t = if reversed { -duration } else { duration };
                rho = rho.conjugate_by(&p.free_propagator(t));
                if let Some(t2) = dephasing_t2 {
                    damp_electron_coherence(&mut rho, libm::exp(-duration / t2));
                }
            }
            Primitive::Electron(r) => rho = rho.conjugate_by(&electron_op(&r)),
            Primitive::Conditional { plus, minus } => {
                rho = rho.conjugate_by(&conditional(&plus.matrix(), &minus.matrix()));
            }
            Primitive::Measure(MeasureBasis::ElectronZ) => damp_electron_coherence(&mut rho, 0.0),
            Primitive::Measure(MeasureBasis::ElectronX) => {
                let x = pauli::x().tensor(&CMatrix::identity(2))?;
                rho = (&rho + &rho.conjugate_by(&x)).scale_re(0.5);
            }
        }
    }
    Ok(DensityMatrix::from_channel_output(rho))
}

/// Unitary of a measurement-free sequence (noiseless).
pub fn sequence_unitary(seq: &PulseSequence, p: &HyperfineParams) -> Result<CMatrix> {
    let mut u = CMatrix::identity(4);
    for prim in seq.expand() {
        let step = match prim {
            Primitive::Free { duration, reversed } => p.free_propagator(if reversed { -duration } else { duration }),
            Primitive::Electron(r) => electron_op(&r),
            Primitive::Conditional { plus, minus } => conditional(&plus.matrix(), &minus.matrix()),
            Primitive::Measure(_) => bail!(Argument, "sequence with measurements is not unitary"),
        };
        u = &step * &u;
    }
    Ok(u)
}

/// Channel of a sequence; free steps carry electron dephasing.
pub fn sequence_channel(seq: &PulseSequence, p: &HyperfineParams, dephasing_t2: Option<f64>) -> Result<QuantumChannel> {
    let mut ch = QuantumChannel::identity(4);
    for prim in seq.expand() {
        let step = match prim {
            Primitive::Free { duration, reversed } => {
                free_evolution_channel(p, if reversed { -duration } else { duration }, dephasing_t2)?
            }
            Primitive::Electron(r) => QuantumChannel::unitary(&electron_op(&r))?,
            Primitive::Conditional { plus, minus } => QuantumChannel::unitary(&conditional(&plus.matrix(), &minus.matrix()))?,
            Primitive::Measure(MeasureBasis::ElectronZ) => electron_z_measurement(),
            Primitive::Measure(MeasureBasis::ElectronX) => {
                let x = pauli::x().tensor(&CMatrix::identity(2))?;
                QuantumChannel::mixture(&[(0.5, QuantumChannel::identity(4)), (0.5, QuantumChannel::unitary(&x)?)])?
            }
        };
        ch = ch.then(&step)?;
    }
    Ok(ch)
}

/// Metadata carried alongside a trace.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TraceMetadata {
    pub sequence: String,
    pub params: Option<HyperfineParams>,
    pub notes: Vec<String>,
}

/// Populations sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub metadata: TraceMetadata,
}

impl SignalTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, metadata: TraceMetadata) -> Result<Self> {
        if times.len() != values.len() {
            bail!(Dimension, "{} times vs {} values", times.len(), values.len());
        }
        Ok(Self { times, values, metadata })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Uniform grid of `n` points from `start` with step `step`.
pub fn uniform_grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + step * k as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        bail!(Argument, "time grid must be finite and non-negative");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        bail!(Argument, "time grid must be strictly ascending");
    }
    Ok(())
}

/// Which Ramsey variant: plain (ω₀ fringes) or with a nuclear π in the
/// middle (ω_δ fringes).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RamseyKind {
    S0,
    SDelta,
}

/// Closed-form expression or full simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignalModel {
    ClosedForm,
    Exact { gates: GateRealization, dephasing_t2: Option<f64> },
}

/// |↓⟩⟨↓| ⊗ I/2.
pub fn ramsey_initial_state() -> DensityMatrix {
    let m = pauli::p1().tensor(&CMatrix::identity(2).scale_re(0.5)).expect("4x4");
    DensityMatrix::from_channel_output(m)
}

fn electron_down_population(rho: &DensityMatrix) -> f64 {
    rho.population(2) + rho.population(3)
}

// The common second term (A⊥/(ω₊ω₋))·(ω₀ sin((φ₊−φ₋)/2) + 2A∥ sin((φ₊+φ₋)/2)).
fn ramsey_cross_term(p: &HyperfineParams, phi_p: f64, phi_m: f64) -> f64 {
    let wp = p.omega_plus();
    let wm = p.omega_minus();
    p.a_perp() / (wp * wm)
        * (p.omega0() * libm::sin(0.5 * (phi_p - phi_m)) + 2.0 * p.a_par() * libm::sin(0.5 * (phi_p + phi_m)))
}

/// Closed-form s₀(τ_c) = 1 − cos²(φ/2) − (cross term)², with φ the angle
/// of U₊(τ_c/2)U₋(τ_c/2).
pub fn s0_closed_form(p: &HyperfineParams, tau_c: f64) -> f64 {
    let (up, um) = p.free_su2(0.5 * tau_c);
    let c = up.compose(&um).w;
    let (phi_p, phi_m) = (0.5 * p.omega_plus() * tau_c, 0.5 * p.omega_minus() * tau_c);
    let x = ramsey_cross_term(p, phi_p, phi_m);
    1.0 - c * c - x * x
}

/// Closed-form s_δ(τ_c) = cos²(φ′/2) + (cross term)², with φ′ the angle of
/// the rotation pair about m₊ and the inverted axis m′₋ = (−A⊥, 0, −(ω_L−A∥))/ω₋.
pub fn sdelta_closed_form(p: &HyperfineParams, tau_c: f64) -> f64 {
    let c = p.precession();
    let (phi_p, phi_m) = (0.5 * c.omega_plus * tau_c, 0.5 * c.omega_minus * tau_c);
    let m_inv = [c.m_minus[0], 0.0, -c.m_minus[2]];
    let r = Su2::rotation(c.m_plus, phi_p).compose(&Su2::rotation(m_inv, phi_m));
    let x = ramsey_cross_term(p, phi_p, phi_m);
    r.w * r.w + x * x
}

/// The Ramsey sequence: C_nNOT_e, τ_c/2, electron π (plus nuclear π for
/// s_δ), τ_c/2, C_nNOT_e.
pub fn ramsey_sequence(kind: RamseyKind, tau_c: f64, gates: GateRealization) -> Result<PulseSequence> {
    let mut s = PulseSequence::new(gates)?.with_label(match kind {
        RamseyKind::S0 => "ramsey-s0",
        RamseyKind::SDelta => "ramsey-sdelta",
    });
    s.gate(NuclearGate::CnNotE)?;
    s.free(0.5 * tau_c)?;
    s.pulse([1.0, 0.0, 0.0], PI)?;
    if kind == RamseyKind::SDelta {
        s.gate(NuclearGate::UncondPiX)?;
    }
    s.free(0.5 * tau_c)?;
    s.gate(NuclearGate::CnNotE)?;
    Ok(s)
}

/// Ramsey trace for either variant and either model. The value is the
/// electron |↓⟩ population starting from |↓⟩⟨↓| ⊗ I/2.
pub fn ramsey_trace(p: &HyperfineParams, tau_c_grid: &[f64], kind: RamseyKind, model: SignalModel) -> Result<SignalTrace> {
    check_grid(tau_c_grid)?;
    let mut values = Vec::with_capacity(tau_c_grid.len());
    let mut notes = Vec::new();
    match model {
        SignalModel::ClosedForm => {
            notes.push("closed form".into());
            for &t in tau_c_grid {
                values.push(match kind {
                    RamseyKind::S0 => s0_closed_form(p, t),
                    RamseyKind::SDelta => sdelta_closed_form(p, t),
                });
            }
        }
        SignalModel::Exact { gates, dephasing_t2 } => {
            notes.push(format!("exact engine, gates {gates:?}, T2 {dephasing_t2:?}"));
            let rho0 = ramsey_initial_state();
            for &t in tau_c_grid {
                let seq = ramsey_sequence(kind, t, gates)?;
                let out = simulate_sequence(&seq, p, &rho0, dephasing_t2)?;
                values.push(electron_down_population(&out));
            }
        }
    }
    if tau_c_grid.first().is_some_and(|&t| t < 15e-6) {
        notes.push("grid starts before the ~15 us experimental minimum".into());
    }
    let sequence = String::from(match kind {
        RamseyKind::S0 => "ramsey-s0",
        RamseyKind::SDelta => "ramsey-sdelta",
    });
    SignalTrace::new(tau_c_grid.to_vec(), values, TraceMetadata { sequence, params: Some(*p), notes })
}

/// s₀(τ_c). `exact` selects the simulated trace with XY-8 gates at the
/// refined resonance instead of the closed form.
pub fn ramsey_s0(p: &HyperfineParams, tau_c_grid: &[f64], exact: bool) -> Result<SignalTrace> {
    let model = if exact {
        SignalModel::Exact { gates: GateRealization::resonant(p)?, dephasing_t2: None }
    } else {
        SignalModel::ClosedForm
    };
    ramsey_trace(p, tau_c_grid, RamseyKind::S0, model)
}

/// s_δ(τ_c); see [`ramsey_s0`].
pub fn ramsey_sdelta(p: &HyperfineParams, tau_c_grid: &[f64], exact: bool) -> Result<SignalTrace> {
    let model = if exact {
        SignalModel::Exact { gates: GateRealization::resonant(p)?, dephasing_t2: None }
    } else {
        SignalModel::ClosedForm
    };
    ramsey_trace(p, tau_c_grid, RamseyKind::SDelta, model)
}

/// XY-N spectrum: R_y(π/2) – N pulses at spacing 2τ – R_y(−π/2) on
/// |↓⟩⟨↓| ⊗ I/2, value = |↓⟩ population. Dips mark resonances.
pub fn xy_spectrum(p: &HyperfineParams, two_tau_grid: &[f64], n_pulses: usize, dephasing_t2: Option<f64>) -> Result<SignalTrace> {
    check_grid(two_tau_grid)?;
    if n_pulses == 0 {
        bail!(Argument, "n_pulses must be >= 1");
    }
    let rho0 = ramsey_initial_state();
    let mut values = Vec::with_capacity(two_tau_grid.len());
    for &tt in two_tau_grid {
        if tt <= 0.0 {
            bail!(Argument, "pulse spacing must be > 0");
        }
        let mut s = PulseSequence::new(GateRealization::Ideal)?;
        s.pulse([0.0, 1.0, 0.0], FRAC_PI_2)?;
        s.decoupling_block(0.5 * tt, n_pulses)?;
        s.pulse([0.0, 1.0, 0.0], -FRAC_PI_2)?;
        values.push(electron_down_population(&simulate_sequence(&s, p, &rho0, dephasing_t2)?));
    }
    let meta = TraceMetadata {
        sequence: format!("XY-{n_pulses}"),
        params: Some(*p),
        notes: vec!["time axis is the pulse spacing 2tau".into()],
    };
    SignalTrace::new(two_tau_grid.to_vec(), values, meta)
}

// ---------------------------------------------------------------------------
// Nuclear echoes

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EchoKind {
    Hahn,
    /// CPMG with k nuclear π pulses.
    Cpmg(usize),
}

impl EchoKind {
    /// Pulse times as fractions of the total time.
    fn pulse_fractions(self) -> Result<Vec<f64>> {
        Ok(match self {
            Self::Hahn => vec![0.5],
            Self::Cpmg(0) => bail!(Argument, "CPMG needs at least one pulse"),
            Self::Cpmg(k) => (0..k).map(|j| (j as f64 + 0.5) / k as f64).collect(),
        })
    }

    /// Signed intervals of the toggling-frame switching function for total
    /// time `t`.
    fn intervals(self, t: f64) -> Result<Vec<(f64, f64, f64)>> {
        let mut edges = vec![0.0];
        edges.extend(self.pulse_fractions()?.iter().map(|f| f * t));
        edges.push(t);
        Ok(edges.windows(2).enumerate().map(|(i, w)| (w[0], w[1], if i % 2 == 0 { 1.0 } else { -1.0 })).collect())
    }
}

/// Ornstein–Uhlenbeck detuning of the nuclear precession frequency:
/// stationary std `sigma` (rad/s) and correlation time `tau_c` (s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuNoise {
    pub sigma: f64,
    pub tau_c: f64,
}

/// Default OU correlation time. The bath spectrum is not known; 10 ms puts
/// the noise in the slow regime where CPMG helps, as observed.
pub const DEFAULT_OU_TAU_C_S: f64 = 10e-3;

impl OuNoise {
    /// OU noise with correlation time `tau_c` whose Hahn coherence decays to
    /// 1/e at `t2_hahn`.
    pub fn calibrated(t2_hahn: f64, tau_c: f64) -> Result<Self> {
        if !(t2_hahn > 0.0 && tau_c > 0.0) {
            bail!(Argument, "T2 and correlation time must be positive");
        }
        let unit = Self { sigma: 1.0, tau_c };
        let chi = unit.decay_exponent(EchoKind::Hahn, t2_hahn)?;
        Ok(Self { sigma: libm::sqrt(1.0 / chi), tau_c })
    }

    /// χ(T) with coherence e^{−χ} for Gaussian phase: χ = ½⟨φ²⟩.
    pub fn decay_exponent(&self, kind: EchoKind, t: f64) -> Result<f64> {
        let iv = kind.intervals(t)?;
        let tc = self.tau_c;
        let mut var = 0.0;
        for (i, &(a, b, si)) in iv.iter().enumerate() {
            let l = b - a;
            var += 2.0 * tc * tc * (l / tc - 1.0 + libm::exp(-l / tc));
            for &(c, d, sj) in &iv[i + 1..] {
                let cross = tc * tc
                    * (libm::exp(-(c - b) / tc) - libm::exp(-(d - b) / tc) - libm::exp(-(c - a) / tc)
                        + libm::exp(-(d - a) / tc));
                var += 2.0 * si * sj * cross;
            }
        }
        Ok(0.5 * self.sigma * self.sigma * var)
    }
}

/// Detuning environment for nuclear echoes.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoNoise {
    pub ou: Option<OuNoise>,
    /// Static detunings (rad/s) with probabilities, e.g. the dark-spin shifts.
    pub static_shifts: Vec<(f64, f64)>,
    pub n_trajectories: usize,
    /// Integration step for OU trajectories (s).
    pub dt: f64,
    pub seed: u64,
}

impl EchoNoise {
    pub fn none() -> Self {
        Self { ou: None, static_shifts: Vec::new(), n_trajectories: 1, dt: 1e-5, seed: 0 }
    }
}

/// Echo amplitude ½(1 + Re⟨e^{iφ}⟩) versus total time, for ideal nuclear π
/// pulses. φ is the toggling-frame phase from the detuning process.
/// Trajectories are shared across the time grid (common random numbers),
/// so the curve is smooth and exactly reproducible per seed.
pub fn nuclear_echo(p: &HyperfineParams, kind: EchoKind, total_time_grid: &[f64], noise: &EchoNoise) -> Result<SignalTrace> {
    check_grid(total_time_grid)?;
    kind.pulse_fractions()?;
    let w_sum: f64 = noise.static_shifts.iter().map(|s| s.1).sum();
    if !noise.static_shifts.is_empty() && libm::fabs(w_sum - 1.0) > 1e-12 {
        bail!(Argument, "static shift weights sum to {w_sum}, expected 1");
    }
    let t_max = total_time_grid.last().copied().unwrap_or(0.0);
    let mut acc = vec![0.0; total_time_grid.len()];

    // Static part: phase δ·Σ sᵢ Lᵢ per shift.
    let statics: Vec<(f64, f64)> =
        if noise.static_shifts.is_empty() { vec![(0.0, 1.0)] } else { noise.static_shifts.clone() };

    match noise.ou {
        None => {
            for (k, &t) in total_time_grid.iter().enumerate() {
                let lever: f64 = kind.intervals(t)?.iter().map(|(a, b, s)| s * (b - a)).sum();
                acc[k] = statics.iter().map(|(d, w)| w * libm::cos(d * lever)).sum();
            }
        }
        Some(ou) => {
            if !(noise.dt > 0.0) || noise.n_trajectories == 0 {
                bail!(Argument, "echo noise needs dt > 0 and at least one trajectory");
            }
            let n_steps = libm::ceil(t_max / noise.dt) as usize + 1;
            let decay = libm::exp(-noise.dt / ou.tau_c);
            let kick = ou.sigma * libm::sqrt(1.0 - decay * decay);
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            let mut path = vec![0.0; n_steps + 1];
            // cumulative integral of δ(t) on the step grid, trapezoid rule
            let mut cum = vec![0.0; n_steps + 1];
            let cum_at = |cum: &[f64], path: &[f64], t: f64| {
                let x = t / noise.dt;
                let i = (libm::floor(x) as usize).min(n_steps - 1);
                let f = x - i as f64;
                let d0 = path[i];
                let d1 = path[i + 1];
                cum[i] + noise.dt * (d0 * f + 0.5 * (d1 - d0) * f * f)
            };
            for _ in 0..noise.n_trajectories {
                let z: f64 = StandardNormal.sample(&mut rng);
                path[0] = ou.sigma * z;
                for i in 1..=n_steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    path[i] = decay * path[i - 1] + kick * z;
                    cum[i] = cum[i - 1] + 0.5 * noise.dt * (path[i - 1] + path[i]);
                }
                for (k, &t) in total_time_grid.iter().enumerate() {
                    let iv = kind.intervals(t)?;
                    let phi_ou: f64 = iv.iter().map(|&(a, b, s)| s * (cum_at(&cum, &path, b) - cum_at(&cum, &path, a))).sum();
                    let lever: f64 = iv.iter().map(|(a, b, s)| s * (b - a)).sum();
                    acc[k] += statics.iter().map(|(d, w)| w * libm::cos(phi_ou + d * lever)).sum::<f64>();
                }
            }
            for a in &mut acc {
                *a /= noise.n_trajectories as f64;
            }
        }
    }
    let values = acc.iter().map(|c| 0.5 * (1.0 + c)).collect();
    let meta = TraceMetadata {
        sequence: match kind {
            EchoKind::Hahn => "nuclear-hahn".into(),
            EchoKind::Cpmg(k) => format!("nuclear-cpmg-{k}"),
        },
        params: Some(*p),
        notes: vec![format!("noise {:?}, trajectories {}, seed {}", noise.ou, noise.n_trajectories, noise.seed)],
    };
    SignalTrace::new(total_time_grid.to_vec(), values, meta)
}

/// Time at which an echo trace first drops below `level` (linear
/// interpolation), or `None`.
pub fn crossing_time(trace: &SignalTrace, level: f64) -> Option<f64> {
    for k in 1..trace.len() {
        let (v0, v1) = (trace.values[k - 1], trace.values[k]);
        if v0 >= level && v1 < level {
            let f = (v0 - level) / (v0 - v1);
            return Some(trace.times[k - 1] + f * (trace.times[k] - trace.times[k - 1]));
        }
    }
    None
}

/// Projective rotation of a 2×2 operator as axis-angle (re-export helper for
/// signal analysis).
pub fn nuclear_rotation(m: &CMatrix) -> Result<AxisAngle> {
    Ok(Su2::from_matrix_projective(m)?.to_axis_angle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperfine::{refine_resonance, xyn_propagator};

    fn x_hat() -> Vec3 {
        [1.0, 0.0, 0.0]
    }

    #[test]
    fn empty_sequence_is_identity() {
        let p = HyperfineParams::reference();
        let rho = ramsey_initial_state();
        let s = PulseSequence::new(GateRealization::Ideal).unwrap();
        assert_eq!(simulate_sequence(&s, &p, &rho, None).unwrap(), rho);
    }

    #[test]
    fn electron_pi_swaps_population() {
        let p = HyperfineParams::reference();
        let rho = DensityMatrix::basis(4, 3).unwrap(); // |↓↓⟩
        let mut s = PulseSequence::new(GateRealization::Ideal).unwrap();
        s.pulse(x_hat(), PI).unwrap();
        let out = simulate_sequence(&s, &p, &rho, None).unwrap();
        assert!((out.population(1) - 1.0).abs() < 1e-14); // |↑↓⟩
    }

    #[test]
    fn rejects_wrong_dimension_and_bad_elements() {
        let p = HyperfineParams::reference();
        let s = PulseSequence::new(GateRealization::Ideal).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(simulate_sequence(&s, &p, &rho, None), Err(crate::Error::Dimension(_))));
        let mut s = PulseSequence::new(GateRealization::Ideal).unwrap();
        assert!(s.push(SequenceElement::FreeEvolution { duration: -1.0 }).is_err());
        assert!(s.pulse([1.0, 1.0, 0.0], PI).is_err());
        assert!(PulseSequence::new(GateRealization::Decoupled { tau: 0.0 }).is_err());
    }

    #[test]
    fn cond_rx_expansion_matches_xyn() {
        let p = HyperfineParams::reference();
        let tau = 0.43e-6;
        let mut s = PulseSequence::new(GateRealization::Decoupled { tau }).unwrap();
        s.gate(NuclearGate::CondRx).unwrap();
        let u = sequence_unitary(&s, &p).unwrap();
        assert!(u.max_abs_diff(&xyn_propagator(&p, tau, 8).unwrap()) < 1e-12);
        assert!((s.total_duration() - 16.0 * tau).abs() < 1e-18);
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let p = HyperfineParams::from_khz(-12.0, 33.0, 420.0).unwrap();
        let rho = DensityMatrix::pure(&[
            qmat::C64::new(0.3, 0.1),
            qmat::C64::new(-0.5, 0.2),
            qmat::C64::new(0.1, -0.6),
            qmat::C64::new(0.4, 0.0),
        ])
        .unwrap();
        for gates in [GateRealization::Ideal, GateRealization::Decoupled { tau: 0.6e-6 }] {
            let mut s = PulseSequence::new(gates).unwrap();
            s.free(3.3e-6).unwrap();
            s.pulse([0.0, 0.6, 0.8], 1.1).unwrap();
            s.gate(NuclearGate::CnNotE).unwrap();
            s.gate(NuclearGate::UncondPiX).unwrap();
            s.free(1.0e-6).unwrap();
            let fwd = simulate_sequence(&s, &p, &rho, None).unwrap();
            let back = simulate_sequence(&s.inverse().unwrap(), &p, &fwd, None).unwrap();
            assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-9);
        }
    }

    #[test]
    fn measurement_kills_coherence() {
        let p = HyperfineParams::reference();
        let mut s = PulseSequence::new(GateRealization::Ideal).unwrap();
        s.pulse([0.0, 1.0, 0.0], FRAC_PI_2).unwrap();
        s.measure(MeasureBasis::ElectronZ).unwrap();
        let out = simulate_sequence(&s, &p, &ramsey_initial_state(), None).unwrap();
        assert!(out.matrix()[(0, 2)].norm() < 1e-15);
        assert!(s.inverse().is_err());
    }

    #[test]
    fn dephasing_damps_electron_coherence() {
        let p = HyperfineParams::from_khz(0.0, 0.0, 100.0).unwrap();
        let mut s = PulseSequence::new(GateRealization::Ideal).unwrap();
        s.pulse([0.0, 1.0, 0.0], FRAC_PI_2).unwrap();
        s.free(10e-6).unwrap();
        let rho = DensityMatrix::basis(4, 0).unwrap();
        let out = simulate_sequence(&s, &p, &rho, Some(10e-6)).unwrap();
        let coh = out.matrix()[(0, 2)].norm();
        assert!((coh - 0.5 * libm::exp(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_closed_form() {
        let p = HyperfineParams::from_khz(0.0, 0.0, 500.0).unwrap();
        for t in [1e-6, 7.3e-6, 20e-6] {
            let phi = p.omega0() * t;
            let want = 1.0 - libm::cos(0.5 * phi).powi(2);
            assert!((s0_closed_form(&p, t) - want).abs() < 1e-12);
            assert!((sdelta_closed_form(&p, t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sdelta_sign_agnostic() {
        let p = HyperfineParams::reference();
        let q = p.with_a_par(-p.a_par()).unwrap();
        for t in [3e-6, 17e-6, 41e-6] {
            assert!((sdelta_closed_form(&p, t) - sdelta_closed_form(&q, t)).abs() < 1e-12);
        }
        let grid = uniform_grid(15e-6, 1.3e-6, 20);
        let a = ramsey_sdelta(&p, &grid, true).unwrap();
        let b = ramsey_sdelta(&q, &grid, true).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_s0_tracks_closed_form() {
        let p = HyperfineParams::reference();
        let grid = uniform_grid(15e-6, 0.0731e-6, 1200);
        let exact = ramsey_s0(&p, &grid, true).unwrap();
        let closed = ramsey_s0(&p, &grid, false).unwrap();
        let dev = exact.values.iter().zip(&closed.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 0.02, "max deviation {dev}");
        assert!(exact.values.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
    }

    #[test]
    fn ideal_gate_deviation_shrinks_with_field() {
        let base = HyperfineParams::reference();
        let dev = |scale: f64| {
            let p = base.with_omega_l(base.omega_l() * scale).unwrap();
            let grid = uniform_grid(15e-6, 0.0537e-6, 800);
            let model = SignalModel::Exact { gates: GateRealization::Ideal, dephasing_t2: None };
            let e = ramsey_trace(&p, &grid, RamseyKind::S0, model).unwrap();
            let c = ramsey_trace(&p, &grid, RamseyKind::S0, SignalModel::ClosedForm).unwrap();
            e.values.iter().zip(&c.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (d1, d2) = (dev(1.0), dev(2.0));
        assert!(d2 < d1 / 3.0, "d1 = {d1}, d2 = {d2}");
    }

    #[test]
    fn xy16_dip_position() {
        let p = HyperfineParams::reference();
        let grid = uniform_grid(0.6e-6, 0.0005e-6, 1201);
        let tr = xy_spectrum(&p, &grid, 16, Some(T2_DECOUPLED_S)).unwrap();
        let (k, _) = tr.values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let dip = tr.times[k];
        assert!((dip / 0.875e-6 - 1.0).abs() < 0.01, "dip at {dip}");
        assert!((dip / refine_resonance(&p, 0).unwrap() - 1.0).abs() < 2e-3);
    }

    #[test]
    fn echo_without_noise_is_one() {
        let p = HyperfineParams::reference();
        let grid = uniform_grid(0.0, 1e-4, 30);
        let tr = nuclear_echo(&p, EchoKind::Hahn, &grid, &EchoNoise::none()).unwrap();
        assert!(tr.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let mut n = EchoNoise::none();
        n.static_shifts = [9.43, 4.93, -4.93, -9.43].iter().map(|k| (crate::units::khz_to_rad(*k), 0.25)).collect();
        let tr = nuclear_echo(&p, EchoKind::Hahn, &grid, &n).unwrap();
        assert!(tr.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ou_calibration_and_cpmg_gain() {
        let ou = OuNoise::calibrated(1.9e-3, DEFAULT_OU_TAU_C_S).unwrap();
        assert!((ou.decay_exponent(EchoKind::Hahn, 1.9e-3).unwrap() - 1.0).abs() < 1e-12);
        // Closed form check for the Hahn exponent.
        let (t, tc) = (1.3e-3, ou.tau_c);
        let want = ou.sigma * ou.sigma * tc * tc * (t / tc - 3.0 + 4.0 * libm::exp(-t / (2.0 * tc)) - libm::exp(-t / tc));
        assert!((ou.decay_exponent(EchoKind::Hahn, t).unwrap() / want - 1.0).abs() < 1e-9);
        assert!(ou.decay_exponent(EchoKind::Cpmg(2), 1.9e-3).unwrap() < 1.0);
    }

    #[test]
    fn monte_carlo_echo_matches_analytic() {
        let p = HyperfineParams::reference();
        let ou = OuNoise::calibrated(1.9e-3, DEFAULT_OU_TAU_C_S).unwrap();
        let noise = EchoNoise { ou: Some(ou), static_shifts: Vec::new(), n_trajectories: 4000, dt: 5e-6, seed: 7 };
        let grid = [0.5e-3, 1.9e-3, 3.0e-3];
        let tr = nuclear_echo(&p, EchoKind::Hahn, &grid, &noise).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let want = 0.5 * (1.0 + libm::exp(-ou.decay_exponent(EchoKind::Hahn, t).unwrap()));
            assert!((tr.values[k] - want).abs() < 0.02, "t = {t}: {} vs {want}", tr.values[k]);
        }
    }
}
