// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Nuclear-spin environment: two static "dark" spins that shift the Larmor
//! frequency, readout-point selection, synthetic jump traces with a
//! lifetime estimator, and the hydrogen-concentration posterior.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{bail, Result};
use crate::hyperfine::{resonant_tau, HyperfineParams};
use crate::sequences::{ramsey_trace, uniform_grid, GateRealization, RamseyKind, SignalModel, SignalTrace};
use crate::units;

/// Default d₁ lifetime, 5.12 min.
pub const DEFAULT_T1_DARK_1_S: f64 = 5.12 * 60.0;
/// Default d₂ lifetime. Not reported; chosen shorter than d₁.
pub const DEFAULT_T1_DARK_2_S: f64 = 60.0;
/// Pulses per C_nNOT_e gate.
pub const GATE_PULSES: usize = 8;

/// Ising couplings (Hz) and lifetimes (s) of the two dark spins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkSpinModel {
    pub a1: f64,
    pub a2: f64,
    pub t1_dark_1: f64,
    pub t1_dark_2: f64,
}

impl Default for DarkSpinModel {
    fn default() -> Self {
        Self {
            a1: crate::channels::DARK_A1_HZ,
            a2: crate::channels::DARK_A2_HZ,
            t1_dark_1: DEFAULT_T1_DARK_1_S,
            t1_dark_2: DEFAULT_T1_DARK_2_S,
        }
    }
}

impl DarkSpinModel {
    pub fn new(a1: f64, a2: f64, t1_dark_1: f64, t1_dark_2: f64) -> Result<Self> {
        let m = Self { a1, a2, t1_dark_1, t1_dark_2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 >= 0.0 && self.a2 >= 0.0) {
            bail!(Argument, "dark-spin couplings must be >= 0");
        }
        if !(self.t1_dark_1 > 0.0 && self.t1_dark_2 > 0.0) {
            bail!(Argument, "dark-spin lifetimes must be > 0 (use infinity for none)");
        }
        Ok(())
    }

    /// Larmor shift (rad/s) for dark states d₁, d₂ ∈ {+1, −1}.
    pub fn shift(&self, d: (i8, i8)) -> Result<f64> {
        if !matches!(d.0, 1 | -1) || !matches!(d.1, 1 | -1) {
            bail!(Argument, "dark states must be ±1, got {d:?}");
        }
        Ok(units::hz_to_rad(f64::from(d.0) * self.a1 + f64::from(d.1) * self.a2))
    }

    /// φᵢ(τ_c) = 2Aᵢ(τ_c + 2Nτ₀) in radians (Aᵢ as angular frequency); the
    /// 2Nτ₀ term is the time spent inside the two gates.
    pub fn phase(&self, which: usize, tau_c: f64, tau0: f64, n_pulses: usize) -> Result<f64> {
        let a = match which {
            1 => self.a1,
            2 => self.a2,
            _ => bail!(Argument, "dark spin index must be 1 or 2"),
        };
        Ok(2.0 * units::hz_to_rad(a) * (tau_c + 2.0 * n_pulses as f64 * tau0))
    }
}

/// All four dark-state configurations in a fixed order.
pub const DARK_STATES: [(i8, i8); 4] = [(1, 1), (-1, 1), (1, -1), (-1, -1)];

/// s₀(τ_c) with ω_L shifted by the dark-spin configuration. The gates of an
/// exact model keep their own (nominal) spacing.
pub fn four_body_ramsey(
    p: &HyperfineParams,
    dark: &DarkSpinModel,
    d_states: (i8, i8),
    tau_c_grid: &[f64],
    model: SignalModel,
) -> Result<SignalTrace> {
    let shifted = p.with_omega_l(p.omega_l() + dark.shift(d_states)?)?;
    let mut t = ramsey_trace(&shifted, tau_c_grid, RamseyKind::S0, model)?;
    t.metadata.notes.push(format!("dark states {d_states:?}"));
    Ok(t)
}

/// Uniform average over the four dark-state branches.
pub fn four_body_average(p: &HyperfineParams, dark: &DarkSpinModel, tau_c_grid: &[f64], model: SignalModel) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; tau_c_grid.len()];
    for d in DARK_STATES {
        let t = four_body_ramsey(p, dark, d, tau_c_grid, model)?;
        for (a, v) in acc.iter_mut().zip(&t.values) {
            *a += 0.25 * v;
        }
    }
    Ok(acc)
}

/// Contrast of each dark spin: population difference between its two
/// states, averaged over the other spin.
fn contrasts(p: &HyperfineParams, dark: &DarkSpinModel, grid: &[f64], model: SignalModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let traces = DARK_STATES
        .iter()
        .map(|&d| Ok(four_body_ramsey(p, dark, d, grid, model)?.values))
        .collect::<Result<Vec<_>>>()?;
    let (pp, mp, pm, mm) = (&traces[0], &traces[1], &traces[2], &traces[3]);
    let d1 = (0..grid.len()).map(|i| 0.5 * (pp[i] + pm[i]) - 0.5 * (mp[i] + mm[i])).collect();
    let d2 = (0..grid.len()).map(|i| 0.5 * (pp[i] + mp[i]) - 0.5 * (pm[i] + mm[i])).collect();
    Ok((d1, d2))
}

/// Chosen Ramsey times for reading out the dark spins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutPoints {
    /// φ₂ = 2π.
    pub d2_insensitive_time: f64,
    /// Opposite-sign d₁ contrast extrema near the insensitive time.
    pub d1_readout_times: (f64, f64),
    /// d₁ contrast zero with φ₂ ≈ 1.2π where the d₂ contrast is largest.
    pub d2_readout_time: f64,
}

/// Step of the τ_c grid used for readout-point searches.
pub const READOUT_SEARCH_STEP_S: f64 = 5e-9;

/// Solve φ₂ = 2π, then pick readout times from simulated d₁/d₂ contrasts
/// (exact engine, XY-`n` gates at `tau0`).
pub fn readout_points(p: &HyperfineParams, dark: &DarkSpinModel, tau0: f64, n: usize) -> Result<ReadoutPoints> {
    dark.validate()?;
    if !(dark.a2 > 0.0 && dark.a1 > 0.0) {
        bail!(Domain, "readout points need both couplings > 0");
    }
    let gate_time = 2.0 * n as f64 * tau0;
    let t_ins = 1.0 / (2.0 * dark.a2) - gate_time;
    if !(t_ins > 0.0) {
        bail!(Domain, "no positive d2-insensitive time for these couplings");
    }
    let model = SignalModel::Exact { gates: GateRealization::Decoupled { tau: tau0 }, dephasing_t2: None };

    // d₁: search one oscillation window past the point where d₂ is silent
    // for the adjacent pair of opposite-sign extrema with the best
    // min(|c₁|) − max(|c₂|).
    let window = 12e-6;
    let steps = (window / READOUT_SEARCH_STEP_S) as usize;
    let grid = uniform_grid(t_ins, READOUT_SEARCH_STEP_S, steps);
    let (c1, c2) = contrasts(p, dark, &grid, model)?;
    let extrema: Vec<usize> = (1..grid.len() - 1)
        .filter(|&i| (c1[i] - c1[i - 1]) * (c1[i + 1] - c1[i]) <= 0.0 && c1[i].abs() > 1e-3)
        .collect();
    let mut best: Option<((usize, usize), f64)> = None;
    for w in extrema.windows(2) {
        let (i, j) = (w[0], w[1]);
        if c1[i].signum() == c1[j].signum() {
            continue;
        }
        let score = c1[i].abs().min(c1[j].abs()) - c2[i].abs().max(c2[j].abs());
        if best.is_none_or(|(_, s)| score > s) {
            best = Some(((i, j), score));
        }
    }
    let Some(((i1, i2), _)) = best else { bail!(Numerical, "no d1 readout pair found") };

    // d₂: zero crossings of c₁ with φ₂ within ±0.1π of 1.2π.
    let lo = 0.55 / (2.0 * dark.a2) - gate_time;
    let hi = 0.65 / (2.0 * dark.a2) - gate_time;
    let lo = lo.max(READOUT_SEARCH_STEP_S);
    let steps = ((hi - lo) / READOUT_SEARCH_STEP_S) as usize;
    let grid2 = uniform_grid(lo, READOUT_SEARCH_STEP_S, steps.max(2));
    let (e1, e2) = contrasts(p, dark, &grid2, model)?;
    let mut best2: Option<(f64, f64)> = None;
    for i in 1..grid2.len() {
        if (e1[i - 1] < 0.0) != (e1[i] < 0.0) {
            let t = e1[i - 1] / (e1[i - 1] - e1[i]);
            let tc = grid2[i - 1] + t * (grid2[i] - grid2[i - 1]);
            let c = e2[i - 1].abs().max(e2[i].abs());
            if best2.is_none_or(|(_, s)| c > s) {
                best2 = Some((tc, c));
            }
        }
    }
    let Some((t2, _)) = best2 else { bail!(Numerical, "no d2 readout point found") };
    Ok(ReadoutPoints { d2_insensitive_time: t_ins, d1_readout_times: (grid[i1], grid[i2]), d2_readout_time: t2 })
}

/// Repeated-measurement trace with hidden dark-spin states.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpTrace {
    pub sample_times: Vec<f64>,
    pub populations: Vec<f64>,
    pub hidden_states: Vec<(i8, i8)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpTraceConfig {
    pub readout_time: f64,
    pub n_samples: usize,
    pub sample_period: f64,
    pub readout_noise_sigma: f64,
    pub seed: u64,
}

/// Telegraph state sequence sampled every `period`; dwell times are
/// exponential with mean `lifetime` (∞ means frozen).
fn telegraph(rng: &mut ChaCha8Rng, lifetime: f64, n: usize, period: f64) -> Result<Vec<i8>> {
    let mut state: i8 = if rng.random::<bool>() { 1 } else { -1 };
    if !lifetime.is_finite() {
        return Ok(vec![state; n]);
    }
    let exp = Exp::new(1.0 / lifetime).map_err(|e| crate::Error::Argument(format!("{e}")))?;
    let mut next_flip = exp.sample(rng);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * period;
        while next_flip <= t {
            state = -state;
            next_flip += exp.sample(rng);
        }
        out.push(state);
    }
    Ok(out)
}

/// Synthesize repeated s₀ measurements at `readout_time` (closed form per
/// dark configuration) with Gaussian readout noise.
pub fn jump_trace(p: &HyperfineParams, dark: &DarkSpinModel, cfg: &JumpTraceConfig) -> Result<JumpTrace> {
    dark.validate()?;
    if !(cfg.sample_period > 0.0) || cfg.n_samples == 0 || !(cfg.readout_noise_sigma >= 0.0) {
        bail!(Argument, "need sample_period > 0, n_samples > 0 and noise >= 0");
    }
    let levels: Vec<f64> = DARK_STATES
        .iter()
        .map(|&d| Ok(four_body_ramsey(p, dark, d, &[cfg.readout_time], SignalModel::ClosedForm)?.values[0]))
        .collect::<Result<_>>()?;
    let level = |d: (i8, i8)| levels[DARK_STATES.iter().position(|x| *x == d).expect("valid state")];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d1 = telegraph(&mut rng, dark.t1_dark_1, cfg.n_samples, cfg.sample_period)?;
    let d2 = telegraph(&mut rng, dark.t1_dark_2, cfg.n_samples, cfg.sample_period)?;
    let noise = if cfg.readout_noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.readout_noise_sigma).map_err(|e| crate::Error::Argument(format!("{e}")))?)
    } else {
        None
    };
    let mut pops = Vec::with_capacity(cfg.n_samples);
    let mut hidden = Vec::with_capacity(cfg.n_samples);
    for k in 0..cfg.n_samples {
        let d = (d1[k], d2[k]);
        let x = level(d) + noise.map_or(0.0, |n| n.sample(&mut rng));
        pops.push(x.clamp(0.0, 1.0));
        hidden.push(d);
    }
    Ok(JumpTrace { sample_times: uniform_grid(0.0, cfg.sample_period, cfg.n_samples), populations: pops, hidden_states: hidden })
}

/// Noise σ for which midpoint thresholding of the two d₁ levels (averaged
/// over d₂) reaches `fidelity`.
pub fn noise_for_fidelity(p: &HyperfineParams, dark: &DarkSpinModel, readout_time: f64, fidelity: f64) -> Result<f64> {
    if !(0.5 < fidelity && fidelity < 1.0) {
        bail!(Argument, "fidelity must lie in (0.5, 1)");
    }
    let (c1, _) = contrasts(p, dark, &[readout_time], SignalModel::ClosedForm)?;
    Ok(0.5 * c1[0].abs() / probit(fidelity))
}

/// Inverse standard normal CDF by bisection on erf.
pub fn probit(q: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2));
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-class split of the samples by Otsu's criterion (maximum
/// between-class variance), computed exactly on the sorted values.
/// Returns (threshold, low-class mean, high-class mean).
pub fn bimodal_threshold(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        bail!(Argument, "need at least two finite samples");
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let total: f64 = xs.iter().sum();
    let mut left = 0.0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 1..n {
        left += xs[k - 1];
        if xs[k] == xs[k - 1] {
            continue;
        }
        let (n0, n1) = (k as f64, (n - k) as f64);
        let (m0, m1) = (left / n0, (total - left) / n1);
        let between = n0 * n1 * (m1 - m0) * (m1 - m0);
        if between > best.0 {
            best = (between, k);
        }
    }
    let k = best.1;
    if k == 0 {
        return Ok((xs[0], xs[0], xs[0]));
    }
    let m0 = xs[..k].iter().sum::<f64>() / k as f64;
    let m1 = xs[k..].iter().sum::<f64>() / (n - k) as f64;
    Ok((0.5 * (xs[k - 1] + xs[k]), m0, m1))
}

/// Lifetime estimate from a thresholded trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifetimeEstimate {
    pub t1: f64,
    /// Approximate 95% interval.
    pub ci: (f64, f64),
    pub threshold: f64,
    /// Completed dwells used in the fit.
    pub n_dwells: usize,
    /// State changes detected.
    pub n_jumps: usize,
    /// Set when fewer than 5 jumps were seen.
    pub low_confidence: bool,
}

/// Hysteresis half-width as a fraction of the class-mean separation.
pub const HYSTERESIS_FRACTION: f64 = 0.25;

/// Threshold the trace (Otsu split unless given), assign states with a
/// hysteresis band around the threshold so single noisy samples do not
/// register as jumps, drop the censored first and last dwells, and fit the
/// remaining dwell lengths with a geometric law.
pub fn estimate_lifetime(trace: &JumpTrace, threshold: Option<f64>) -> Result<LifetimeEstimate> {
    let n = trace.populations.len();
    if n < 3 || trace.sample_times.len() != n {
        bail!(Argument, "trace too short");
    }
    let dt = (trace.sample_times[n - 1] - trace.sample_times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        bail!(Argument, "sample times must increase");
    }
    let (otsu, m0, m1) = bimodal_threshold(&trace.populations)?;
    let thr = threshold.unwrap_or(otsu);
    let h = HYSTERESIS_FRACTION * (m1 - m0).abs();
    let mut state = trace.populations[0] > thr;
    let mut runs = Vec::new();
    let mut len = 1usize;
    for &v in &trace.populations[1..] {
        let next = if state { v >= thr - h } else { v > thr + h };
        if next == state {
            len += 1;
        } else {
            runs.push(len);
            len = 1;
            state = next;
        }
    }
    runs.push(len);
    let n_jumps = runs.len() - 1;
    let kept: Vec<f64> = if runs.len() > 2 { runs[1..runs.len() - 1].iter().map(|&l| l as f64).collect() } else { Vec::new() };
    let low_confidence = n_jumps < 5 || kept.is_empty();
    if kept.is_empty() {
        return Ok(LifetimeEstimate { t1: f64::INFINITY, ci: (0.0, f64::INFINITY), threshold: thr, n_dwells: 0, n_jumps, low_confidence: true });
    }
    // Dwell lengths are geometric with change probability 1/mean. A
    // telegraph process changes state between samples with probability
    // (1 − e^{−2dt/T})/2, which fixes T.
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let flip = 1.0 / mean;
    let t1 = if flip < 0.5 { -2.0 * dt / libm::log(1.0 - 2.0 * flip) } else { 0.0 };
    let rel = 1.96 / libm::sqrt(kept.len() as f64);
    Ok(LifetimeEstimate {
        t1,
        ci: (t1 * libm::exp(-rel), t1 * libm::exp(rel)),
        threshold: thr,
        n_dwells: kept.len(),
        n_jumps,
        low_confidence,
    })
}

/// Fraction of samples whose thresholded d₁ state matches the hidden one.
/// The sign of the mapping is chosen to maximize agreement.
pub fn threshold_fidelity(trace: &JumpTrace, threshold: f64) -> f64 {
    let n = trace.populations.len().max(1) as f64;
    let agree = trace.populations.iter().zip(&trace.hidden_states).filter(|(v, d)| (**v > threshold) == (d.0 > 0)).count() as f64 / n;
    agree.max(1.0 - agree)
}

/// Lengths (s) of completed dwells of d₁ in the hidden sequence.
pub fn hidden_dwells(trace: &JumpTrace) -> Vec<f64> {
    let n = trace.hidden_states.len();
    if n < 2 {
        return Vec::new();
    }
    let dt = trace.sample_times[1] - trace.sample_times[0];
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 1..n {
        if trace.hidden_states[i].0 != trace.hidden_states[i - 1].0 {
            if let Some(s) = start {
                out.push((i - s) as f64 * dt);
            }
            start = Some(i);
        }
    }
    out
}

/// One-sample Kolmogorov–Smirnov test against Exp(mean). Returns (D, p).
pub fn ks_exponential(samples: &[f64], mean: f64) -> Result<(f64, f64)> {
    if samples.is_empty() || !(mean > 0.0) {
        bail!(Argument, "need samples and a positive mean");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = 1.0 - libm::exp(-x / mean);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    // Asymptotic Kolmogorov distribution with the usual small-n correction.
    let sn = libm::sqrt(n);
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * libm::exp(-2.0 * k * k * lambda * lambda);
        p += if (k as i64) % 2 == 1 { term } else { -term };
    }
    Ok((d, p.clamp(0.0, 1.0)))
}

// ---------------------------------------------------------------------------
// Concentration posterior

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalKind {
    /// CDF inversion at 0.16 / 0.84.
    Central,
    /// Highest posterior density.
    Hpd,
}

/// Posterior over concentration (cm⁻³) with a uniform prior.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationPosterior {
    pub n_obs: u32,
    pub m_trials: u32,
    pub v_obs_cm3: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Numerical argmax of the density on the grid, refined.
    pub mode: f64,
    pub ci68: (f64, f64),
    pub hpd68: (f64, f64),
}

const POSTERIOR_GRID: usize = 20_001;

/// Volume (4/3)πr³ in cm³ for r in metres.
pub fn sphere_volume_cm3(r_m: f64) -> f64 {
    4.0 / 3.0 * core::f64::consts::PI * r_m * r_m * r_m * units::CM3_PER_M3
}

fn log_like(x: f64, n: u32, m: u32) -> f64 {
    // P₀ = e^{−x}; P₁ = 1 − e^{−x}.
    let l0 = -x * f64::from(m - n);
    let l1 = if n == 0 { 0.0 } else { f64::from(n) * libm::log(-libm::expm1(-x)) };
    l0 + l1
}

/// p(ρ|O) ∝ P₀(ρ)^{m−n} P₁(ρ)ⁿ on a log-spaced grid, normalized by the
/// trapezoid rule. The grid spans ρV ∈ [1e−6, 60/(m − n + 1)]; the ends
/// carry negligible mass.
pub fn concentration_posterior(n_obs: u32, m_trials: u32, r_obs_m: f64) -> Result<ConcentrationPosterior> {
    if m_trials == 0 {
        bail!(Domain, "no trials, so no data");
    }
    if n_obs > m_trials {
        bail!(Argument, "n_obs ({n_obs}) exceeds m_trials ({m_trials})");
    }
    if n_obs == m_trials {
        bail!(Domain, "posterior is improper when every trial is positive");
    }
    if !(r_obs_m > 0.0) {
        bail!(Argument, "r_obs must be > 0");
    }
    let v = sphere_volume_cm3(r_obs_m);
    let (x_lo, x_hi) = (1e-6, 60.0 / f64::from(m_trials - n_obs));
    let lr = libm::log(x_hi / x_lo) / (POSTERIOR_GRID - 1) as f64;
    let xs: Vec<f64> = (0..POSTERIOR_GRID).map(|i| x_lo * libm::exp(lr * i as f64)).collect();
    let peak_x = if n_obs == 0 { x_lo } else { libm::log(f64::from(m_trials) / f64::from(m_trials - n_obs)) };
    let ref_ll = log_like(peak_x, n_obs, m_trials);
    let raw: Vec<f64> = xs.iter().map(|&x| libm::exp(log_like(x, n_obs, m_trials) - ref_ll)).collect();
    // Trapezoid in x; the integral from 0 to x_lo is added as a rectangle.
    let mut cum = vec![0.0; xs.len()];
    cum[0] = raw[0] * xs[0];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * (raw[i] + raw[i - 1]) * (xs[i] - xs[i - 1]);
    }
    let z = cum[xs.len() - 1];
    let grid: Vec<f64> = xs.iter().map(|x| x / v).collect();
    let density: Vec<f64> = raw.iter().map(|r| r / z * v).collect();
    let cdf: Vec<f64> = cum.iter().map(|c| c / z).collect();

    let imax = (0..xs.len()).max_by(|&a, &b| raw[a].total_cmp(&raw[b])).unwrap_or(0);
    let mode_x = if imax == 0 || imax == xs.len() - 1 {
        xs[imax]
    } else {
        // Golden-section refinement between the neighbours.
        let f = |x: f64| log_like(x, n_obs, m_trials);
        let (mut a, mut b) = (xs[imax - 1], xs[imax + 1]);
        let g = 0.5 * (libm::sqrt(5.0) - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    };

    let inv = |q: f64| -> f64 {
        let i = cdf.partition_point(|&c| c < q).min(xs.len() - 1);
        if i == 0 {
            return grid[0] * q / cdf[0].max(f64::MIN_POSITIVE);
        }
        let t = (q - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
        grid[i - 1] + t * (grid[i] - grid[i - 1])
    };
    let ci68 = (inv(0.16), inv(0.84));
    let hpd68 = hpd(&grid, &density, &cdf, 0.68);
    Ok(ConcentrationPosterior {
        n_obs,
        m_trials,
        v_obs_cm3: v,
        grid,
        density,
        cdf,
        mode: mode_x / v,
        ci68,
        hpd68,
    })
}

/// Shortest interval holding `mass`, by bisection on the density level.
fn hpd(grid: &[f64], density: &[f64], cdf: &[f64], mass: f64) -> (f64, f64) {
    let interval = |level: f64| -> (f64, f64, f64) {
        let i0 = density.iter().position(|&d| d >= level).unwrap_or(0);
        let i1 = density.iter().rposition(|&d| d >= level).unwrap_or(grid.len() - 1);
        let lo_mass = if i0 == 0 { 0.0 } else { cdf[i0] };
        (grid[i0], grid[i1], cdf[i1] - lo_mass)
    };
    let top = density.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if interval(mid).2 >= mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b, _) = interval(lo);
    (a, b)
}

impl ConcentrationPosterior {
    pub fn interval(&self, kind: IntervalKind) -> (f64, f64) {
        match kind {
            IntervalKind::Central => self.ci68,
            IntervalKind::Hpd => self.hpd68,
        }
    }

    /// Trapezoid integral of the density over the grid (plus the sliver
    /// below the first point).
    pub fn total_mass(&self) -> f64 {
        let mut s = self.density[0] * self.grid[0];
        for i in 1..self.grid.len() {
            s += 0.5 * (self.density[i] + self.density[i - 1]) * (self.grid[i] - self.grid[i - 1]);
        }
        s
    }
}

/// Closed form for one hit out of six: p(ρ) = 30V(e^{−5ρV} − e^{−6ρV}).
pub fn posterior_one_of_six(rho: f64, v_cm3: f64) -> f64 {
    30.0 * v_cm3 * (libm::exp(-5.0 * rho * v_cm3) - libm::exp(-6.0 * rho * v_cm3))
}

/// Distance of the observed proton (m).
pub const REFERENCE_DETECTION_RADIUS_M: f64 = 2e-9;

/// Detection radius scaled by (Nα / threshold)^{1/3}, since α ∝ 1/r³.
pub fn observable_radius(alpha_at_detection: f64, n_pulses: usize, snr_margin_rotation: f64) -> Result<f64> {
    if !(alpha_at_detection > 0.0 && snr_margin_rotation > 0.0) || n_pulses == 0 {
        bail!(Argument, "inputs must be positive");
    }
    let ratio = alpha_at_detection * n_pulses as f64 / snr_margin_rotation;
    Ok(REFERENCE_DETECTION_RADIUS_M * libm::cbrt(ratio))
}

/// Phase ψ of the fundamental in y ≈ c + a·cos(ωt + ψ) + (second
/// harmonic), by linear least squares at fixed ω.
pub fn fit_phase(times: &[f64], values: &[f64], omega: f64) -> Result<f64> {
    const K: usize = 5;
    if times.len() != values.len() || times.len() < K {
        bail!(Argument, "need at least {K} matching samples");
    }
    let mut m = [[0.0; K]; K];
    let mut r = [0.0; K];
    for (&t, &y) in times.iter().zip(values) {
        let f = [1.0, libm::cos(omega * t), libm::sin(omega * t), libm::cos(2.0 * omega * t), libm::sin(2.0 * omega * t)];
        for i in 0..K {
            r[i] += f[i] * y;
            for j in 0..K {
                m[i][j] += f[i] * f[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for c in 0..K {
        let piv = (c..K).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap_or(c);
        if m[piv][c].abs() < 1e-12 * times.len() as f64 {
            bail!(Numerical, "singular phase fit");
        }
        m.swap(c, piv);
        r.swap(c, piv);
        for i in c + 1..K {
            let f = m[i][c] / m[c][c];
            for j in c..K {
                m[i][j] -= f * m[c][j];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = [0.0; K];
    for i in (0..K).rev() {
        let s: f64 = (i + 1..K).map(|j| m[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    // a·cos(ωt + ψ) = a cos ψ cos ωt − a sin ψ sin ωt.
    Ok(libm::atan2(-x[2], x[1]))
}

/// Phase of the d-branch Ramsey signal relative to the unshifted ω₀ in a
/// window of `half_width` around `tau_c`.
pub fn branch_phase(p: &HyperfineParams, dark: &DarkSpinModel, d: (i8, i8), tau_c: f64, tau0: f64, half_width: f64) -> Result<f64> {
    let grid = uniform_grid(tau_c - half_width, half_width / 50.0, 101);
    let model = SignalModel::Exact { gates: GateRealization::Decoupled { tau: tau0 }, dephasing_t2: None };
    let tr = four_body_ramsey(p, dark, d, &grid, model)?;
    // Fit at the branch's own frequency, then refer back to ω₀.
    let w = p.with_omega_l(p.omega_l() + dark.shift(d)?)?.omega0();
    Ok(fit_phase(&grid, &tr.values, w)? + (w - p.omega0()) * tau_c)
}

/// τ₀ of the unshifted reference coupling, used by the dark-spin defaults.
pub fn reference_tau0() -> f64 {
    resonant_tau(&HyperfineParams::reference()).expect("reference resonance exists")
}
