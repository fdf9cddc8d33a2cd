// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Nuclear-spin localization from hyperfine observations.
//!
//! Frame: crystal axes (x, y, z) = (D₁, D₂, b). Spherical angles put θ
//! from +z (b) and φ from +x (D₁) in the D₁–D₂ plane; degrees at the API.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Result};
use crate::hyperfine::{refine_resonance, HyperfineParams};
use crate::qmat::{cross, dot, norm, normalize, Vec3};
use crate::units;

/// Closest approach for which the point-dipole form is accepted.
pub const MIN_DIPOLE_DISTANCE_A: f64 = 0.5;

type M3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GLabel {
    Ground,
    Excited,
}

/// Electron g-tensor in the crystal frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GTensor {
    m: M3,
    pub label: GLabel,
}

impl GTensor {
    pub fn new(m: M3, label: GLabel) -> Result<Self> {
        if m.iter().flatten().any(|x| !x.is_finite()) {
            bail!(Argument, "g-tensor has non-finite entries");
        }
        Ok(Self { m, label })
    }

    pub fn isotropic(g: f64) -> Self {
        Self { m: [[g, 0.0, 0.0], [0.0, g, 0.0], [0.0, 0.0, g]], label: GLabel::Ground }
    }

    pub fn matrix(&self) -> M3 {
        self.m
    }

    /// Same tensor with the b axis reversed (sign of the xz and yz entries).
    pub fn flip_b(&self) -> Self {
        let mut m = self.m;
        for i in 0..2 {
            m[i][2] = -m[i][2];
            m[2][i] = -m[2][i];
        }
        Self { m, label: self.label }
    }

    /// gᵀ v.
    fn t_apply(&self, v: Vec3) -> Vec3 {
        core::array::from_fn(|j| (0..3).map(|l| self.m[l][j] * v[l]).sum())
    }
}

/// Unit vector for spherical angles in degrees.
pub fn direction(theta_deg: f64, phi_deg: f64) -> Vec3 {
    let (t, p) = (units::rad(theta_deg), units::rad(phi_deg));
    [libm::sin(t) * libm::cos(p), libm::sin(t) * libm::sin(p), libm::cos(t)]
}

/// First-order field correction and its 1σ uncertainties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldCorrection {
    pub db_gauss: f64,
    pub dtheta_deg: f64,
    pub dphi_deg: f64,
    pub sigma_db_gauss: f64,
    pub sigma_dtheta_deg: f64,
    pub sigma_dphi_deg: f64,
}

impl FieldCorrection {
    pub const NONE: Self =
        Self { db_gauss: 0.0, dtheta_deg: 0.0, dphi_deg: 0.0, sigma_db_gauss: 0.0, sigma_dtheta_deg: 0.0, sigma_dphi_deg: 0.0 };

    /// ΔB = 3.99 ± 0.76 G, Δθ = 0.89° ± 0.34°, Δφ = 0.79° ± 0.44°.
    pub const REFERENCE: Self = Self {
        db_gauss: 3.99,
        dtheta_deg: 0.89,
        dphi_deg: 0.79,
        sigma_db_gauss: 0.76,
        sigma_dtheta_deg: 0.34,
        sigma_dphi_deg: 0.44,
    };

    /// Uncertainties multiplied by `k`, means kept.
    pub fn with_sigma_scale(self, k: f64) -> Self {
        Self { sigma_db_gauss: self.sigma_db_gauss * k, sigma_dtheta_deg: self.sigma_dtheta_deg * k, sigma_dphi_deg: self.sigma_dphi_deg * k, ..self }
    }
}

/// Nominal field (gauss, degrees) plus its correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSetting {
    pub b_gauss: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub correction: FieldCorrection,
}

/// Field orientations (θ, φ) of the four localization measurements.
pub const REFERENCE_ORIENTATIONS: [(f64, f64); 4] = [(95.0, 110.0), (95.0, 140.0), (85.0, 140.0), (100.0, 90.0)];
/// Nominal field magnitude before correction (G).
pub const REFERENCE_B_GAUSS: f64 = 130.0;

impl FieldSetting {
    pub fn new(b_gauss: f64, theta_deg: f64, phi_deg: f64, correction: FieldCorrection) -> Result<Self> {
        if !(b_gauss > 0.0 && b_gauss.is_finite()) {
            bail!(Argument, "field magnitude must be positive, got {b_gauss} G");
        }
        if !(0.0..=180.0).contains(&theta_deg) || !(-360.0..=360.0).contains(&phi_deg) {
            bail!(Argument, "field angles out of range: theta {theta_deg}, phi {phi_deg}");
        }
        Ok(Self { b_gauss, theta_deg, phi_deg, correction })
    }

    /// The four reference orientations at 130 G with the reference correction.
    pub fn reference_settings() -> Vec<Self> {
        REFERENCE_ORIENTATIONS
            .iter()
            .map(|&(t, p)| Self::new(REFERENCE_B_GAUSS, t, p, FieldCorrection::REFERENCE).expect("valid constants"))
            .collect()
    }

    /// Field vector in tesla with an explicit shift applied.
    pub fn field_with(&self, db_gauss: f64, dtheta_deg: f64, dphi_deg: f64) -> Vec3 {
        let b = (self.b_gauss + db_gauss) / units::GAUSS_PER_TESLA;
        let d = direction(self.theta_deg + dtheta_deg, self.phi_deg + dphi_deg);
        [b * d[0], b * d[1], b * d[2]]
    }

    /// Field vector (T) with the mean correction.
    pub fn field(&self) -> Vec3 {
        let c = &self.correction;
        self.field_with(c.db_gauss, c.dtheta_deg, c.dphi_deg)
    }
}

/// Nuclear position: r in Å, angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub r: f64,
    pub theta_h: f64,
    pub phi_h: f64,
}

impl Position {
    pub fn new(r: f64, theta_h: f64, phi_h: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite() && theta_h.is_finite() && phi_h.is_finite()) {
            bail!(Argument, "invalid position ({r}, {theta_h}, {phi_h})");
        }
        Ok(Self { r, theta_h, phi_h })
    }

    /// Reported fit on the A∥ > 0 branch.
    pub const REFERENCE_POSITIVE: Self = Self { r: 20.0, theta_h: 66.7, phi_h: 49.6 };
    /// Reported fit on the A∥ < 0 branch.
    pub const REFERENCE_NEGATIVE: Self = Self { r: 19.0, theta_h: 19.0, phi_h: 323.6 };

    pub fn unit(&self) -> Vec3 {
        direction(self.theta_h, self.phi_h)
    }

    /// θ folded into [0, 180], φ into [0, 360).
    pub fn canonical(&self) -> Self {
        let u = self.unit();
        let theta = units::deg(libm::acos(u[2].clamp(-1.0, 1.0)));
        let mut phi = units::deg(libm::atan2(u[1], u[0]));
        if phi < 0.0 {
            phi += 360.0;
        }
        Self { r: libm::fabs(self.r), theta_h: theta, phi_h: phi }
    }

    /// Angular separation (degrees) between the two directions.
    pub fn angle_to(&self, other: &Self) -> f64 {
        units::deg(libm::acos(dot(self.unit(), other.unit()).clamp(-1.0, 1.0)))
    }
}

/// Electron Larmor frequency μ_B|gᵀB|/h in Hz.
pub fn electron_larmor_hz(g: &GTensor, b_tesla: Vec3) -> f64 {
    units::MU_B * norm(g.t_apply(b_tesla)) / units::H_PLANCK
}

/// Secular hyperfine vector A (rad/s) in the crystal frame; the electron
/// quantization axis is gᵀB, the nuclear one B.
fn hyperfine_vector(pos: &Position, g: &GTensor, b: Vec3, g_n: f64) -> Result<Vec3> {
    if pos.r < MIN_DIPOLE_DISTANCE_A {
        bail!(Domain, "r = {} Å is below the point-dipole limit of {MIN_DIPOLE_DISTANCE_A} Å", pos.r);
    }
    let r = pos.r * units::ANGSTROM;
    let c = -units::MU0_OVER_4PI * units::MU_B * units::MU_N * g_n / (r * r * r) / units::HBAR;
    let Some(s_hat) = normalize(g.t_apply(b)) else { bail!(Domain, "g-tensor annihilates the field direction") };
    let u = pos.unit();
    // a_k = Σ_j ŝ_j T_jk with T = c gᵀ(1 − 3 r̂r̂ᵀ); A = a/2.
    let gs: Vec3 = core::array::from_fn(|k| (0..3).map(|j| g.m[k][j] * s_hat[j]).sum());
    let proj = dot(gs, u);
    Ok(core::array::from_fn(|k| 0.5 * c * (gs[k] - 3.0 * proj * u[k])))
}

/// (A∥ signed, A⊥ ≥ 0, ω_L = γ_N|B|) for a nucleus at `pos`.
/// `gamma_n` is γ_N/2π in Hz/T; the nuclear g-factor follows from it.
pub fn dipolar_hyperfine_at(pos: &Position, g: &GTensor, b_tesla: Vec3, gamma_n: f64) -> Result<HyperfineParams> {
    let g_n = gamma_n * units::H_PLANCK / units::MU_N;
    let a = hyperfine_vector(pos, g, b_tesla, g_n)?;
    let Some(b_hat) = normalize(b_tesla) else { bail!(Argument, "zero field") };
    let a_par = dot(a, b_hat);
    let a_perp = norm(cross(a, b_hat));
    HyperfineParams::new(a_par, a_perp, units::hz_to_rad(gamma_n * norm(b_tesla)))
}

/// [`dipolar_hyperfine_at`] with the setting's corrected field.
pub fn dipolar_hyperfine(pos: &Position, g: &GTensor, field: &FieldSetting, gamma_n: f64) -> Result<HyperfineParams> {
    dipolar_hyperfine_at(pos, g, field.field(), gamma_n)
}

/// Measured (ω₀, |ω_δ|, α) with 1σ errors; frequencies in rad/s, α in rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub values: [f64; 3],
    pub errors: [f64; 3],
}

impl Observation {
    pub fn new(values: [f64; 3], errors: [f64; 3]) -> Result<Self> {
        if errors.iter().any(|e| !(*e > 0.0)) || values.iter().any(|v| !v.is_finite()) {
            bail!(Argument, "observation errors must be > 0 and values finite");
        }
        Ok(Self { values, errors })
    }

    /// From kHz and degrees.
    pub fn from_khz_deg(omega0: (f64, f64), omega_delta: (f64, f64), alpha: (f64, f64)) -> Result<Self> {
        Self::new(
            [units::khz_to_rad(omega0.0), units::khz_to_rad(omega_delta.0), units::rad(alpha.0)],
            [units::khz_to_rad(omega0.1), units::khz_to_rad(omega_delta.1), units::rad(alpha.1)],
        )
    }
}

/// Rotation per π pulse at the first refined resonance, from the SU(2)
/// block alone.
pub fn resonant_alpha(p: &HyperfineParams) -> Result<f64> {
    let tau = 0.5 * refine_resonance(p, 0)?;
    let (up, um) = p.free_su2(tau);
    let vp = up.compose(&um);
    let vm = um.compose(&up);
    Ok(0.5 * vp.compose(&vm).to_axis_angle().angle())
}

/// Model observables (ω₀, |ω_δ|, α).
pub fn observables(p: &HyperfineParams) -> Result<[f64; 3]> {
    Ok([p.omega0(), libm::fabs(p.omega_delta()), resonant_alpha(p)?])
}

/// Invert (ω₀, |ω_δ|, α) to (A∥ ≥ 0, A⊥, ω_L ≥ A∥) by bisection on ω_L.
/// The sign of A∥ is not observable.
pub fn invert_observation(values: [f64; 3]) -> Result<HyperfineParams> {
    let [w0, wd, alpha] = values;
    if !(w0 > 0.0 && wd >= 0.0 && wd < w0 && alpha > 0.0) {
        bail!(Domain, "observation outside the invertible range");
    }
    let (wp, wm) = (w0 + wd, w0 - wd);
    let s = 0.5 * (wp * wp + wm * wm);
    let prod = wp * wp - wm * wm;
    // ω_L² + A∥² + A⊥² = s, 4ω_L A∥ = prod.
    let build = |wl: f64| -> Option<HyperfineParams> {
        let a_par = prod / (4.0 * wl);
        let perp2 = s - wl * wl - a_par * a_par;
        if perp2 < 0.0 {
            return None;
        }
        HyperfineParams::new(a_par, libm::sqrt(perp2), wl).ok()
    };
    // Largest admissible ω_L has A⊥ = 0: ω_L² = (s + sqrt(s² − prod²/4))/2.
    let disc = s * s - 0.25 * prod * prod;
    if disc < 0.0 {
        bail!(Domain, "inconsistent ω₀ and ω_δ");
    }
    let mut hi = libm::sqrt(0.5 * (s + libm::sqrt(disc)));
    // Stay on the strong-field root, ω_L ≥ A∥.
    let mut lo = libm::sqrt(0.25 * prod) * (1.0 + 1e-12);
    // α grows as ω_L falls (A⊥ grows). Where no resonance exists the
    // coupling is far too strong, which counts as "α too large".
    let f = |wl: f64| -> f64 {
        match build(wl) {
            Some(p) => resonant_alpha(&p).map_or(1.0, |a| a - alpha),
            None => -alpha,
        }
    };
    if f(lo) < 0.0 {
        bail!(Domain, "α = {alpha} too large to invert");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    match build(0.5 * (lo + hi)) {
        Some(p) => Ok(p),
        None => bail!(Numerical, "inversion failed"),
    }
}

/// Forward model for localization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocateModel {
    pub g: GTensor,
    /// γ_N/2π in Hz/T.
    pub gamma_n: f64,
}

impl LocateModel {
    pub fn hydrogen(g: GTensor) -> Self {
        Self { g, gamma_n: units::GAMMA_H_HZ_PER_T }
    }

    pub fn params(&self, pos: &Position, field: &FieldSetting) -> Result<HyperfineParams> {
        dipolar_hyperfine(pos, &self.g, field, self.gamma_n)
    }

    pub fn observables(&self, pos: &Position, field: &FieldSetting) -> Result<[f64; 3]> {
        observables(&self.params(pos, field)?)
    }
}

fn check_lengths(obs: &[Observation], settings: &[FieldSetting], sigma_model: Option<&[[f64; 3]]>) -> Result<()> {
    if obs.len() != settings.len() || sigma_model.is_some_and(|s| s.len() != obs.len()) {
        bail!(Argument, "observation, setting and sigma lists must have equal length");
    }
    Ok(())
}

/// Σᵢ (x_obs − x_mod)² / (σ_obs² + σ_mod²) over all settings and the three
/// observables. `sigma_model = None` means zero model error.
pub fn chi_square(
    model: &LocateModel,
    pos: &Position,
    obs: &[Observation],
    settings: &[FieldSetting],
    sigma_model: Option<&[[f64; 3]]>,
) -> Result<f64> {
    check_lengths(obs, settings, sigma_model)?;
    let mut chi2 = 0.0;
    for (i, (o, s)) in obs.iter().zip(settings).enumerate() {
        let x = model.observables(pos, s)?;
        for k in 0..3 {
            let sm = sigma_model.map_or(0.0, |m| m[i][k]);
            let d = o.values[k] - x[k];
            chi2 += d * d / (o.errors[k] * o.errors[k] + sm * sm);
        }
    }
    Ok(chi2)
}

/// Per-setting sample standard deviation of the model observables when the
/// field correction is drawn from independent normals.
pub fn monte_carlo_sigma(
    model: &LocateModel,
    pos: &Position,
    settings: &[FieldSetting],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    if n_samples < 100 {
        bail!(Argument, "need at least 100 Monte Carlo samples, got {n_samples}");
    }
    let mut out = Vec::with_capacity(settings.len());
    for (i, s) in settings.iter().enumerate() {
        let c = &s.correction;
        if c.sigma_db_gauss == 0.0 && c.sigma_dtheta_deg == 0.0 && c.sigma_dphi_deg == 0.0 {
            out.push([0.0; 3]);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let nrm = |m: f64, sd: f64| Normal::new(m, sd).map_err(|e| crate::Error::Argument(alloc::format!("{e}")));
        let (db, dt, dp) = (nrm(c.db_gauss, c.sigma_db_gauss)?, nrm(c.dtheta_deg, c.sigma_dtheta_deg)?, nrm(c.dphi_deg, c.sigma_dphi_deg)?);
        let mut mean = [0.0; 3];
        let mut m2 = [0.0; 3];
        for n in 0..n_samples {
            let b = s.field_with(db.sample(&mut rng), dt.sample(&mut rng), dp.sample(&mut rng));
            let x = observables(&dipolar_hyperfine_at(pos, &model.g, b, model.gamma_n)?)?;
            // Welford update.
            for k in 0..3 {
                let d = x[k] - mean[k];
                mean[k] += d / (n + 1) as f64;
                m2[k] += d * (x[k] - mean[k]);
            }
        }
        out.push(core::array::from_fn(|k| libm::sqrt(m2[k] / (n_samples - 1) as f64)));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignBranch {
    Positive,
    Negative,
}

/// Box in (r [Å], θ, φ [deg]) searched by the grid stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchRegion {
    pub r: (f64, f64),
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl Default for SearchRegion {
    fn default() -> Self {
        Self { r: (10.0, 30.0), theta: (0.0, 180.0), phi: (0.0, 360.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocateOptions {
    pub region: SearchRegion,
    pub grid_step_r: f64,
    pub grid_step_deg: f64,
    /// Monte Carlo samples for σ_model; 0 disables model errors.
    pub mc_samples: usize,
    pub seed: u64,
    pub nm_tol: f64,
    pub nm_max_iter: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            region: SearchRegion::default(),
            grid_step_r: 2.0,
            grid_step_deg: 5.0,
            mc_samples: 10_000,
            seed: 0,
            nm_tol: 1e-4,
            nm_max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocateFit {
    pub branch: SignBranch,
    pub position: Position,
    pub chi2_min: f64,
    /// Degrees of freedom, 3·settings − 3.
    pub dof: i64,
    /// χ²/ν, or NaN when ν ≤ 0.
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub sigma_model: Vec<[f64; 3]>,
    pub params: Vec<HyperfineParams>,
}

fn branch_ok(model: &LocateModel, pos: &Position, settings: &[FieldSetting], branch: SignBranch) -> bool {
    // The sign is taken at the first setting, where the branch is defined.
    match settings.first().map(|s| model.params(pos, s)) {
        Some(Ok(p)) => match branch {
            SignBranch::Positive => p.a_par() >= 0.0,
            SignBranch::Negative => p.a_par() <= 0.0,
        },
        _ => false,
    }
}

/// Result of a Nelder–Mead minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead with standard coefficients. Stops when the spread of
/// simplex values falls below `tol·(|f_best| + tol)` and the simplex
/// diameter below `tol·(|x| + 1)`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], steps: &[f64], tol: f64, max_iter: usize) -> Minimum {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        it += 1;
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let diam = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max)).fold(0.0, f64::max);
        let scale = pts[0].iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max) + 1.0;
        if spread.is_finite() && spread <= tol * (libm::fabs(vals[0]) + tol) && diam <= tol * scale {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = (0..n).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
                    vals[i] = f(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Minimum { x: pts[best].clone(), f: vals[best], iterations: it, converged }
}

/// Grid points of the coarse search stage.
fn grid(region: &SearchRegion, step_r: f64, step_deg: f64) -> Vec<Position> {
    let count = |(a, b): (f64, f64), s: f64| (libm::floor((b - a) / s + 1e-9) as usize) + 1;
    let (nr, nt, np) = (count(region.r, step_r), count(region.theta, step_deg), count(region.phi, step_deg));
    let mut out = Vec::with_capacity(nr * nt * np);
    for i in 0..nr {
        for j in 0..nt {
            for k in 0..np {
                out.push(Position {
                    r: region.r.0 + i as f64 * step_r,
                    theta_h: region.theta.0 + j as f64 * step_deg,
                    phi_h: region.phi.0 + k as f64 * step_deg,
                });
            }
        }
    }
    out
}

/// Grid stage: best in-branch grid position (σ_model = 0).
pub fn grid_search(
    model: &LocateModel,
    obs: &[Observation],
    settings: &[FieldSetting],
    branch: SignBranch,
    opts: &LocateOptions,
) -> Result<(Position, f64)> {
    check_lengths(obs, settings, None)?;
    let mut best: Option<(Position, f64)> = None;
    for pos in grid(&opts.region, opts.grid_step_r, opts.grid_step_deg) {
        if !branch_ok(model, &pos, settings, branch) {
            continue;
        }
        let Ok(c) = chi_square(model, &pos, obs, settings, None) else { continue };
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((pos, c));
        }
    }
    match best {
        Some(b) => Ok(b),
        None => bail!(Domain, "no grid point lies on the requested A∥ branch"),
    }
}

/// Refine from `start` by Nelder–Mead with σ_model held fixed.
pub fn refine(
    model: &LocateModel,
    obs: &[Observation],
    settings: &[FieldSetting],
    branch: SignBranch,
    start: Position,
    sigma_model: Option<&[[f64; 3]]>,
    opts: &LocateOptions,
) -> Result<(Position, Minimum)> {
    check_lengths(obs, settings, sigma_model)?;
    let objective = |x: &[f64]| -> f64 {
        let pos = Position { r: x[0], theta_h: x[1], phi_h: x[2] };
        if pos.r < MIN_DIPOLE_DISTANCE_A || !branch_ok(model, &pos, settings, branch) {
            return f64::INFINITY;
        }
        chi_square(model, &pos, obs, settings, sigma_model).unwrap_or(f64::INFINITY)
    };
    let m = nelder_mead(
        objective,
        &[start.r, start.theta_h, start.phi_h],
        &[0.5 * opts.grid_step_r, 0.5 * opts.grid_step_deg, 0.5 * opts.grid_step_deg],
        opts.nm_tol,
        opts.nm_max_iter,
    );
    let pos = Position { r: m.x[0], theta_h: m.x[1], phi_h: m.x[2] }.canonical();
    Ok((pos, m))
}

/// Grid scan, Nelder–Mead, then Monte Carlo σ_model at the optimum and a
/// second Nelder–Mead with those errors held fixed.
pub fn localize(
    model: &LocateModel,
    obs: &[Observation],
    settings: &[FieldSetting],
    branch: SignBranch,
    opts: &LocateOptions,
) -> Result<LocateFit> {
    let (start, _) = grid_search(model, obs, settings, branch, opts)?;
    let (mut pos, mut m) = refine(model, obs, settings, branch, start, None, opts)?;
    let mut sigma = vec![[0.0; 3]; settings.len()];
    let mut iterations = m.iterations;
    if opts.mc_samples > 0 {
        sigma = monte_carlo_sigma(model, &pos, settings, opts.mc_samples, opts.seed)?;
        let (p2, m2) = refine(model, obs, settings, branch, pos, Some(&sigma), opts)?;
        pos = p2;
        m = m2;
        iterations += m.iterations;
    }
    let dof = 3 * settings.len() as i64 - 3;
    let chi2 = m.f;
    let params = settings.iter().map(|s| model.params(&pos, s)).collect::<Result<Vec<_>>>()?;
    Ok(LocateFit {
        branch,
        position: pos,
        chi2_min: chi2,
        dof,
        reduced_chi2: if dof > 0 { chi2 / dof as f64 } else { f64::NAN },
        converged: m.converged,
        iterations,
        sigma_model: sigma,
        params,
    })
}

/// A∥/A⊥ of the model at a direction; independent of r and γ_N.
pub fn model_ratio(model: &LocateModel, theta_h: f64, phi_h: f64, field: &FieldSetting) -> Result<f64> {
    let p = model.params(&Position { r: 20.0, theta_h, phi_h }, field)?;
    Ok(p.a_par() / p.a_perp())
}

/// Observed A∥/A⊥ on a sign branch.
pub fn observed_ratio(obs: &Observation, branch: SignBranch) -> Result<f64> {
    let p = invert_observation(obs.values)?;
    let r = p.a_par() / p.a_perp();
    Ok(match branch {
        SignBranch::Positive => r,
        SignBranch::Negative => -r,
    })
}

/// Iso-contour A∥/A⊥ = `level` over (θ_H, φ_H) by marching squares.
/// Returns segments [(θ, φ), (θ, φ)] in degrees.
pub fn ratio_contour(model: &LocateModel, field: &FieldSetting, level: f64, step_deg: f64) -> Result<Vec<[(f64, f64); 2]>> {
    if !(step_deg > 0.0) {
        bail!(Argument, "contour step must be > 0");
    }
    let nt = (180.0 / step_deg) as usize + 1;
    let np = (360.0 / step_deg) as usize + 1;
    let mut vals = vec![0.0; nt * np];
    for i in 0..nt {
        for j in 0..np {
            // Avoid the poles, where A⊥ can vanish.
            let th = (i as f64 * step_deg).clamp(1e-6, 180.0 - 1e-6);
            vals[i * np + j] = model_ratio(model, th, j as f64 * step_deg, field)? - level;
        }
    }
    let at = |i: usize, j: usize| (i as f64 * step_deg, j as f64 * step_deg);
    let mut segs = Vec::new();
    for i in 0..nt - 1 {
        for j in 0..np - 1 {
            let corners = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)];
            let v: [f64; 4] = core::array::from_fn(|k| vals[corners[k].0 * np + corners[k].1]);
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let mut pts = Vec::new();
            for k in 0..4 {
                let (a, b) = (k, (k + 1) % 4);
                if (v[a] < 0.0) != (v[b] < 0.0) {
                    let t = v[a] / (v[a] - v[b]);
                    let (pa, pb) = (at(corners[a].0, corners[a].1), at(corners[b].0, corners[b].1));
                    pts.push((pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)));
                }
            }
            if pts.len() == 2 {
                segs.push([pts[0], pts[1]]);
            } else if pts.len() == 4 {
                segs.push([pts[0], pts[1]]);
                segs.push([pts[2], pts[3]]);
            }
        }
    }
    Ok(segs)
}

/// Per-setting |A∥/A⊥(model) − A∥/A⊥(observed)| at a position.
pub fn contour_residuals(
    model: &LocateModel,
    pos: &Position,
    obs: &[Observation],
    settings: &[FieldSetting],
    branch: SignBranch,
) -> Result<Vec<f64>> {
    check_lengths(obs, settings, None)?;
    obs.iter()
        .zip(settings)
        .map(|(o, s)| Ok(libm::fabs(model_ratio(model, pos.theta_h, pos.phi_h, s)? - observed_ratio(o, branch)?)))
        .collect()
}

/// Weighted least-squares slope of ω_L against |B| through the origin.
/// Inputs in Hz (ordinary frequency) and tesla; returns (γ, σ_γ) in Hz/T.
/// Without errors the scatter of the residuals sets σ (needs ≥ 2 points).
pub fn gyromagnetic_estimate(omega_l_hz: &[f64], b_tesla: &[f64], errors_hz: Option<&[f64]>) -> Result<(f64, f64)> {
    let n = omega_l_hz.len();
    if n < 2 || b_tesla.len() != n || errors_hz.is_some_and(|e| e.len() != n) {
        bail!(Argument, "need at least two matched (ω_L, B) points");
    }
    let w: Vec<f64> = match errors_hz {
        Some(e) => {
            if e.iter().any(|x| !(*x > 0.0)) {
                bail!(Argument, "errors must be > 0");
            }
            e.iter().map(|x| 1.0 / (x * x)).collect()
        }
        None => vec![1.0; n],
    };
    let sxx: f64 = (0..n).map(|i| w[i] * b_tesla[i] * b_tesla[i]).sum();
    if !(sxx > 0.0) {
        bail!(Domain, "all fields are zero");
    }
    let sxy: f64 = (0..n).map(|i| w[i] * b_tesla[i] * omega_l_hz[i]).sum();
    let slope = sxy / sxx;
    let sigma = if errors_hz.is_some() {
        libm::sqrt(1.0 / sxx)
    } else {
        let rss: f64 = (0..n).map(|i| (omega_l_hz[i] - slope * b_tesla[i]).powi(2)).sum();
        libm::sqrt(rss / (n - 1) as f64 / sxx)
    };
    Ok((slope, sigma))
}

/// Secular dipolar coupling between two nuclei,
/// A = ½ μ₀μ_N² g₁g₂ (1 − 3cos²θ) / (4πr³), in Hz.
pub fn dipolar_shift(r_angstrom: f64, theta_deg: f64, g1: f64, g2: f64) -> Result<f64> {
    if !(r_angstrom > 0.0) {
        bail!(Argument, "r must be > 0, got {r_angstrom}");
    }
    let r = r_angstrom * units::ANGSTROM;
    let c = libm::cos(units::rad(theta_deg));
    let e = 0.5 * units::MU0_OVER_4PI * units::MU_N * units::MU_N * g1 * g2 * (1.0 - 3.0 * c * c) / (r * r * r);
    Ok(e / units::H_PLANCK)
}

/// Magic angle arccos(1/√3) in degrees.
pub fn magic_angle_deg() -> f64 {
    units::deg(libm::acos(1.0 / libm::sqrt(3.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn site1_ground() -> GTensor {
        GTensor::new([[3.070, -3.124, 3.396], [-3.124, 8.156, -5.756], [3.396, -5.756, 5.787]], GLabel::Ground).unwrap()
    }

    fn b_along(d: Vec3) -> FieldSetting {
        let th = units::deg(libm::acos(d[2]));
        let ph = units::deg(libm::atan2(d[1], d[0]));
        FieldSetting::new(134.0, th, ph, FieldCorrection::NONE).unwrap()
    }

    #[test]
    fn isotropic_on_axis_is_axial() {
        let g = GTensor::isotropic(2.0);
        let pos = Position::new(20.0, 30.0, 40.0).unwrap();
        let f = b_along(pos.unit());
        let p = dipolar_hyperfine(&pos, &g, &f, units::GAMMA_H_HZ_PER_T).unwrap();
        assert!(p.a_perp() < 1e-9 * p.a_par().abs());
        // A∥ = −(μ₀/4π) μ_B μ_N g g_n (1 − 3) / (2 r³ ħ).
        let g_n = units::GAMMA_H_HZ_PER_T * units::H_PLANCK / units::MU_N;
        let r = 20e-10;
        let want = -units::MU0_OVER_4PI * units::MU_B * units::MU_N * 2.0 * g_n * (1.0 - 3.0) / (2.0 * r * r * r * units::HBAR);
        assert!((p.a_par() - want).abs() < 1e-9 * want.abs(), "{} vs {want}", p.a_par());
    }

    #[test]
    fn magnitude_scales_as_inverse_r6() {
        let g = site1_ground();
        let f = FieldSetting::reference_settings()[0];
        let mag = |r: f64| {
            let p = dipolar_hyperfine(&Position::new(r, 66.7, 49.6).unwrap(), &g, &f, units::GAMMA_H_HZ_PER_T).unwrap();
            p.a_par().powi(2) + p.a_perp().powi(2)
        };
        let (a, b, c) = (mag(10.0), mag(20.0), mag(40.0));
        assert!((a / b - 64.0).abs() < 1e-9 * 64.0 && (b / c - 64.0).abs() < 1e-9 * 64.0);
        assert!(matches!(
            dipolar_hyperfine(&Position::new(0.4, 0.0, 0.0).unwrap(), &g, &f, 1.0),
            Err(crate::Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn ratio_depends_on_direction_only(r in 5.0f64..40.0, k in 0.2f64..5.0, th in 5.0f64..175.0, ph in 0.0f64..360.0) {
            let g = site1_ground();
            let f = FieldSetting::reference_settings()[1];
            let p1 = dipolar_hyperfine(&Position::new(r, th, ph).unwrap(), &g, &f, units::GAMMA_H_HZ_PER_T).unwrap();
            let p2 = dipolar_hyperfine(&Position::new(r * k, th, ph).unwrap(), &g, &f, units::GAMMA_H_HZ_PER_T * 0.3).unwrap();
            let (r1, r2) = (p1.a_par() / p1.a_perp(), p2.a_par() / p2.a_perp());
            prop_assert!((r1 - r2).abs() <= 1e-9 * r1.abs().max(1.0));
        }

        #[test]
        fn inversion_roundtrip(a_par in -40.0f64..40.0, a_perp in 10.0f64..80.0, wl in 400.0f64..700.0) {
            let p = HyperfineParams::from_khz(a_par, a_perp, wl).unwrap();
            let q = invert_observation(observables(&p).unwrap()).unwrap();
            prop_assert!((q.a_par() - p.a_par().abs()).abs() < 1e-6 * p.omega_l());
            prop_assert!((q.a_perp() - p.a_perp()).abs() < 1e-6 * p.omega_l());
            prop_assert!((q.omega_l() - p.omega_l()).abs() < 1e-6 * p.omega_l());
        }
    }

    #[test]
    fn observables_are_sign_blind() {
        let p = HyperfineParams::reference();
        let q = p.with_a_par(-p.a_par()).unwrap();
        let (a, b) = (observables(&p).unwrap(), observables(&q).unwrap());
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-9 * a[k].abs());
        }
    }

    fn synthetic(model: &LocateModel, truth: &Position, settings: &[FieldSetting]) -> Vec<Observation> {
        settings
            .iter()
            .map(|s| {
                let x = model.observables(truth, s).unwrap();
                Observation::new(x, [units::khz_to_rad(0.1), units::khz_to_rad(0.1), units::rad(0.1)]).unwrap()
            })
            .collect()
    }

    #[test]
    fn chi_square_basics() {
        let model = LocateModel::hydrogen(site1_ground());
        let settings = FieldSetting::reference_settings();
        let truth = Position::new(20.0, 66.7, 49.6).unwrap();
        let obs = synthetic(&model, &truth, &settings);
        assert!(chi_square(&model, &truth, &obs, &settings, None).unwrap() < 1e-18);
        let off = Position::new(21.0, 60.0, 49.6).unwrap();
        let c0 = chi_square(&model, &off, &obs, &settings, None).unwrap();
        let mut tight = obs.clone();
        tight[0].errors[0] *= 0.5;
        assert!(chi_square(&model, &off, &tight, &settings, None).unwrap() > c0);
        let (mut o2, mut s2) = (obs.clone(), settings.clone());
        o2.reverse();
        s2.reverse();
        assert!((chi_square(&model, &off, &o2, &s2, None).unwrap() - c0).abs() < 1e-9 * c0);
    }

    #[test]
    fn monte_carlo_sigma_properties() {
        let model = LocateModel::hydrogen(site1_ground());
        let pos = Position::REFERENCE_POSITIVE;
        let mut none = FieldSetting::reference_settings();
        for s in &mut none {
            s.correction = FieldCorrection { db_gauss: 3.99, dtheta_deg: 0.89, dphi_deg: 0.79, ..FieldCorrection::NONE };
        }
        assert!(monte_carlo_sigma(&model, &pos, &none, 100, 1).unwrap().iter().flatten().all(|s| *s == 0.0));

        let base = FieldSetting::reference_settings();
        let mut small = base.clone();
        let mut double = base.clone();
        for (a, b) in small.iter_mut().zip(double.iter_mut()) {
            a.correction = a.correction.with_sigma_scale(0.2);
            b.correction = b.correction.with_sigma_scale(0.4);
        }
        let s1 = monte_carlo_sigma(&model, &pos, &small, 4000, 3).unwrap();
        let s2 = monte_carlo_sigma(&model, &pos, &double, 4000, 3).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            for k in 0..3 {
                let ratio = b[k] / a[k];
                assert!((1.7..=2.3).contains(&ratio), "{ratio}");
            }
        }
        assert_eq!(s1, monte_carlo_sigma(&model, &pos, &small, 4000, 3).unwrap());
    }

    #[test]
    fn inverse_crime_recovery() {
        let model = LocateModel::hydrogen(site1_ground());
        let settings = FieldSetting::reference_settings();
        let opts = LocateOptions {
            region: SearchRegion { r: (16.0, 24.0), theta: (40.0, 90.0), phi: (20.0, 80.0) },
            mc_samples: 0,
            nm_tol: 1e-10,
            ..LocateOptions::default()
        };
        let truth = Position::new(20.3, 62.4, 47.1).unwrap();
        let obs = synthetic(&model, &truth, &settings);
        let branch = if model.params(&truth, &settings[0]).unwrap().a_par() >= 0.0 { SignBranch::Positive } else { SignBranch::Negative };
        let fit = localize(&model, &obs, &settings, branch, &opts).unwrap();
        assert!((fit.position.r - truth.r).abs() < 0.1, "{:?}", fit.position);
        assert!(fit.position.angle_to(&truth) < 0.5, "{:?}", fit.position);
        let res = contour_residuals(&model, &fit.position, &obs, &settings, branch).unwrap();
        assert!(res.iter().all(|r| *r < 1e-3), "{res:?}");
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0], &[0.1, 0.1], 1e-12, 10_000);
        assert!(m.converged && (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn gyromagnetic_examples() {
        let b = [0.012, 0.013, 0.0134];
        let w: Vec<f64> = b.iter().map(|x| 42.0e6 * x).collect();
        let (g, s) = gyromagnetic_estimate(&w, &b, None).unwrap();
        assert!((g - 42.0e6).abs() < 1e-6 && s < 1e-6);
        assert!(gyromagnetic_estimate(&w[..1], &b[..1], None).is_err());
    }

    #[test]
    fn dipolar_shift_properties() {
        let m = magic_angle_deg();
        assert!(dipolar_shift(2.0, m, 5.0, 1.0).unwrap().abs() < 1e-9);
        let a = dipolar_shift(2.0, m - 5.0, 5.0, 1.0).unwrap();
        let b = dipolar_shift(2.0, m + 5.0, 5.0, 1.0).unwrap();
        assert!(a.signum() != b.signum());
        assert_eq!(dipolar_shift(2.0, 10.0, 5.0, -1.1).unwrap(), dipolar_shift(2.0, 10.0, -1.1, 5.0).unwrap());
    }

    #[test]
    fn contour_passes_through_truth() {
        let model = LocateModel::hydrogen(site1_ground());
        let s = FieldSetting::reference_settings()[0];
        let level = model_ratio(&model, 66.7, 49.6, &s).unwrap();
        let segs = ratio_contour(&model, &s, level, 2.0).unwrap();
        let d = segs
            .iter()
            .flat_map(|seg| seg.iter())
            .map(|(t, p)| libm::hypot(t - 66.7, p - 49.6))
            .fold(f64::INFINITY, f64::min);
        assert!(d < 3.0, "{d}");
    }
}
