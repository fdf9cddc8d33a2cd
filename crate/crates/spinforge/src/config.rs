// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration. Every physical quantity carries its unit in
//! the key name (`a_perp_khz`, `t2_us`, ...). Files are TOML unless the
//! extension is `.json`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinforge_core::channels::{LarmorEnsemble, OpticalParams, REFERENCE_DELTA_F_OVER_GAMMA};
use spinforge_core::environment::DarkSpinModel;
use spinforge_core::hyperfine::HyperfineParams;
use spinforge_core::units;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub hyperfine: HyperfineSection,
    pub spectrum: SpectrumSection,
    pub ramsey: RamseySection,
    pub echo: EchoSection,
    pub swap: SwapSection,
    pub optics: OpticsSection,
    pub dark: DarkSection,
    pub darkspins: DarkSpinsSection,
    pub locate: LocateSection,
    pub concentration: ConcentrationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperfineSection {
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
    pub omega_l_khz: f64,
}

impl Default for HyperfineSection {
    fn default() -> Self {
        Self { a_par_khz: 19.4, a_perp_khz: 50.5, omega_l_khz: 567.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub two_tau_start_us: f64,
    pub two_tau_stop_us: f64,
    pub points: usize,
    pub n_pulses: usize,
    pub t2_us: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { two_tau_start_us: 0.5, two_tau_stop_us: 3.0, points: 1001, n_pulses: 16, t2_us: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RamseyMode {
    S0,
    Sdelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseySection {
    pub mode: RamseyMode,
    pub tau_c_start_us: f64,
    pub tau_c_step_us: f64,
    pub points: usize,
    /// Exact propagators with resonant XY-8 gates instead of the closed form.
    pub exact: bool,
}

impl Default for RamseySection {
    fn default() -> Self {
        Self { mode: RamseyMode::S0, tau_c_start_us: 0.0, tau_c_step_us: 0.05, points: 2048, exact: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EchoKindName {
    Hahn,
    Cpmg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoSection {
    pub kind: EchoKindName,
    pub cpmg_pulses: usize,
    pub total_time_stop_ms: f64,
    pub points: usize,
    /// Hahn T₂ the OU noise is calibrated to.
    pub t2_hahn_ms: f64,
    pub ou_tau_c_ms: f64,
    pub trajectories: usize,
    pub dt_us: f64,
    /// Add the four static dark-spin shifts.
    pub dark_spins: bool,
}

impl Default for EchoSection {
    fn default() -> Self {
        Self {
            kind: EchoKindName::Hahn,
            cpmg_pulses: 2,
            total_time_stop_ms: 6.0,
            points: 121,
            t2_hahn_ms: 1.9,
            ou_tau_c_ms: 10.0,
            trajectories: 400,
            dt_us: 10.0,
            dark_spins: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpticsName {
    Ideal,
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleName {
    Single,
    DarkSpins,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapSection {
    /// Loop pattern of 0/1 characters.
    pub pattern: String,
    pub n_loops: usize,
    pub control: bool,
    /// Electron T₂ during the gate; omit for none.
    pub t2_us: Option<f64>,
    pub optics: OpticsName,
    pub ensemble: EnsembleName,
    pub ideal_swap: bool,
}

impl Default for SwapSection {
    fn default() -> Self {
        Self {
            pattern: "0011".into(),
            n_loops: 100,
            control: false,
            t2_us: Some(16.1),
            optics: OpticsName::Physical,
            ensemble: EnsembleName::DarkSpins,
            ideal_swap: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitedSource {
    /// A∥ lowered by 2π·(δ_f/γ)/T₁,op, A⊥ kept.
    DeltaF,
    /// Dipolar coupling computed with the excited-state g-tensor at the
    /// positive-branch position.
    GTensor,
    /// Explicit excited-state values.
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub t1_op_us: f64,
    pub t_window_us: f64,
    pub p_flip: f64,
    pub n_readout_pulses: usize,
    pub n_init_pulses: usize,
    pub excited: ExcitedSource,
    pub delta_f_over_gamma: f64,
    pub excited_a_par_khz: Option<f64>,
    pub excited_a_perp_khz: Option<f64>,
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            t1_op_us: 60.0,
            t_window_us: 120.0,
            p_flip: 0.002,
            n_readout_pulses: 450,
            n_init_pulses: 40,
            excited: ExcitedSource::DeltaF,
            delta_f_over_gamma: REFERENCE_DELTA_F_OVER_GAMMA,
            excited_a_par_khz: None,
            excited_a_perp_khz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkSection {
    pub a1_khz: f64,
    pub a2_khz: f64,
    pub t1_dark_1_s: f64,
    pub t1_dark_2_s: f64,
}

impl Default for DarkSection {
    fn default() -> Self {
        let d = DarkSpinModel::default();
        Self { a1_khz: d.a1 * 1e-3, a2_khz: d.a2 * 1e-3, t1_dark_1_s: d.t1_dark_1, t1_dark_2_s: d.t1_dark_2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DarkTask {
    Branches,
    ReadoutPoints,
    Jumps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkSpinsSection {
    pub task: DarkTask,
    pub tau_c_start_us: f64,
    pub tau_c_step_us: f64,
    pub points: usize,
    pub exact: bool,
    pub n_pulses: usize,
    /// Readout time for jump traces; defaults to the first d₁ readout time.
    pub readout_time_us: Option<f64>,
    pub n_samples: usize,
    pub sample_period_s: f64,
    /// Target single-shot fidelity used to set the readout noise.
    pub readout_fidelity: f64,
}

impl Default for DarkSpinsSection {
    fn default() -> Self {
        Self {
            task: DarkTask::Branches,
            tau_c_start_us: 0.0,
            tau_c_step_us: 0.05,
            points: 2048,
            exact: false,
            n_pulses: 8,
            readout_time_us: None,
            // 12 h at 29 s per point.
            n_samples: 1490,
            sample_period_s: 29.0,
            readout_fidelity: 0.98,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SignChoice {
    Positive,
    Negative,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocateSection {
    /// Defaults to the shipped site-1 file.
    pub g_tensor_file: Option<PathBuf>,
    /// Defaults to the shipped observation file.
    pub observations_file: Option<PathBuf>,
    pub sign: SignChoice,
    pub mc_samples: usize,
    pub r_min_angstrom: f64,
    pub r_max_angstrom: f64,
    pub grid_step_angstrom: f64,
    pub grid_step_deg: f64,
}

impl Default for LocateSection {
    fn default() -> Self {
        Self {
            g_tensor_file: None,
            observations_file: None,
            sign: SignChoice::Both,
            mc_samples: 10_000,
            r_min_angstrom: 10.0,
            r_max_angstrom: 30.0,
            grid_step_angstrom: 2.0,
            grid_step_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSection {
    pub n_obs: u32,
    pub m_trials: u32,
    pub r_obs_nm: f64,
}

impl Default for ConcentrationSection {
    fn default() -> Self {
        Self { n_obs: 1, m_trials: 6, r_obs_nm: 3.0 }
    }
}

fn path_error(path: String, msg: String) -> CliError {
    CliError::config(if path.is_empty() || path == "." { "<root>".to_string() } else { path }, msg)
}

impl ExperimentConfig {
    /// Parse TOML or JSON text; errors name the offending key path.
    pub fn from_str_format(text: &str, json: bool) -> Result<Self> {
        let cfg: Self = if json {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| path_error(e.path().to_string(), e.inner().to_string()))?
        } else {
            let de = toml::Deserializer::new(text);
            serde_path_to_error::deserialize(de).map_err(|e| path_error(e.path().to_string(), e.inner().message().to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_format(&text, json)
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        fn pos(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(key, format!("must be a positive number, got {v}")))
            }
        }
        fn nonzero(key: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(CliError::config(key, "must be >= 1"))
            }
        }
        let h = &self.hyperfine;
        if !h.a_par_khz.is_finite() {
            return Err(CliError::config("hyperfine.a_par_khz", "must be finite"));
        }
        if !(h.a_perp_khz >= 0.0 && h.a_perp_khz.is_finite()) {
            return Err(CliError::config("hyperfine.a_perp_khz", "must be >= 0"));
        }
        pos("hyperfine.omega_l_khz", h.omega_l_khz)?;
        let s = &self.spectrum;
        pos("spectrum.two_tau_start_us", s.two_tau_start_us)?;
        if !(s.two_tau_stop_us > s.two_tau_start_us) {
            return Err(CliError::config("spectrum.two_tau_stop_us", "must exceed two_tau_start_us"));
        }
        nonzero("spectrum.points", s.points)?;
        nonzero("spectrum.n_pulses", s.n_pulses)?;
        if let Some(t) = s.t2_us {
            pos("spectrum.t2_us", t)?;
        }
        let r = &self.ramsey;
        if !(r.tau_c_start_us >= 0.0) {
            return Err(CliError::config("ramsey.tau_c_start_us", "must be >= 0"));
        }
        pos("ramsey.tau_c_step_us", r.tau_c_step_us)?;
        if r.points < 8 {
            return Err(CliError::config("ramsey.points", "need at least 8 points"));
        }
        let e = &self.echo;
        pos("echo.total_time_stop_ms", e.total_time_stop_ms)?;
        nonzero("echo.points", e.points)?;
        nonzero("echo.cpmg_pulses", e.cpmg_pulses)?;
        pos("echo.t2_hahn_ms", e.t2_hahn_ms)?;
        pos("echo.ou_tau_c_ms", e.ou_tau_c_ms)?;
        nonzero("echo.trajectories", e.trajectories)?;
        pos("echo.dt_us", e.dt_us)?;
        let w = &self.swap;
        if w.pattern.is_empty() || !w.pattern.chars().all(|c| c == '0' || c == '1') {
            return Err(CliError::config("swap.pattern", "must be a non-empty string of 0 and 1"));
        }
        nonzero("swap.n_loops", w.n_loops)?;
        if let Some(t) = w.t2_us {
            pos("swap.t2_us", t)?;
        }
        let o = &self.optics;
        pos("optics.t1_op_us", o.t1_op_us)?;
        pos("optics.t_window_us", o.t_window_us)?;
        if !(0.0..=1.0).contains(&o.p_flip) {
            return Err(CliError::config("optics.p_flip", "must lie in [0, 1]"));
        }
        nonzero("optics.n_readout_pulses", o.n_readout_pulses)?;
        nonzero("optics.n_init_pulses", o.n_init_pulses)?;
        if !(o.delta_f_over_gamma >= 0.0) {
            return Err(CliError::config("optics.delta_f_over_gamma", "must be >= 0"));
        }
        if o.excited == ExcitedSource::Manual && o.excited_a_par_khz.is_none() {
            return Err(CliError::config("optics.excited_a_par_khz", "required when excited = \"manual\""));
        }
        let d = &self.dark;
        if !(d.a1_khz >= 0.0 && d.a2_khz >= 0.0) {
            return Err(CliError::config("dark.a1_khz", "couplings must be >= 0"));
        }
        pos("dark.t1_dark_1_s", d.t1_dark_1_s)?;
        pos("dark.t1_dark_2_s", d.t1_dark_2_s)?;
        let k = &self.darkspins;
        pos("darkspins.tau_c_step_us", k.tau_c_step_us)?;
        nonzero("darkspins.points", k.points)?;
        nonzero("darkspins.n_pulses", k.n_pulses)?;
        nonzero("darkspins.n_samples", k.n_samples)?;
        pos("darkspins.sample_period_s", k.sample_period_s)?;
        if !(0.5 < k.readout_fidelity && k.readout_fidelity < 1.0) {
            return Err(CliError::config("darkspins.readout_fidelity", "must lie in (0.5, 1)"));
        }
        if let Some(t) = k.readout_time_us {
            pos("darkspins.readout_time_us", t)?;
        }
        let l = &self.locate;
        pos("locate.r_min_angstrom", l.r_min_angstrom)?;
        if !(l.r_max_angstrom > l.r_min_angstrom) {
            return Err(CliError::config("locate.r_max_angstrom", "must exceed r_min_angstrom"));
        }
        pos("locate.grid_step_angstrom", l.grid_step_angstrom)?;
        pos("locate.grid_step_deg", l.grid_step_deg)?;
        let c = &self.concentration;
        if c.n_obs > c.m_trials {
            return Err(CliError::config("concentration.n_obs", "must not exceed m_trials"));
        }
        pos("concentration.r_obs_nm", c.r_obs_nm)?;
        Ok(())
    }

    pub fn hyperfine_params(&self) -> Result<HyperfineParams> {
        let h = &self.hyperfine;
        Ok(HyperfineParams::from_khz(h.a_par_khz, h.a_perp_khz, h.omega_l_khz)?)
    }

    pub fn dark_model(&self) -> Result<DarkSpinModel> {
        let d = &self.dark;
        Ok(DarkSpinModel::new(d.a1_khz * 1e3, d.a2_khz * 1e3, d.t1_dark_1_s, d.t1_dark_2_s)?)
    }

    pub fn ensemble(&self) -> LarmorEnsemble {
        match self.swap.ensemble {
            EnsembleName::Single => LarmorEnsemble::single(),
            EnsembleName::DarkSpins => LarmorEnsemble::dark_spins(self.dark.a1_khz * 1e3, self.dark.a2_khz * 1e3),
        }
    }

    /// Optical parameters; `excited_from_g` supplies the excited coupling
    /// when the source is the g-tensor.
    pub fn optical_params(&self, ground: &HyperfineParams, excited_from_g: Option<HyperfineParams>) -> Result<OpticalParams> {
        let o = &self.optics;
        let t1_op = o.t1_op_us * 1e-6;
        let excited = match o.excited {
            ExcitedSource::DeltaF => ground.with_a_par(ground.a_par() - units::TWO_PI * o.delta_f_over_gamma / t1_op)?,
            ExcitedSource::GTensor => excited_from_g.ok_or_else(|| CliError::config("optics.excited", "g-tensor source needs a g-tensor file"))?,
            ExcitedSource::Manual => HyperfineParams::from_khz(
                o.excited_a_par_khz.unwrap_or(0.0),
                o.excited_a_perp_khz.unwrap_or(units::rad_to_khz(ground.a_perp())),
                units::rad_to_khz(ground.omega_l()),
            )?,
        };
        let p = OpticalParams {
            t1_op,
            t_window: o.t_window_us * 1e-6,
            p_flip: o.p_flip,
            n_readout_pulses: o.n_readout_pulses,
            n_init_pulses: o.n_init_pulses,
            excited_hyperfine: excited,
        };
        p.validate()?;
        Ok(p)
    }
}
