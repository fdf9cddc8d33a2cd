// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Each writes its data table in the chosen
//! format plus a `<name>_summary.json`, and returns the summary text.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use spinforge_core::channels::{swap_channel, swap_experiment, swap_fidelity_computational, swap_unitary, OpticsModel, SwapExperimentConfig};
use spinforge_core::environment::{
    concentration_posterior, estimate_lifetime, four_body_ramsey, jump_trace, noise_for_fidelity, readout_points, threshold_fidelity,
    JumpTraceConfig, DARK_STATES,
};
use spinforge_core::hyperfine::{refine_resonance, resonant_tau, HyperfineParams};
use spinforge_core::locate::{localize, FieldSetting, LocateFit, LocateModel, LocateOptions, Position, SearchRegion, SignBranch};
use spinforge_core::sequences::{
    crossing_time, nuclear_echo, ramsey_trace, uniform_grid, xy_spectrum, EchoKind, EchoNoise, GateRealization, OuNoise, RamseyKind,
    SignalModel,
};
use spinforge_core::units;

use crate::config::{DarkTask, EchoKindName, ExcitedSource, ExperimentConfig, OpticsName, RamseyMode, SignChoice};
use crate::data::{GTensorFile, ObservationFile};
use crate::error::{CliError, Result};
use crate::output::{write_summary, write_table, Format, Metadata, Table};
use crate::spectrum::fft_spectrum;

/// Where and how to write.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub out: PathBuf,
    pub format: Format,
}

#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn finish<T: Serialize>(ctx: &RunContext, name: &str, meta: &Metadata, mut files: Vec<PathBuf>, body: &T) -> Result<CommandOutput> {
    let (path, summary) = write_summary(&ctx.out, &format!("{name}_summary"), meta, body)?;
    files.push(path);
    Ok(CommandOutput { files, summary })
}

fn khz(w: f64) -> f64 {
    units::rad_to_khz(w)
}

#[derive(Serialize)]
struct ParamsKhz {
    a_par_khz: f64,
    a_perp_khz: f64,
    omega_l_khz: f64,
    omega0_khz: f64,
    omega_delta_khz: f64,
}

impl From<&HyperfineParams> for ParamsKhz {
    fn from(p: &HyperfineParams) -> Self {
        Self {
            a_par_khz: khz(p.a_par()),
            a_perp_khz: khz(p.a_perp()),
            omega_l_khz: khz(p.omega_l()),
            omega0_khz: khz(p.omega0()),
            omega_delta_khz: khz(p.omega_delta()),
        }
    }
}

/// Split `grid` into chunks evaluated in parallel, concatenated in order.
fn par_chunks<F>(grid: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let chunk = grid.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(16);
    let parts: Vec<Result<Vec<f64>>> = grid.par_chunks(chunk).map(&f).collect();
    let mut out = Vec::with_capacity(grid.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SpectrumSummary {
    params: ParamsKhz,
    n_pulses: usize,
    resonance_two_tau_us: f64,
    minimum_two_tau_us: f64,
    minimum_population: f64,
}

/// XY-N population versus pulse spacing 2τ.
pub fn spectrum(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("spectrum", cfg)?;
    let p = cfg.hyperfine_params()?;
    let s = &cfg.spectrum;
    let step = if s.points > 1 { (s.two_tau_stop_us - s.two_tau_start_us) / (s.points - 1) as f64 } else { 0.0 };
    let grid = uniform_grid(s.two_tau_start_us * 1e-6, step * 1e-6, s.points);
    let t2 = s.t2_us.map(|t| t * 1e-6);
    let values = par_chunks(&grid, |g| Ok(xy_spectrum(&p, g, s.n_pulses, t2)?.values))?;
    let us: Vec<f64> = grid.iter().map(|t| t * 1e6).collect();
    let table = Table::from_columns(&["two_tau_us", "population"], &[&us, &values])?;
    let file = write_table(&ctx.out, "spectrum", ctx.format, &meta, &table)?;
    let imin = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let body = SpectrumSummary {
        params: (&p).into(),
        n_pulses: s.n_pulses,
        resonance_two_tau_us: refine_resonance(&p, 0)? * 1e6,
        minimum_two_tau_us: us[imin],
        minimum_population: values[imin],
    };
    finish(ctx, "spectrum", &meta, vec![file], &body)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RamseySummary {
    params: ParamsKhz,
    mode: RamseyMode,
    exact: bool,
    fft_peak_khz: f64,
    expected_peak_khz: f64,
    native_bin_khz: f64,
}

/// s₀ or s_δ versus τ_c, plus its magnitude spectrum.
pub fn ramsey(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("ramsey", cfg)?;
    let p = cfg.hyperfine_params()?;
    let r = &cfg.ramsey;
    let grid = uniform_grid(r.tau_c_start_us * 1e-6, r.tau_c_step_us * 1e-6, r.points);
    let kind = match r.mode {
        RamseyMode::S0 => RamseyKind::S0,
        RamseyMode::Sdelta => RamseyKind::SDelta,
    };
    let model = if r.exact {
        SignalModel::Exact { gates: GateRealization::resonant(&p)?, dephasing_t2: None }
    } else {
        SignalModel::ClosedForm
    };
    let values = par_chunks(&grid, |g| Ok(ramsey_trace(&p, g, kind, model)?.values))?;
    let us: Vec<f64> = grid.iter().map(|t| t * 1e6).collect();
    let stem = match r.mode {
        RamseyMode::S0 => "ramsey_s0",
        RamseyMode::Sdelta => "ramsey_sdelta",
    };
    let f1 = write_table(&ctx.out, stem, ctx.format, &meta, &Table::from_columns(&["tau_c_us", "signal"], &[&us, &values])?)?;
    let spec = fft_spectrum(&grid, &values)?;
    let fk: Vec<f64> = spec.freqs_hz.iter().map(|f| f * 1e-3).collect();
    let f2 = write_table(&ctx.out, &format!("{stem}_fft"), ctx.format, &meta, &Table::from_columns(&["freq_khz", "magnitude"], &[&fk, &spec.magnitude])?)?;
    let expected = match r.mode {
        RamseyMode::S0 => khz(p.omega0()),
        RamseyMode::Sdelta => khz(p.omega_delta().abs()),
    };
    let body = RamseySummary {
        params: (&p).into(),
        mode: r.mode,
        exact: r.exact,
        fft_peak_khz: spec.peak_hz() * 1e-3,
        expected_peak_khz: expected,
        native_bin_khz: spec.native_bin_hz * 1e-3,
    };
    finish(ctx, stem, &meta, vec![f1, f2], &body)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EchoSummary {
    kind: EchoKindName,
    cpmg_pulses: Option<usize>,
    t2_hahn_ms: f64,
    ou_sigma_khz: f64,
    ou_tau_c_ms: f64,
    /// Time where the amplitude crosses ½(1 + 1/e).
    t_1_over_e_ms: Option<f64>,
}

/// Nuclear Hahn or CPMG echo under OU frequency noise.
pub fn echo(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("echo", cfg)?;
    let p = cfg.hyperfine_params()?;
    let e = &cfg.echo;
    let kind = match e.kind {
        EchoKindName::Hahn => EchoKind::Hahn,
        EchoKindName::Cpmg => EchoKind::Cpmg(e.cpmg_pulses),
    };
    let ou = OuNoise::calibrated(e.t2_hahn_ms * 1e-3, e.ou_tau_c_ms * 1e-3)?;
    let static_shifts = if e.dark_spins {
        let d = cfg.dark_model()?;
        DARK_STATES.iter().map(|&s| Ok((d.shift(s)?, 0.25))).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let noise = EchoNoise { ou: Some(ou), static_shifts, n_trajectories: e.trajectories, dt: e.dt_us * 1e-6, seed: cfg.seed };
    let step = e.total_time_stop_ms * 1e-3 / e.points as f64;
    let grid = uniform_grid(0.0, step, e.points + 1);
    let trace = nuclear_echo(&p, kind, &grid, &noise)?;
    let ms: Vec<f64> = grid.iter().map(|t| t * 1e3).collect();
    let file = write_table(&ctx.out, "echo", ctx.format, &meta, &Table::from_columns(&["total_time_ms", "amplitude"], &[&ms, &trace.values])?)?;
    let level = 0.5 * (1.0 + (-1.0f64).exp());
    let body = EchoSummary {
        kind: e.kind,
        cpmg_pulses: matches!(e.kind, EchoKindName::Cpmg).then_some(e.cpmg_pulses),
        t2_hahn_ms: e.t2_hahn_ms,
        ou_sigma_khz: khz(ou.sigma),
        ou_tau_c_ms: e.ou_tau_c_ms,
        t_1_over_e_ms: crossing_time(&trace, level).map(|t| t * 1e3),
    };
    finish(ctx, "echo", &meta, vec![file], &body)
}

// ---------------------------------------------------------------------------

/// Excited-state coupling from the excited g-tensor at `pos` and `field`,
/// keeping the ground-state nuclear Larmor frequency.
pub fn excited_hyperfine_from_g(ground: &HyperfineParams, gfile: &GTensorFile, pos: &Position, field: &FieldSetting) -> Result<HyperfineParams> {
    let g = gfile.excited()?.ok_or_else(|| CliError::Data { file: "g-tensor".into(), message: "no excited-state tensor".into() })?;
    let a = LocateModel::hydrogen(g).params(pos, field)?;
    Ok(HyperfineParams::new(a.a_par(), a.a_perp(), ground.omega_l())?)
}

#[derive(Serialize)]
struct SwapSummary {
    params: ParamsKhz,
    pattern: String,
    n_loops: usize,
    control: bool,
    alpha_deg: f64,
    alpha_warning: bool,
    swap_fidelity: f64,
    retrieval_fidelity: f64,
    excited: Option<ParamsKhz>,
    counts_same: [[u64; 2]; 2],
    counts_next: [[u64; 2]; 2],
}

/// Resolve the optics model from the configuration.
pub fn optics_model(cfg: &ExperimentConfig, p: &HyperfineParams) -> Result<OpticsModel> {
    Ok(match cfg.swap.optics {
        OpticsName::Ideal => OpticsModel::Ideal,
        OpticsName::Physical => {
            let from_g = if cfg.optics.excited == ExcitedSource::GTensor {
                let gfile = GTensorFile::load(cfg.locate.g_tensor_file.as_deref())?;
                let obs = ObservationFile::load(cfg.locate.observations_file.as_deref())?;
                let field = obs.settings()?.into_iter().next().ok_or_else(|| CliError::Data { file: "observations".into(), message: "no settings".into() })?;
                Some(excited_hyperfine_from_g(p, &gfile, &Position::REFERENCE_POSITIVE, &field)?)
            } else {
                None
            };
            OpticsModel::Physical(cfg.optical_params(p, from_g)?)
        }
    })
}

/// Init → SWAP → readout loop histogram and gate fidelity.
pub fn swap(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("swap", cfg)?;
    let p = cfg.hyperfine_params()?;
    let s = &cfg.swap;
    let ens = cfg.ensemble();
    let t2 = s.t2_us.map(|t| t * 1e-6);
    let optics = optics_model(cfg, &p)?;
    let excited = match &optics {
        OpticsModel::Physical(o) => Some((&o.excited_hyperfine).into()),
        OpticsModel::Ideal => None,
    };
    let gate = swap_unitary(&p)?;
    let ecfg = SwapExperimentConfig {
        pattern: s.pattern.bytes().map(|b| b - b'0').collect(),
        n_loops: s.n_loops,
        control: s.control,
        dephasing_t2: t2,
        optics,
        ideal_swap: s.ideal_swap,
        seed: cfg.seed,
    };
    let (hist, fid) = rayon::join(|| swap_experiment(&p, &ens, &ecfg), || swap_channel(&p, &ens, t2).and_then(|c| swap_fidelity_computational(&c)));
    let (hist, fid) = (hist?, fid?);
    let mut table = Table::new(&["i", "count_m_same_0", "count_m_same_1", "count_m_next_0", "count_m_next_1", "p_m_same_0", "p_m_same_1", "p_m_next_0", "p_m_next_1"]);
    for i in 0..2 {
        table.push(vec![
            i as f64,
            hist.counts_same[i][0] as f64,
            hist.counts_same[i][1] as f64,
            hist.counts_next[i][0] as f64,
            hist.counts_next[i][1] as f64,
            hist.prob_same[i][0],
            hist.prob_same[i][1],
            hist.prob_next[i][0],
            hist.prob_next[i][1],
        ]);
    }
    let file = write_table(&ctx.out, "swap_histogram", ctx.format, &meta, &table)?;
    let body = SwapSummary {
        params: (&p).into(),
        pattern: s.pattern.clone(),
        n_loops: s.n_loops,
        control: s.control,
        alpha_deg: gate.alpha.to_degrees(),
        alpha_warning: gate.alpha_warning,
        swap_fidelity: fid,
        retrieval_fidelity: hist.fidelity,
        excited,
        counts_same: hist.counts_same,
        counts_next: hist.counts_next,
    };
    finish(ctx, "swap", &meta, vec![file], &body)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitReport {
    branch: &'static str,
    r_angstrom: f64,
    theta_deg: f64,
    phi_deg: f64,
    chi2: f64,
    dof: i64,
    reduced_chi2: Option<f64>,
    converged: bool,
    iterations: usize,
    params: Vec<ParamsKhz>,
}

impl From<&LocateFit> for FitReport {
    fn from(f: &LocateFit) -> Self {
        Self {
            branch: match f.branch {
                SignBranch::Positive => "positive",
                SignBranch::Negative => "negative",
            },
            r_angstrom: f.position.r,
            theta_deg: f.position.theta_h,
            phi_deg: f.position.phi_h,
            chi2: f.chi2_min,
            dof: f.dof,
            reduced_chi2: f.reduced_chi2.is_finite().then_some(f.reduced_chi2),
            converged: f.converged,
            iterations: f.iterations,
            params: f.params.iter().map(Into::into).collect(),
        }
    }
}

#[derive(Serialize)]
struct LocateSummary {
    measured_settings: usize,
    total_settings: usize,
    mc_samples: usize,
    fits: Vec<FitReport>,
}

/// χ² localization on one or both sign branches.
pub fn locate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("locate", cfg)?;
    let l = &cfg.locate;
    let g = GTensorFile::load(l.g_tensor_file.as_deref())?;
    let obs_file = ObservationFile::load(l.observations_file.as_deref())?;
    let (settings, obs) = obs_file.measured()?;
    let model = LocateModel::hydrogen(g.ground()?);
    let opts = LocateOptions {
        region: SearchRegion { r: (l.r_min_angstrom, l.r_max_angstrom), ..SearchRegion::default() },
        grid_step_r: l.grid_step_angstrom,
        grid_step_deg: l.grid_step_deg,
        mc_samples: l.mc_samples,
        seed: cfg.seed,
        ..LocateOptions::default()
    };
    let branches: Vec<SignBranch> = match l.sign {
        SignChoice::Positive => vec![SignBranch::Positive],
        SignChoice::Negative => vec![SignBranch::Negative],
        SignChoice::Both => vec![SignBranch::Positive, SignBranch::Negative],
    };
    let fits: Vec<Result<LocateFit>> = branches.par_iter().map(|&b| Ok(localize(&model, &obs, &settings, b, &opts)?)).collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&[
        "branch",
        "theta_b_deg",
        "phi_b_deg",
        "model_omega0_khz",
        "model_omega_delta_khz",
        "model_alpha_deg",
        "obs_omega0_khz",
        "obs_omega_delta_khz",
        "obs_alpha_deg",
    ]);
    for f in &fits {
        for (i, s) in settings.iter().enumerate() {
            let m = model.observables(&f.position, s)?;
            table.push(vec![
                if f.branch == SignBranch::Positive { 1.0 } else { -1.0 },
                s.theta_deg,
                s.phi_deg,
                khz(m[0]),
                khz(m[1]),
                m[2].to_degrees(),
                khz(obs[i].values[0]),
                khz(obs[i].values[1]),
                obs[i].values[2].to_degrees(),
            ]);
        }
    }
    let file = write_table(&ctx.out, "locate", ctx.format, &meta, &table)?;
    let body = LocateSummary {
        measured_settings: settings.len(),
        total_settings: obs_file.settings.len(),
        mc_samples: l.mc_samples,
        fits: fits.iter().map(Into::into).collect(),
    };
    finish(ctx, "locate", &meta, vec![file], &body)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BranchSummary {
    shifts_khz: Vec<((i8, i8), f64)>,
}

#[derive(Serialize)]
struct ReadoutSummary {
    tau0_us: f64,
    d2_insensitive_time_us: f64,
    d1_readout_times_us: (f64, f64),
    d2_readout_time_us: f64,
    phi1_at_d1_times_pi: (f64, f64),
    phi2_at_d2_time_pi: f64,
}

#[derive(Serialize)]
struct JumpSummary {
    readout_time_us: f64,
    noise_sigma: f64,
    n_samples: usize,
    sample_period_s: f64,
    t1_true_min: f64,
    t1_estimate_min: f64,
    ci95_min: (f64, f64),
    n_jumps: usize,
    n_dwells: usize,
    low_confidence: bool,
    threshold: f64,
    threshold_fidelity: f64,
}

/// Dark-spin branch traces, readout-point search or jump-trace synthesis.
pub fn darkspins(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("darkspins", cfg)?;
    let p = cfg.hyperfine_params()?;
    let dark = cfg.dark_model()?;
    let k = &cfg.darkspins;
    let tau0 = resonant_tau(&p)?;
    match k.task {
        DarkTask::Branches => {
            let grid = uniform_grid(k.tau_c_start_us * 1e-6, k.tau_c_step_us * 1e-6, k.points);
            let model = if k.exact {
                SignalModel::Exact { gates: GateRealization::Decoupled { tau: tau0 }, dephasing_t2: None }
            } else {
                SignalModel::ClosedForm
            };
            let traces: Vec<Result<Vec<f64>>> =
                DARK_STATES.par_iter().map(|&d| Ok(four_body_ramsey(&p, &dark, d, &grid, model)?.values)).collect();
            let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
            let mean: Vec<f64> = (0..grid.len()).map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / 4.0).collect();
            let us: Vec<f64> = grid.iter().map(|t| t * 1e6).collect();
            let table = Table::from_columns(
                &["tau_c_us", "s_d1p_d2p", "s_d1m_d2p", "s_d1p_d2m", "s_d1m_d2m", "mean"],
                &[&us, &traces[0], &traces[1], &traces[2], &traces[3], &mean],
            )?;
            let file = write_table(&ctx.out, "darkspins_branches", ctx.format, &meta, &table)?;
            let body = BranchSummary { shifts_khz: DARK_STATES.iter().map(|&d| Ok((d, khz(dark.shift(d)?)))).collect::<Result<_>>()? };
            finish(ctx, "darkspins_branches", &meta, vec![file], &body)
        }
        DarkTask::ReadoutPoints => {
            let r = readout_points(&p, &dark, tau0, k.n_pulses)?;
            let pi = std::f64::consts::PI;
            let n = k.n_pulses;
            let body = ReadoutSummary {
                tau0_us: tau0 * 1e6,
                d2_insensitive_time_us: r.d2_insensitive_time * 1e6,
                d1_readout_times_us: (r.d1_readout_times.0 * 1e6, r.d1_readout_times.1 * 1e6),
                d2_readout_time_us: r.d2_readout_time * 1e6,
                phi1_at_d1_times_pi: (dark.phase(1, r.d1_readout_times.0, tau0, n)? / pi, dark.phase(1, r.d1_readout_times.1, tau0, n)? / pi),
                phi2_at_d2_time_pi: dark.phase(2, r.d2_readout_time, tau0, n)? / pi,
            };
            let mut table = Table::new(&["d2_insensitive_time_us", "d1_readout_time_1_us", "d1_readout_time_2_us", "d2_readout_time_us"]);
            table.push(vec![body.d2_insensitive_time_us, body.d1_readout_times_us.0, body.d1_readout_times_us.1, body.d2_readout_time_us]);
            let file = write_table(&ctx.out, "darkspins_readout_points", ctx.format, &meta, &table)?;
            finish(ctx, "darkspins_readout_points", &meta, vec![file], &body)
        }
        DarkTask::Jumps => {
            let readout = match k.readout_time_us {
                Some(t) => t * 1e-6,
                None => readout_points(&p, &dark, tau0, k.n_pulses)?.d1_readout_times.0,
            };
            let sigma = noise_for_fidelity(&p, &dark, readout, k.readout_fidelity)?;
            let jcfg = JumpTraceConfig { readout_time: readout, n_samples: k.n_samples, sample_period: k.sample_period_s, readout_noise_sigma: sigma, seed: cfg.seed };
            let tr = jump_trace(&p, &dark, &jcfg)?;
            let est = estimate_lifetime(&tr, None)?;
            let d1: Vec<f64> = tr.hidden_states.iter().map(|d| f64::from(d.0)).collect();
            let d2: Vec<f64> = tr.hidden_states.iter().map(|d| f64::from(d.1)).collect();
            let table = Table::from_columns(&["time_s", "population", "hidden_d1", "hidden_d2"], &[&tr.sample_times, &tr.populations, &d1, &d2])?;
            let file = write_table(&ctx.out, "darkspins_jumps", ctx.format, &meta, &table)?;
            let body = JumpSummary {
                readout_time_us: readout * 1e6,
                noise_sigma: sigma,
                n_samples: k.n_samples,
                sample_period_s: k.sample_period_s,
                t1_true_min: dark.t1_dark_1 / 60.0,
                t1_estimate_min: est.t1 / 60.0,
                ci95_min: (est.ci.0 / 60.0, est.ci.1 / 60.0),
                n_jumps: est.n_jumps,
                n_dwells: est.n_dwells,
                low_confidence: est.low_confidence,
                threshold: est.threshold,
                threshold_fidelity: threshold_fidelity(&tr, est.threshold),
            };
            finish(ctx, "darkspins_jumps", &meta, vec![file], &body)
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConcentrationSummary {
    n_obs: u32,
    m_trials: u32,
    r_obs_m: f64,
    v_obs_cm3: f64,
    mode: f64,
    ci68: (f64, f64),
    hpd68: (f64, f64),
}

/// Hydrogen-concentration posterior.
pub fn concentration(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CommandOutput> {
    let meta = Metadata::new("concentration", cfg)?;
    let c = &cfg.concentration;
    let r = c.r_obs_nm * 1e-9;
    let post = concentration_posterior(c.n_obs, c.m_trials, r)?;
    let table = Table::from_columns(&["rho_cm3", "density", "cdf"], &[&post.grid, &post.density, &post.cdf])?;
    let file = write_table(&ctx.out, "concentration", ctx.format, &meta, &table)?;
    let body = ConcentrationSummary {
        n_obs: c.n_obs,
        m_trials: c.m_trials,
        r_obs_m: r,
        v_obs_cm3: post.v_obs_cm3,
        mode: post.mode,
        ci68: post.ci68,
        hpd68: post.hpd68,
    };
    finish(ctx, "concentration", &meta, vec![file], &body)
}
