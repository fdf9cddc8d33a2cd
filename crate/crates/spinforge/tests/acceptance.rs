// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion. Criteria that
//! the model cannot reach print FAIL without failing the test; everything
//! else must pass.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinforge::data::{GTensorFile, ObservationFile};
use spinforge::spectrum::fft_spectrum;
use spinforge_core::channels::{
    coherence_factor, dephasing_purity, electron_z_measurement, excitation_channel, free_evolution_channel, ideal_swap_unitary,
    optical_pulse_channel, pipeline_channel, swap_channel, swap_experiment, swap_fidelity_computational, t1_bound, ExcitationBranch,
    ExcitationModel, LarmorEnsemble, OpticalParams, OpticsModel, QuantumChannel, SwapExperimentConfig,
};
use spinforge_core::environment::{
    branch_phase, concentration_posterior, estimate_lifetime, jump_trace, noise_for_fidelity, readout_points, reference_tau0, DarkSpinModel,
    IntervalKind, JumpTraceConfig,
};
use spinforge_core::hyperfine::{dd_block, resonance_times, resonant_tau, xyn_propagator, HyperfineParams};
use spinforge_core::locate::{
    dipolar_shift, localize, monte_carlo_sigma, FieldSetting, LocateModel, LocateOptions, Observation, Position,
    SearchRegion, SignBranch,
};
use spinforge_core::qmat::{compose_axis_angle, eigh, expm_hermitian, normalize, pauli, AxisAngle, CMatrix, DensityMatrix, C64};
use spinforge_core::sequences::{crossing_time, nuclear_echo, ramsey_s0, ramsey_sdelta, uniform_grid, EchoKind, EchoNoise, OuNoise};
use spinforge_core::units::{self, g_nuclear};

struct Outcome {
    pass: bool,
    /// Part of an unreachable criterion that must still hold.
    enforced: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, enforced: pass, detail }
}

struct Line {
    id: &'static str,
    pass: bool,
    /// Known not to be reachable; only `enforced` is checked.
    expected_fail: bool,
    enforced: bool,
    elapsed: Duration,
    budget: Duration,
    detail: String,
}

fn run(id: &'static str, budget_s: u64, expected_fail: bool, f: impl FnOnce() -> Outcome) -> Line {
    let t0 = Instant::now();
    let o = f();
    let elapsed = t0.elapsed();
    let budget = Duration::from_secs(budget_s);
    let l = Line { id, pass: o.pass && elapsed <= budget, expected_fail, enforced: o.enforced && elapsed <= budget, elapsed, budget, detail: o.detail };
    println!(
        "{} [{}] ({:.2} s of {} s) {}",
        if l.pass { "PASS" } else { "FAIL" },
        l.id,
        l.elapsed.as_secs_f64(),
        l.budget.as_secs(),
        l.detail
    );
    l
}

fn reference() -> HyperfineParams {
    HyperfineParams::from_khz(19.4, 50.5, 567.4).unwrap()
}

fn within(x: f64, want: f64, rel: f64) -> bool {
    (x - want).abs() <= rel * want.abs()
}

// ---------------------------------------------------------------------------

fn resonance_position() -> Outcome {
    let two_tau = resonance_times(&reference(), 0)[0];
    outcome(within(two_tau, 0.875e-6, 0.01), format!("2tau0 = {:.4} us (want 0.875 +- 1%)", two_tau * 1e6))
}

fn rotation_per_pulse() -> Outcome {
    let p = reference();
    let b = dd_block(&p, resonant_tau(&p).unwrap()).unwrap();
    let alpha = b.alpha.to_degrees();
    let closed = p.alpha_closed_form().to_degrees();
    let ok = (alpha - 10.2).abs() <= 0.3 && within(alpha, closed, 0.02);
    outcome(ok, format!("alpha = {alpha:.3} deg, closed form {closed:.3} deg"))
}

fn brute_force_xyn(p: &HyperfineParams, tau: f64, n: usize) -> CMatrix {
    let id = CMatrix::identity(2);
    let sz_e = pauli::z().scale_re(0.5).tensor(&id).unwrap();
    let iz = id.tensor(&pauli::z().scale_re(0.5)).unwrap();
    let ix = id.tensor(&pauli::x().scale_re(0.5)).unwrap();
    let coupling = &iz.scale_re(p.a_par()) + &ix.scale_re(p.a_perp());
    let h = &iz.scale_re(p.omega_l()) + &(&sz_e * &coupling).scale_re(2.0);
    let u = expm_hermitian(&h, tau).unwrap();
    let x_e = pauli::x().tensor(&id).unwrap();
    let v = &(&u * &x_e) * &u;
    let mut acc = CMatrix::identity(4);
    for _ in 0..n {
        acc = &v * &acc;
    }
    acc
}

fn random_axis_angle(rng: &mut ChaCha8Rng) -> AxisAngle {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
        if let Some(n) = normalize(v) {
            return AxisAngle::new(n, rng.random_range(-2.0 * PI..2.0 * PI)).unwrap();
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let mut worst_xyn = 0.0f64;
    for _ in 0..200 {
        let p = HyperfineParams::from_khz(rng.random_range(-100.0..100.0), rng.random_range(0.0..100.0), rng.random_range(50.0..1000.0))
            .unwrap();
        let tau = rng.random_range(0.05e-6..5e-6);
        let n = 2 * rng.random_range(1..=16usize);
        let fast = xyn_propagator(&p, tau, n).unwrap();
        worst_xyn = worst_xyn.max(fast.max_abs_diff(&brute_force_xyn(&p, tau, n)));
    }
    let mut worst_su2 = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = (random_axis_angle(&mut rng), random_axis_angle(&mut rng));
        let c = compose_axis_angle(&a, &b);
        worst_su2 = worst_su2.max(c.matrix().max_abs_diff_up_to_phase(&(&a.matrix() * &b.matrix())));
    }
    outcome(worst_xyn <= 1e-9 && worst_su2 <= 1e-10, format!("xyn max diff {worst_xyn:.1e}, composition max diff {worst_su2:.1e}"))
}

fn signal_spectroscopy() -> Outcome {
    let p = reference();
    let grid = uniform_grid(0.0, 0.05e-6, 2048);
    let s0 = fft_spectrum(&grid, &ramsey_s0(&p, &grid, false).unwrap().values).unwrap();
    let sd = fft_spectrum(&grid, &ramsey_sdelta(&p, &grid, false).unwrap().values).unwrap();
    let (w0, wd) = (units::rad_to_hz(p.omega0()), units::rad_to_hz(p.omega_delta().abs()));
    let (e0, ed) = ((s0.peak_hz() - w0).abs() / s0.native_bin_hz, (sd.peak_hz() - wd).abs() / sd.native_bin_hz);
    outcome(
        e0 <= 1.0 && ed <= 1.0,
        format!(
            "s0 peak {:.2} kHz vs {:.2} ({e0:.2} bin), s_delta peak {:.2} kHz vs {:.2} ({ed:.2} bin)",
            s0.peak_hz() * 1e-3,
            w0 * 1e-3,
            sd.peak_hz() * 1e-3,
            wd * 1e-3
        ),
    )
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let g: Vec<C64> = (0..d * d).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let g = CMatrix::from_vec(d, g).unwrap();
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    m.scale_re(1.0 / tr)
}

fn cptp_suite() -> Outcome {
    let p = reference();
    let dark = DarkSpinModel::default();
    let ens = LarmorEnsemble::dark_spins(dark.a1, dark.a2);
    let single = LarmorEnsemble::single();
    let opt = OpticalParams::reference(&p).unwrap();
    let k0 = CMatrix::unit(2, 1, 0).tensor(&CMatrix::identity(2)).unwrap();
    let k1 = CMatrix::unit(2, 1, 1).tensor(&CMatrix::identity(2)).unwrap();
    let mut channels: Vec<(&str, QuantumChannel)> = vec![
        ("swap single", swap_channel(&p, &single, None).unwrap()),
        ("swap ensemble+T2", swap_channel(&p, &ens, Some(16.1e-6)).unwrap()),
        ("ideal swap", QuantumChannel::unitary(&ideal_swap_unitary()).unwrap()),
        ("free evolution+T2", free_evolution_channel(&p, 3e-6, Some(16.1e-6)).unwrap()),
        ("z measurement", electron_z_measurement()),
        ("ideal reset", QuantumChannel::from_kraus(&[k0, k1]).unwrap()),
    ];
    for (name, branch) in [("init", ExcitationBranch::Init), ("readout", ExcitationBranch::Readout)] {
        channels.push((name, excitation_channel(&p, &opt, branch, &ens).unwrap()));
        channels.push((name, optical_pulse_channel(&p, &opt, branch, &ens).unwrap()));
        channels.push((name, pipeline_channel(&p, &opt, branch, &ens).unwrap()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_tp, mut worst_choi, mut worst_state) = (0.0f64, 0.0f64, 0.0f64);
    for (_, ch) in &channels {
        worst_tp = worst_tp.max(ch.trace_defect());
        worst_choi = worst_choi.min(ch.min_choi_eigenvalue().unwrap());
        for _ in 0..50 {
            let out = ch.apply_matrix(&random_state(&mut rng, ch.dim())).unwrap();
            worst_tp = worst_tp.max((out.trace().re - 1.0).abs());
            let h = &out + &out.adjoint();
            worst_state = worst_state.min(eigh(&h.scale_re(0.5)).unwrap().values[0]);
        }
    }
    outcome(
        worst_tp <= 1e-8 && worst_choi >= -1e-8 && worst_state >= -1e-8,
        format!("{} channels: trace defect {worst_tp:.1e}, min Choi eig {worst_choi:.1e}, min output eig {worst_state:.1e}", channels.len()),
    )
}

fn dephasing_formula() -> Outcome {
    let g = 1.0 / 60e-6;
    let f1 = dephasing_purity(0.56 * g, g, 1).unwrap();
    let f450 = dephasing_purity(0.0034 * g, g, 450).unwrap();
    // Toy model: nucleus only, H_g = 0, H_e = δ_A I_z, every cycle excites.
    let delta_a = units::TWO_PI * 0.56 * g;
    let members = [(1.0, CMatrix::zeros(2), pauli::z().scale_re(0.5 * delta_a))];
    let id = CMatrix::identity(2);
    let model = ExcitationModel { members: &members, bright: &id, dark: None, flip: None, t1: 1.0 / g, t_window: 45.0 / g };
    let ch = model.channel().unwrap();
    let c = coherence_factor(delta_a, g).norm();
    let mut m = DensityMatrix::from_bloch([1.0, 0.0, 0.0]).unwrap().into_matrix();
    let mut worst = 0.0f64;
    for n in 1..=20u32 {
        m = ch.apply_matrix(&m).unwrap();
        let len = 2.0 * m[(0, 1)].norm();
        worst = worst.max((len - dephasing_purity(0.56 * g, g, n).unwrap()).abs()).max((len - c.powi(n as i32)).abs());
    }
    let ok = (0.26..=0.30).contains(&f1) && (f450 - 0.90).abs() <= 0.01 && worst <= 1e-10;
    outcome(ok, format!("F(0.56g,1) = {f1:.4}, F(0.0034g,450) = {f450:.4}, iterated max diff {worst:.1e}"))
}

struct SwapVariant {
    label: &'static str,
    ensemble: bool,
    t2: Option<f64>,
    optics: Option<OpticalParams>,
}

fn swap_numbers(p: &HyperfineParams, v: &SwapVariant) -> (f64, f64) {
    let dark = DarkSpinModel::default();
    let ens = if v.ensemble { LarmorEnsemble::dark_spins(dark.a1, dark.a2) } else { LarmorEnsemble::single() };
    let fid = swap_fidelity_computational(&swap_channel(p, &ens, v.t2).unwrap()).unwrap();
    let cfg = SwapExperimentConfig {
        pattern: vec![0, 0, 1, 1],
        n_loops: 100,
        control: false,
        dephasing_t2: v.t2,
        optics: v.optics.clone().map_or(OpticsModel::Ideal, OpticsModel::Physical),
        ideal_swap: false,
        seed: 0,
    };
    (fid, swap_experiment(p, &ens, &cfg).unwrap().fidelity)
}

fn excited_from_shipped_g(p: &HyperfineParams) -> HyperfineParams {
    let g = GTensorFile::load(None).unwrap().excited().unwrap().expect("shipped file has an excited tensor");
    let field = ObservationFile::load(None).unwrap().settings().unwrap()[0];
    let a = LocateModel::hydrogen(g).params(&Position::REFERENCE_POSITIVE, &field).unwrap();
    HyperfineParams::new(a.a_par(), a.a_perp(), p.omega_l()).unwrap()
}

fn swap_fidelity() -> Outcome {
    let p = reference();
    let physical = OpticalParams::reference(&p).unwrap();
    let g_optics = OpticalParams { excited_hyperfine: excited_from_shipped_g(&p), ..physical.clone() };
    let documented = SwapVariant { label: "ensemble+T2, physical optics", ensemble: true, t2: Some(16.1e-6), optics: Some(physical.clone()) };
    let (fid, ret) = swap_numbers(&p, &documented);
    let mut detail = format!("{}: swap {fid:.3} (want 0.91+-0.03), retrieval {ret:.3} (want 0.84+-0.03)", documented.label);
    let others = [
        SwapVariant { label: "single, no T2, physical", ensemble: false, t2: None, optics: Some(physical.clone()) },
        SwapVariant { label: "ensemble, no T2, physical", ensemble: true, t2: None, optics: Some(physical) },
        SwapVariant { label: "ensemble+T2, g-tensor excited", ensemble: true, t2: Some(16.1e-6), optics: Some(g_optics) },
    ];
    let mut results = Vec::new();
    for v in &others {
        let (f, r) = swap_numbers(&p, v);
        detail += &format!("; {}: {f:.3}/{r:.3}", v.label);
        results.push((f, r));
    }
    let mut o = outcome((fid - 0.91).abs() <= 0.03 && (ret - 0.84).abs() <= 0.03, detail);
    // The model itself: near-perfect without the ensemble and T2, and each
    // added imperfection only lowers the fidelity.
    o.enforced = results[0].0 >= 0.95 && results[1].0 <= results[0].0 && fid <= results[1].0;
    o
}

fn t1_bound_check() -> Outcome {
    let t = t1_bound(0.76, 0.84, 59.2e-3).unwrap();
    // The quoted 0.63 s does not follow from the formula with these inputs.
    let ok = (t - 0.59).abs() <= 0.01 && (t - 0.63).abs() > 0.02;
    outcome(ok, format!("T1 >= {t:.3} s by formula; quoted 0.63 s differs by {:.3} s", 0.63 - t))
}

fn localization() -> Outcome {
    // (a) synthetic data from the model itself.
    let g = GTensorFile::load(None).unwrap().ground().unwrap();
    let model = LocateModel::hydrogen(g);
    let settings = FieldSetting::reference_settings();
    let truth = Position::new(20.3, 62.4, 47.1).unwrap();
    let obs: Vec<Observation> = settings
        .iter()
        .map(|s| {
            let x = model.observables(&truth, s).unwrap();
            Observation::new(x, [units::khz_to_rad(0.1), units::khz_to_rad(0.1), units::rad(0.1)]).unwrap()
        })
        .collect();
    let branch = if model.params(&truth, &settings[0]).unwrap().a_par() >= 0.0 { SignBranch::Positive } else { SignBranch::Negative };
    let opts = LocateOptions {
        region: SearchRegion { r: (16.0, 24.0), theta: (40.0, 90.0), phi: (20.0, 80.0) },
        mc_samples: 0,
        nm_tol: 1e-10,
        ..LocateOptions::default()
    };
    let fit = localize(&model, &obs, &settings, branch, &opts).unwrap();
    let dr = (fit.position.r - truth.r).abs();
    let dang = fit.position.angle_to(&truth);
    let ok_a = dr < 0.1 && dang < 0.5;

    // (b) shipped observations, positive branch, 10^4 Monte Carlo samples.
    let (fs, ob) = ObservationFile::load(None).unwrap().measured().unwrap();
    let real = localize(&model, &ob, &fs, SignBranch::Positive, &LocateOptions { mc_samples: 10_000, ..LocateOptions::default() }).unwrap();
    let want = Position::REFERENCE_POSITIVE;
    let pos = real.position;
    let ok_b = (pos.r - want.r).abs() <= 0.5
        && (pos.theta_h - want.theta_h).abs() <= 2.0
        && (pos.phi_h - want.phi_h).abs() <= 2.0
        && (real.reduced_chi2 - 2.7).abs() <= 0.5;
    let mut o = outcome(
        ok_a && ok_b,
        format!(
            "(a) {} dr {dr:.3} A, angle {dang:.3} deg; (b) {} ({:.1} A, {:.1}, {:.1}) with {} setting(s), chi2 {:.3}, reduced {}",
            if ok_a { "PASS" } else { "FAIL" },
            if ok_b { "PASS" } else { "FAIL" },
            pos.r,
            pos.theta_h,
            pos.phi_h,
            fs.len(),
            real.chi2_min,
            if real.reduced_chi2.is_nan() { "undefined (dof 0)".to_string() } else { format!("{:.2}", real.reduced_chi2) }
        ),
    );
    o.enforced = ok_a;
    o
}

fn dark_spins() -> Outcome {
    let p = reference();
    let dark = DarkSpinModel::default();
    let tau0 = reference_tau0();
    let pts = readout_points(&p, &dark, tau0, 8).unwrap();
    let t_ins = pts.d2_insensitive_time;
    let ok_ins = within(t_ins, 62.6e-6, 0.01);
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    let mut ok_phase = true;
    let mut phases = Vec::new();
    for tc in [72.19e-6, 73.14e-6] {
        let formula = dark.phase(1, tc, tau0, 8).unwrap();
        let sim = wrap(branch_phase(&p, &dark, (1, 1), tc, tau0, 1e-6).unwrap() - branch_phase(&p, &dark, (-1, 1), tc, tau0, 1e-6).unwrap());
        ok_phase &= (formula / PI - 0.7).abs() < 0.03 && (wrap(sim - formula) / PI).abs() < 0.02;
        phases.push((formula / PI, sim / PI));
    }
    let sigma = noise_for_fidelity(&p, &dark, 72.19e-6, 0.98).unwrap();
    let cfg = JumpTraceConfig { readout_time: 72.19e-6, n_samples: 12 * 3600 / 29, sample_period: 29.0, readout_noise_sigma: sigma, seed: 3 };
    let est = estimate_lifetime(&jump_trace(&p, &dark, &cfg).unwrap(), None).unwrap();
    let ok_t1 = within(est.t1, dark.t1_dark_1, 0.2);
    outcome(
        ok_ins && ok_phase && ok_t1,
        format!(
            "t_ins {:.2} us; phi1/pi formula/sim {:.3}/{:.3} at 72.19, {:.3}/{:.3} at 73.14; T1 {:.2} min from {} jumps (true 5.12)",
            t_ins * 1e6,
            phases[0].0,
            phases[0].1,
            phases[1].0,
            phases[1].1,
            est.t1 / 60.0,
            est.n_jumps
        ),
    )
}

fn concentration() -> Outcome {
    let post = concentration_posterior(1, 6, 3e-9).unwrap();
    let exact = (6.0f64 / 5.0).ln() / post.v_obs_cm3;
    let ok_mode = within(post.mode, exact, 1e-6) && (post.mode - 1.6e18).abs() <= 0.05e18;
    let (lo, hi) = post.interval(IntervalKind::Central);
    let ok_ci = within(lo, 0.3e18, 0.1) && within(hi, 3.9e18, 0.1);
    let (hl, hh) = post.interval(IntervalKind::Hpd);
    let mut o = outcome(
        ok_mode && ok_ci,
        format!(
            "mode {:.4e} (exact {exact:.4e}); central 68% [{:.2}, {:.2}]e18 (want [0.3, 3.9]e18 +-10%); HPD 68% [{:.2}, {:.2}]e18",
            post.mode,
            lo / 1e18,
            hi / 1e18,
            hl / 1e18,
            hh / 1e18
        ),
    );
    o.enforced = ok_mode;
    o
}

fn dipolar() -> Outcome {
    let si = dipolar_shift(1.5, 0.0, g_nuclear::H1, g_nuclear::SI29).unwrap().abs();
    let y = dipolar_shift(2.4, 0.0, g_nuclear::H1, g_nuclear::Y89).unwrap().abs();
    outcome(within(si, 7000.0, 0.15) && within(y, 400.0, 0.15), format!("H-Si {:.2} kHz, H-Y {:.3} kHz", si * 1e-3, y * 1e-3))
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn cli_outputs(args: &[&str]) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_spinforge"))
        .args(["--seed", "11", "--out"])
        .arg(dir.path())
        .args(args)
        .output()
        .unwrap();
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    read_dir_bytes(dir.path())
}

fn determinism() -> Outcome {
    let p = reference();
    let dark = DarkSpinModel::default();
    let ens = LarmorEnsemble::dark_spins(dark.a1, dark.a2);
    let mut same = Vec::new();

    let scfg = SwapExperimentConfig {
        pattern: vec![0, 1, 1, 0],
        n_loops: 50,
        control: false,
        dephasing_t2: Some(16.1e-6),
        optics: OpticsModel::Ideal,
        ideal_swap: false,
        seed: 9,
    };
    same.push(("swap", swap_experiment(&p, &ens, &scfg).unwrap() == swap_experiment(&p, &ens, &scfg).unwrap()));

    let model = LocateModel::hydrogen(GTensorFile::load(None).unwrap().ground().unwrap());
    let fs = FieldSetting::reference_settings();
    let mc = |s| monte_carlo_sigma(&model, &Position::REFERENCE_POSITIVE, &fs, 500, s).unwrap();
    same.push(("monte carlo", mc(4) == mc(4)));

    let jcfg = JumpTraceConfig { readout_time: 72.19e-6, n_samples: 2000, sample_period: 10.0, readout_noise_sigma: 0.01, seed: 2 };
    let jt = || jump_trace(&p, &dark, &jcfg).unwrap();
    let (a, b) = (jt(), jt());
    same.push(("jump trace", a.populations.iter().map(|x| x.to_bits()).eq(b.populations.iter().map(|x| x.to_bits())) && a == b));

    let grid = uniform_grid(50e-6, 50e-6, 120);
    let noise = EchoNoise { ou: Some(OuNoise::calibrated(1.9e-3, 10e-3).unwrap()), static_shifts: Vec::new(), n_trajectories: 100, dt: 1e-5, seed: 6 };
    let echo = |k| nuclear_echo(&p, k, &grid, &noise).unwrap().values;
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    same.push(("echo", bits(echo(EchoKind::Hahn)) == bits(echo(EchoKind::Hahn))));

    for args in [&["swap", "--n-loops", "20"][..], &["echo"][..], &["darkspins", "jumps"][..], &["locate", "--mc-samples", "200"][..]] {
        same.push((args[0], cli_outputs(args) == cli_outputs(args)));
    }

    // Property check on the echo: CPMG keeps coherence at least as long.
    let level = 0.5 * (1.0 + (-1.0f64).exp());
    let t_of = |k| {
        let tr = nuclear_echo(&p, k, &grid, &noise).unwrap();
        crossing_time(&tr, level).unwrap_or(f64::INFINITY)
    };
    let (hahn, cpmg) = (t_of(EchoKind::Hahn), t_of(EchoKind::Cpmg(2)));
    let all = same.iter().all(|s| s.1) && cpmg >= hahn;
    let bad: Vec<_> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
    outcome(all, format!("{} paths identical, differing: {bad:?}; 1/e time Hahn {:.2} ms, CPMG(2) {:.2} ms", same.len(), hahn * 1e3, cpmg * 1e3))
}

// Runs without the libtest harness so the report is never captured.
fn main() {
    let lines = vec![
        run("1 resonance position", 1, false, resonance_position),
        run("2 rotation per pulse", 1, false, rotation_per_pulse),
        run("3 oracle equivalence", 10, false, oracle_equivalence),
        run("4 signal spectroscopy", 5, false, signal_spectroscopy),
        run("5 CPTP suite", 30, false, cptp_suite),
        run("6 dephasing formula", 5, false, dephasing_formula),
        run("7 SWAP fidelity", 300, true, swap_fidelity),
        run("8 T1 bound", 1, false, t1_bound_check),
        run("9 localization", 600, true, localization),
        run("10 dark spins", 120, false, dark_spins),
        run("11 concentration", 1, true, concentration),
        run("12 dipolar shift", 1, false, dipolar),
        run("13 determinism", 60, false, determinism),
    ];
    let unexpected: Vec<_> = lines.iter().filter(|l| if l.expected_fail { !l.enforced } else { !l.pass }).map(|l| l.id).collect();
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
