// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Argument parsing and dispatch. Exit codes: 0 success, 1 numerical
//! failure, 2 configuration or input error (error JSON on stderr).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, CommandOutput, RunContext};
use crate::config::{DarkTask, EchoKindName, ExperimentConfig, RamseyMode, SignChoice};
use crate::error::{CliError, Result};
use crate::output::Format;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SPINFORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spinforge", version, about = "Electron-nuclear spin register simulations")]
pub struct Cli {
    /// TOML or JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// XY-N population versus pulse spacing.
    Spectrum {
        #[arg(long)]
        n_pulses: Option<usize>,
        #[arg(long)]
        start_us: Option<f64>,
        #[arg(long)]
        stop_us: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Correlated (s0) or anti-correlated (sdelta) Ramsey signal.
    Ramsey {
        #[arg(long, value_enum)]
        mode: Option<RamseyMode>,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Nuclear Hahn/CPMG echo decay.
    Echo {
        #[arg(long, value_enum)]
        kind: Option<EchoKindName>,
        #[arg(long)]
        cpmg_pulses: Option<usize>,
    },
    /// SWAP loop experiment histogram.
    Swap {
        #[arg(long)]
        n_loops: Option<usize>,
        /// Replace the SWAP by the identity.
        #[arg(long)]
        control: bool,
        #[arg(long)]
        pattern: Option<String>,
    },
    /// χ² localization of the nuclear spin.
    Locate {
        #[arg(long)]
        observations: Option<PathBuf>,
        #[arg(long)]
        g_tensor: Option<PathBuf>,
        #[arg(long, value_enum)]
        sign: Option<SignChoice>,
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Dark-spin analysis.
    Darkspins {
        #[arg(value_enum)]
        task: Option<DarkTask>,
    },
    /// Hydrogen-concentration posterior from n hits in m trials.
    Concentration {
        n: Option<u32>,
        m: Option<u32>,
        /// Observation radius in metres.
        r_obs: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectrum { .. } => "spectrum",
            Self::Ramsey { .. } => "ramsey",
            Self::Echo { .. } => "echo",
            Self::Swap { .. } => "swap",
            Self::Locate { .. } => "locate",
            Self::Darkspins { .. } => "darkspins",
            Self::Concentration { .. } => "concentration",
        }
    }

    /// Fold flag overrides into the configuration.
    fn apply(&self, cfg: &mut ExperimentConfig) {
        match self {
            Self::Spectrum { n_pulses, start_us, stop_us, points } => {
                let s = &mut cfg.spectrum;
                s.n_pulses = n_pulses.unwrap_or(s.n_pulses);
                s.two_tau_start_us = start_us.unwrap_or(s.two_tau_start_us);
                s.two_tau_stop_us = stop_us.unwrap_or(s.two_tau_stop_us);
                s.points = points.unwrap_or(s.points);
            }
            Self::Ramsey { mode, exact, points } => {
                let r = &mut cfg.ramsey;
                r.mode = mode.unwrap_or(r.mode);
                r.exact |= *exact;
                r.points = points.unwrap_or(r.points);
            }
            Self::Echo { kind, cpmg_pulses } => {
                let e = &mut cfg.echo;
                e.kind = kind.unwrap_or(e.kind);
                e.cpmg_pulses = cpmg_pulses.unwrap_or(e.cpmg_pulses);
            }
            Self::Swap { n_loops, control, pattern } => {
                let s = &mut cfg.swap;
                s.n_loops = n_loops.unwrap_or(s.n_loops);
                s.control |= *control;
                if let Some(p) = pattern {
                    s.pattern = p.clone();
                }
            }
            Self::Locate { observations, g_tensor, sign, mc_samples } => {
                let l = &mut cfg.locate;
                if observations.is_some() {
                    l.observations_file = observations.clone();
                }
                if g_tensor.is_some() {
                    l.g_tensor_file = g_tensor.clone();
                }
                l.sign = sign.unwrap_or(l.sign);
                l.mc_samples = mc_samples.unwrap_or(l.mc_samples);
            }
            Self::Darkspins { task } => {
                cfg.darkspins.task = task.unwrap_or(cfg.darkspins.task);
            }
            Self::Concentration { n, m, r_obs } => {
                let c = &mut cfg.concentration;
                c.n_obs = n.unwrap_or(c.n_obs);
                c.m_trials = m.unwrap_or(c.m_trials);
                if let Some(r) = r_obs {
                    c.r_obs_nm = r * 1e9;
                }
            }
        }
    }
}

/// Resolve configuration and flags, then run the subcommand.
pub fn run(cli: &Cli) -> Result<CommandOutput> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    let ctx = RunContext { out: cli.out.clone(), format: cli.format };
    match cli.command {
        Command::Spectrum { .. } => commands::spectrum(&cfg, &ctx),
        Command::Ramsey { .. } => commands::ramsey(&cfg, &ctx),
        Command::Echo { .. } => commands::echo(&cfg, &ctx),
        Command::Swap { .. } => commands::swap(&cfg, &ctx),
        Command::Locate { .. } => commands::locate(&cfg, &ctx),
        Command::Darkspins { .. } => commands::darkspins(&cfg, &ctx),
        Command::Concentration { .. } => commands::concentration(&cfg, &ctx),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| CliError::config(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(CliError::config(THREADS_ENV, "must be >= 1"));
        }
        // A second call in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Full entry point: parse, run, print the summary, return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let err = CliError::config("<arguments>", e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match configure_threads().and_then(|_| run(&cli)) {
        Ok(out) => {
            println!("{}", out.summary);
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
