// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Standard-library companion to `spinforge-core`: configuration files,
//! data files, CSV/JSON output, spectra and the `spinforge` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod spectrum;

pub use error::{CliError, Result};
