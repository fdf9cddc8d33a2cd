// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Electron–nuclear spin register simulation: conditional-rotation algebra
//! under dynamical decoupling, pulse-sequence signals, channel error models,
//! dipolar localization and dark-spin environment analysis.
//!
//! Conventions used throughout:
//! - frequencies are angular (rad/s) internally; conversion helpers live in
//!   [`units`];
//! - tensor order is electron ⊗ nucleus (⊗ further spins), and
//!   |↑⟩ = |0⟩ is the first basis state;
//! - rotations are `exp(−i θ/2 n·σ)`.

#![no_std]

extern crate alloc;

mod error;
pub mod channels;
pub mod environment;
pub mod hyperfine;
pub mod locate;
pub mod qmat;
pub mod quadrature;
pub mod sequences;
pub mod units;

pub use error::{Error, Result};
