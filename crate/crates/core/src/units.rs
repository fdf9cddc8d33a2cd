// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Physical constants and the single angular/ordinary frequency boundary.

use core::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Bohr magneton, J/T (CODATA 2018).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton, J/T.
pub const MU_N: f64 = 5.050_783_746_1e-27;
/// Planck constant, J·s (exact).
pub const H_PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = 1.054_571_817e-34;
/// μ₀/4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Nuclear g-factors (dimensionless).
pub mod g_nuclear {
    pub const H1: f64 = 5.585_694_689_3;
    pub const SI29: f64 = -1.110_58;
    pub const Y89: f64 = -0.274_830_8;
    pub const CD111: f64 = -1.189_77;
}

/// ¹H gyromagnetic ratio γ/2π in Hz/T.
pub const GAMMA_H_HZ_PER_T: f64 = 42.577_478_5e6;

/// Electron π-pulse duration; carried for timing budgets only, pulses are
/// instantaneous in the dynamics.
pub const PI_PULSE_DURATION_S: f64 = 31e-9;

pub const GAUSS_PER_TESLA: f64 = 1e4;
pub const ANGSTROM: f64 = 1e-10;
pub const CM3_PER_M3: f64 = 1e6;

#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    TWO_PI * f_hz
}

#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

#[inline]
pub fn khz_to_rad(f_khz: f64) -> f64 {
    TWO_PI * f_khz * 1e3
}

#[inline]
pub fn rad_to_khz(w: f64) -> f64 {
    w / TWO_PI / 1e3
}

#[inline]
pub fn deg(x_rad: f64) -> f64 {
    x_rad.to_degrees()
}

#[inline]
pub fn rad(x_deg: f64) -> f64 {
    x_deg.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        assert!((rad_to_khz(khz_to_rad(567.4)) - 567.4).abs() < 1e-12);
        assert!((rad_to_hz(hz_to_rad(3.0)) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn proton_gamma_consistent_with_g_factor() {
        let gamma = g_nuclear::H1 * MU_N / H_PLANCK;
        assert!((gamma / GAMMA_H_HZ_PER_T - 1.0).abs() < 1e-7);
    }
}
