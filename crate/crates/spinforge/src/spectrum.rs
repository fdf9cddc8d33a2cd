// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Magnitude spectra of sampled signals.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CliError, Result};

/// Zero-padding factor applied before the transform.
pub const PAD_FACTOR: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Ordinary frequency (Hz), 0 to Nyquist.
    pub freqs_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Resolution of the unpadded transform, 1/(N·dt).
    pub native_bin_hz: f64,
}

impl Spectrum {
    /// Frequency of the largest non-DC component.
    pub fn peak_hz(&self) -> f64 {
        self.peak_in(f64::MIN_POSITIVE, f64::INFINITY).unwrap_or(0.0)
    }

    /// Largest component with frequency in [lo, hi].
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<f64> {
        (1..self.freqs_hz.len())
            .filter(|&i| self.freqs_hz[i] >= lo && self.freqs_hz[i] <= hi)
            .max_by(|&a, &b| self.magnitude[a].total_cmp(&self.magnitude[b]))
            .map(|i| self.freqs_hz[i])
    }
}

/// Remove the window-weighted mean, apply a Hann window, zero-pad ×[`PAD_FACTOR`] and take
/// |FFT|. `times` must be uniformly spaced.
pub fn fft_spectrum(times: &[f64], values: &[f64]) -> Result<Spectrum> {
    let n = times.len();
    if n < 4 || values.len() != n {
        return Err(CliError::Output("spectrum needs at least 4 matching samples".into()));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(CliError::Output("spectrum needs a uniform increasing time grid".into()));
    }
    let window: Vec<f64> = (0..n).map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos()).collect();
    // Weighted so the windowed signal has exactly zero DC.
    let mean = window.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / window.iter().sum::<f64>();
    let m = n * PAD_FACTOR;
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for ((b, v), w) in buf.iter_mut().zip(values).zip(&window) {
        *b = Complex::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    Ok(Spectrum {
        freqs_hz: (0..half).map(|k| k as f64 / (m as f64 * dt)).collect(),
        magnitude: buf[..half].iter().map(|c| c.norm()).collect(),
        native_bin_hz: 1.0 / (n as f64 * dt),
    })
}
