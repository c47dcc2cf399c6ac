//! Online per-band noise floor tracking for the negative-SNR gate.
//!
//! Minimum statistics in their simplest form: the W-channel power of each bin
//! is recursively smoothed, the noise floor is the minimum of the smoothed
//! power over a sliding window of frames, scaled by a fixed bias factor.
//! The rule is causal and homogeneous in the input power, so SNRs do not
//! depend on the overall signal level.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{SpectralFrames, W};

/// Power floor used on both sides of the SNR ratio.
pub const EPS_POWER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Recursive smoothing factor α in (0, 1).
    pub smoothing: f64,
    /// Length of the running-minimum window, in frames.
    pub min_track_window: usize,
    /// Multiplier applied to the running minimum.
    pub bias: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.9,
            min_track_window: 50,
            bias: 1.5,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "noise smoothing {} must lie in (0, 1)",
                self.smoothing
            )));
        }
        if self.min_track_window == 0 {
            return Err(Error::InvalidConfig("noise window must be at least one frame".into()));
        }
        if !(self.bias > 0.0) {
            return Err(Error::InvalidConfig(format!("noise bias {} must be positive", self.bias)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NoiseTracker {
    config: NoiseConfig,
    smoothed: Vec<f64>,
    history: VecDeque<Vec<f64>>,
    noise_psd: Vec<f64>,
}

impl NoiseTracker {
    pub fn new(bins: usize, config: NoiseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            smoothed: Vec::new(),
            history: VecDeque::with_capacity(config.min_track_window),
            noise_psd: vec![0.0; bins],
        })
    }

    pub fn noise_psd(&self) -> &[f64] {
        &self.noise_psd
    }

    /// Folds in one frame of W-channel power and returns the per-bin SNR in dB.
    pub fn update(&mut self, w_power: &[f64]) -> Result<Vec<f64>> {
        let bins = self.noise_psd.len();
        if w_power.len() != bins {
            return Err(Error::LengthMismatch {
                expected: bins,
                actual: w_power.len(),
            });
        }
        if let Some(p) = w_power.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidSignal(format!("negative or NaN power {p}")));
        }

        let alpha = self.config.smoothing;
        if self.smoothed.is_empty() {
            self.smoothed = w_power.to_vec();
        } else {
            for (s, &p) in self.smoothed.iter_mut().zip(w_power) {
                *s = alpha * *s + (1.0 - alpha) * p;
            }
        }

        // Recycle the oldest buffer once the window is full.
        let mut slot = if self.history.len() == self.config.min_track_window {
            self.history.pop_front().unwrap_or_default()
        } else {
            Vec::with_capacity(bins)
        };
        slot.clear();
        slot.extend_from_slice(&self.smoothed);
        self.history.push_back(slot);

        for (f, noise) in self.noise_psd.iter_mut().enumerate() {
            let min = self.history.iter().map(|h| h[f]).fold(f64::INFINITY, f64::min);
            *noise = self.config.bias * min;
        }

        Ok(w_power
            .iter()
            .zip(&self.noise_psd)
            .map(|(&p, &n)| snr_db(p, n))
            .collect())
    }
}

fn snr_db(power: f64, noise: f64) -> f64 {
    10.0 * ((power - noise).max(EPS_POWER) / noise.max(EPS_POWER)).log10()
}

/// Runs a fresh tracker over every frame of `spectra` and returns the SNR
/// vectors in frame order.
pub fn snr_sequence(spectra: &SpectralFrames, config: NoiseConfig) -> Result<Vec<Vec<f64>>> {
    let mut tracker = NoiseTracker::new(spectra.bin_count(), config)?;
    (0..spectra.frame_count())
        .map(|m| {
            let power: Vec<f64> = spectra.spectrum(m, W).iter().map(|c| c.norm_sqr()).collect();
            tracker.update(&power)
        })
        .collect()
}
