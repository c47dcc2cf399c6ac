//! FOA signal container and the STFT analysis front-end.
//!
//! Channels are stored in SID order (W, X, Y, Z) with SN3D normalization:
//! W carries the pressure and X, Y, Z the pressure-gradient components.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 4;
pub const W: usize = 0;
pub const X: usize = 1;
pub const Y: usize = 2;
pub const Z: usize = 3;

/// Four equal-length channels W, X, Y, Z at a common sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaSignal {
    sample_rate: u32,
    channels: [Vec<f64>; CHANNELS],
}

impl FoaSignal {
    pub fn new(sample_rate: u32, channels: [Vec<f64>; CHANNELS]) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        let len = channels[W].len();
        if len == 0 {
            return Err(Error::InvalidSignal("channels are empty".into()));
        }
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bad.len(),
            });
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    /// Builds a signal from ACN-ordered channels (W, Y, Z, X).
    pub fn from_acn(sample_rate: u32, acn: [Vec<f64>; CHANNELS]) -> Result<Self> {
        let [w, y, z, x] = acn;
        Self::new(sample_rate, [w, x, y, z])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[W].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>; CHANNELS] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; CHANNELS] {
        self.channels
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let channels = self
            .channels
            .clone()
            .map(|c| c.into_iter().map(|s| s * factor).collect());
        Self {
            sample_rate: self.sample_rate,
            channels,
        }
    }

    /// Largest absolute sample over all channels.
    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Taper of length `len`. The Hann variant omits the zero end points so
    /// every coefficient lies in (0, 1].
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => {
                let denom = (len + 1) as f64;
                (0..len)
                    .map(|n| {
                        0.5 - 0.5 * (2.0 * std::f64::consts::PI * (n + 1) as f64 / denom).cos()
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(Window::Hann),
            "rect" | "rectangular" | "boxcar" => Ok(Window::Rectangular),
            other => Err(Error::InvalidConfig(format!("unknown window `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl StftConfig {
    pub const DEFAULT_FRAME_SEC: f64 = 0.005;
    pub const DEFAULT_OVERLAP: f64 = 0.95;

    pub fn new(frame_len: usize, hop: usize, window: Window) -> Result<Self> {
        let config = Self {
            frame_len,
            hop,
            window,
        };
        config.validate()?;
        Ok(config)
    }

    /// Frame length `round(frame_sec * fs)` and hop
    /// `frame_len - round(overlap * frame_len)`, Hann window.
    pub fn from_seconds(sample_rate: u32, frame_sec: f64, overlap: f64) -> Result<Self> {
        if !(frame_sec > 0.0) || !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidConfig(format!(
                "frame length {frame_sec} s / overlap {overlap} out of range"
            )));
        }
        let frame_len = (frame_sec * sample_rate as f64).round() as usize;
        let overlapped = (overlap * frame_len as f64).round() as usize;
        Self::new(frame_len, frame_len.saturating_sub(overlapped), Window::Hann)
    }

    /// The default analysis at `sample_rate`: 80-sample frames with a
    /// 4-sample hop at 16 kHz.
    pub fn default_for(sample_rate: u32) -> Result<Self> {
        Self::from_seconds(sample_rate, Self::DEFAULT_FRAME_SEC, Self::DEFAULT_OVERLAP)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame length {} too small",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        if signal_len < self.frame_len {
            0
        } else {
            (signal_len - self.frame_len) / self.hop + 1
        }
    }
}

/// One-sided spectra of every analysis frame, for all four channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrames {
    sample_rate: u32,
    config: StftConfig,
    frame_count: usize,
    bin_count: usize,
    // Layout: [frame][channel][bin].
    data: Vec<Complex64>,
}

impl SpectralFrames {
    /// Wraps precomputed half-spectra, laid out `[frame][channel][bin]`.
    pub fn from_raw(
        sample_rate: u32,
        config: StftConfig,
        frame_count: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        config.validate()?;
        let bin_count = config.bin_count();
        let expected = frame_count * CHANNELS * bin_count;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            sample_rate,
            config,
            frame_count,
            bin_count,
            data,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn frame_len(&self) -> usize {
        self.config.frame_len
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn spectrum(&self, frame: usize, channel: usize) -> &[Complex64] {
        let start = (frame * CHANNELS + channel) * self.bin_count;
        &self.data[start..start + self.bin_count]
    }

    /// All four channel spectra of one frame.
    pub fn frame(&self, frame: usize) -> [&[Complex64]; CHANNELS] {
        std::array::from_fn(|ch| self.spectrum(frame, ch))
    }

    /// Centre frequency of bin `f` in Hz.
    pub fn bin_frequency(&self, f: usize) -> f64 {
        f as f64 * self.sample_rate as f64 / self.config.frame_len as f64
    }
}

/// Windowed real FFT of every frame `[m·hop, m·hop + frame_len)`.
pub fn stft_analyze(signal: &FoaSignal, config: &StftConfig) -> Result<SpectralFrames> {
    config.validate()?;
    if signal.len() < config.frame_len {
        return Err(Error::InputTooShort {
            len: signal.len(),
            frame_len: config.frame_len,
        });
    }
    let frame_len = config.frame_len;
    let bin_count = config.bin_count();
    let frame_count = config.frame_count(signal.len());
    let window = config.window.coefficients(frame_len);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(frame_len);

    let mut data = vec![Complex64::default(); frame_count * CHANNELS * bin_count];
    data.par_chunks_mut(CHANNELS * bin_count)
        .enumerate()
        .for_each_init(
            || (fft.make_input_vec(), fft.make_scratch_vec()),
            |(input, scratch), (m, out)| {
                let start = m * config.hop;
                for (ch, spectrum) in out.chunks_mut(bin_count).enumerate() {
                    let samples = &signal.channel(ch)[start..start + frame_len];
                    for ((dst, &s), &w) in input.iter_mut().zip(samples).zip(&window) {
                        *dst = s * w;
                    }
                    fft.process_with_scratch(input, spectrum, scratch)
                        .expect("buffer sizes come from the same plan");
                }
            },
        );

    SpectralFrames::from_raw(signal.sample_rate(), *config, frame_count, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(len: usize, value: f64) -> FoaSignal {
        FoaSignal::new(16000, std::array::from_fn(|_| vec![value; len])).unwrap()
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(FoaSignal::new(0, std::array::from_fn(|_| vec![0.0; 4])).is_err());
        assert!(FoaSignal::new(16000, std::array::from_fn(|_| vec![])).is_err());
        let err = FoaSignal::new(16000, [vec![0.0; 4], vec![0.0; 4], vec![0.0; 3], vec![0.0; 4]]);
        assert_eq!(
            err,
            Err(Error::LengthMismatch {
                expected: 4,
                actual: 3
            })
        );
    }

    #[test]
    fn acn_reorders_channels() {
        let sig = FoaSignal::from_acn(16000, [vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(sig.channel(X), &[3.0]);
        assert_eq!(sig.channel(Y), &[1.0]);
        assert_eq!(sig.channel(Z), &[2.0]);
    }

    #[test]
    fn default_config_at_16k() {
        let c = StftConfig::default_for(16000).unwrap();
        assert_eq!((c.frame_len, c.hop, c.window), (80, 4, Window::Hann));
        assert_eq!(c.bin_count(), 41);
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(8, 0, Window::Hann).is_err());
        assert!(StftConfig::new(8, 9, Window::Hann).is_err());
        assert!(StftConfig::new(8, 8, Window::Hann).is_ok());
        assert!(StftConfig::from_seconds(16000, 0.005, 1.0).is_err());
    }

    #[test]
    fn hann_taper_is_strictly_positive() {
        for len in [2, 7, 80, 81] {
            let w = Window::Hann.coefficients(len);
            assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0), "len {len}");
            // symmetric
            for n in 0..len {
                assert!((w[n] - w[len - 1 - n]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let config = StftConfig::new(8, 8, Window::Rectangular).unwrap();
        let spectra = stft_analyze(&constant(8, 1.0), &config).unwrap();
        let w = spectra.spectrum(0, W);
        assert!((w[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        assert!(w[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn sinusoid_on_bin_three() {
        let n = 16;
        let tone: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / n as f64).cos())
            .collect();
        let sig = FoaSignal::new(16000, std::array::from_fn(|_| tone.clone())).unwrap();
        let config = StftConfig::new(n, n, Window::Rectangular).unwrap();
        let spectra = stft_analyze(&sig, &config).unwrap();
        for (f, c) in spectra.spectrum(0, X).iter().enumerate() {
            if f == 3 {
                assert!((c.norm() - n as f64 / 2.0).abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9, "bin {f}: {c}");
            }
        }
    }

    #[test]
    fn frame_count_formula() {
        let config = StftConfig::new(80, 4, Window::Hann).unwrap();
        let spectra = stft_analyze(&constant(160, 0.5), &config).unwrap();
        assert_eq!(spectra.frame_count(), 21);
        assert_eq!(spectra.bin_count(), 41);
    }

    #[test]
    fn too_short_input() {
        let config = StftConfig::new(80, 4, Window::Hann).unwrap();
        assert_eq!(
            stft_analyze(&constant(79, 1.0), &config),
            Err(Error::InputTooShort {
                len: 79,
                frame_len: 80
            })
        );
    }
}
