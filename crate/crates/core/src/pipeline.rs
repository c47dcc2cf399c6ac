//! Whole-recording analysis: STFT, noise tracking, per-frame estimation and
//! aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    aggregate, attack_threshold, baseline_active_doa, EstimatorConfig, FrameEstimate, FrameEstimator,
    RecordingEstimate,
};
use crate::foa::{stft_analyze, FoaSignal, StftConfig, Window};
use crate::geom::Vec3;
use crate::noise::{snr_sequence, NoiseConfig};
use crate::velocity::{compute_fdvv, TdvvFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Required input sample rate; other rates are rejected, not resampled.
    pub sample_rate: u32,
    pub frame_sec: f64,
    pub overlap: f64,
    pub window: Window,
    pub estimator: EstimatorConfig,
    pub noise: NoiseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            frame_sec: StftConfig::DEFAULT_FRAME_SEC,
            overlap: StftConfig::DEFAULT_OVERLAP,
            window: Window::Hann,
            estimator: EstimatorConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn stft(&self) -> Result<StftConfig> {
        let mut config = StftConfig::from_seconds(self.sample_rate, self.frame_sec, self.overlap)?;
        config.window = self.window;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft()?;
        self.estimator.validate()?;
        self.noise.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RecordingAnalysis {
    pub stft: StftConfig,
    pub sample_rate: u32,
    pub frames: Vec<FrameEstimate>,
    pub estimate: RecordingEstimate,
    /// Active-intensity baseline, when requested and the recording is not silent.
    pub baseline: Option<Vec3>,
    pub attack_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalysisOptions {
    pub baseline: bool,
}

/// Runs the full estimator over one recording.
///
/// The signal is first scaled to unit peak so that the absolute guards of
/// the chain act relative to the recording level.
pub fn analyze_recording(
    signal: &FoaSignal,
    config: &PipelineConfig,
    options: AnalysisOptions,
) -> Result<RecordingAnalysis> {
    config.validate()?;
    if signal.sample_rate() != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate,
            actual: signal.sample_rate(),
        });
    }
    let stft = config.stft()?;
    let peak = signal.peak();
    let normalized = if peak > 0.0 { signal.scaled(1.0 / peak) } else { signal.clone() };
    let spectra = stft_analyze(&normalized, &stft)?;
    let snr = snr_sequence(&spectra, config.noise)?;

    let estimator = config.estimator;
    let frames = (0..spectra.frame_count())
        .into_par_iter()
        .map_init(
            || FrameEstimator::new(estimator, stft.frame_len),
            |fe, m| fe.estimate(&spectra, m, &snr[m]),
        )
        .collect::<Result<Vec<_>>>()?;

    let estimate = aggregate(&frames, &estimator)?;

    let baseline = if options.baseline {
        let fdvv: Vec<_> = (0..spectra.frame_count())
            .into_par_iter()
            .filter_map(|m| compute_fdvv(&spectra, m, estimator.eps_w).ok())
            .collect();
        baseline_active_doa(&fdvv).ok()
    } else {
        None
    };

    Ok(RecordingAnalysis {
        stft,
        sample_rate: signal.sample_rate(),
        attack_threshold: attack_threshold(&frames, &estimator),
        frames,
        estimate,
        baseline,
    })
}

/// Final-iteration TDVV of the given frames, recomputed on demand.
pub fn tdvv_frames(
    signal: &FoaSignal,
    config: &PipelineConfig,
    indices: &[usize],
) -> Result<Vec<(usize, TdvvFrame)>> {
    let stft = config.stft()?;
    let peak = signal.peak();
    let normalized = if peak > 0.0 { signal.scaled(1.0 / peak) } else { signal.clone() };
    let spectra = stft_analyze(&normalized, &stft)?;
    let snr = snr_sequence(&spectra, config.noise)?;
    let mut fe = FrameEstimator::new(config.estimator, stft.frame_len);
    let mut out = Vec::with_capacity(indices.len());
    for &m in indices {
        if m >= spectra.frame_count() {
            return Err(Error::FrameOutOfRange {
                index: m,
                count: spectra.frame_count(),
            });
        }
        if let Some(tdvv) = fe.analyze(&spectra, m, &snr[m])?.tdvv {
            out.push((m, tdvv));
        }
    }
    Ok(out)
}
