//! Per-frame direction, reflection and range estimation from the TDVV, and
//! the per-recording aggregation.
//!
//! Under a single floor reflection the TDVV is an impulse `u0` at lag 0
//! followed by a train of terms `(-g1)^k (u0 - u1)` at multiples of the
//! reflection delay. Lag 0 therefore gives the direction of arrival, the
//! strongest later lag gives the delay, and the column at that lag fixes the
//! reflection direction. Horizontal distances of source and image agree,
//! `d0 cos φ0 = d1 cos φ1`, and with `d1 - d0 = τ1 c` this yields
//! `d0 = τ1 c / (cos φ0 / cos φ1 - 1)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{SpectralFrames, CHANNELS};
use crate::geom::{median, median_direction, Vec3};
use crate::velocity::{compute_fdvv, FdvvFrame, TdvvFrame, TdvvTransform, DEFAULT_EPS_W};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Speed of sound, m/s.
    pub c: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Frames need `D ≥ attack_fraction · max D` to be selected.
    pub attack_fraction: f64,
    pub max_weight_iters: usize,
    pub doa_converge_deg: f64,
    /// Reflection search covers lags `1..floor(lag_search_max · T)`.
    pub lag_search_max: f64,
    /// Denominator guard of the attack score.
    pub eps: f64,
    /// Relative |W| threshold of the FDVV division.
    pub eps_w: f64,
    /// Separate the direct and reflection columns from the weighting kernel.
    pub leak_correction: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            c: 343.0,
            range_min: 0.2,
            range_max: 5.0,
            attack_fraction: 0.9,
            max_weight_iters: 5,
            doa_converge_deg: 1.0,
            lag_search_max: 0.5,
            eps: 1e-9,
            eps_w: DEFAULT_EPS_W,
            leak_correction: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.c > 0.0) {
            return fail(format!("speed of sound {} must be positive", self.c));
        }
        if !(self.range_min > 0.0 && self.range_min < self.range_max) {
            return fail(format!(
                "range limits [{}, {}] must satisfy 0 < min < max",
                self.range_min, self.range_max
            ));
        }
        if !(self.attack_fraction > 0.0 && self.attack_fraction <= 1.0) {
            return fail(format!("attack fraction {} must lie in (0, 1]", self.attack_fraction));
        }
        if !(self.lag_search_max > 0.0 && self.lag_search_max <= 1.0) {
            return fail(format!("lag search fraction {} must lie in (0, 1]", self.lag_search_max));
        }
        if !(self.eps > 0.0) || !(self.eps_w >= 0.0) || !(self.doa_converge_deg >= 0.0) {
            return fail("tolerances must be non-negative (eps positive)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Ok,
    Silent,
    NoReflection,
    RangeOutOfBounds,
    DegenerateGeometry,
    LowAttack,
}

impl FrameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameStatus::Ok => "ok",
            FrameStatus::Silent => "silent",
            FrameStatus::NoReflection => "no_reflection",
            FrameStatus::RangeOutOfBounds => "range_out_of_bounds",
            FrameStatus::DegenerateGeometry => "degenerate_geometry",
            FrameStatus::LowAttack => "low_attack",
        }
    }
}

impl fmt::Display for FrameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEstimate {
    pub index: usize,
    pub u0: Option<Vec3>,
    pub u1: Option<Vec3>,
    /// Reflection delay in seconds.
    pub tau1: Option<f64>,
    pub tau1_samples: Option<usize>,
    /// Range, kept for diagnostics even when out of bounds.
    pub d0: Option<f64>,
    pub attack: f64,
    pub status: FrameStatus,
}

impl FrameEstimate {
    fn silent(index: usize) -> Self {
        Self {
            index,
            u0: None,
            u1: None,
            tau1: None,
            tau1_samples: None,
            d0: None,
            attack: 0.0,
            status: FrameStatus::Silent,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == FrameStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordingEstimate {
    pub u0: Option<Vec3>,
    pub azimuth_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
    pub d0: Option<f64>,
    pub frames_used: usize,
    pub frames_total: usize,
}

/// Unit DoA from the lag-0 column.
pub fn doa_from_tdvv(tdvv: &TdvvFrame) -> Result<Vec3> {
    if tdvv.is_empty() {
        return Err(Error::SilentFrame);
    }
    tdvv.column(0).normalized().ok_or(Error::SilentFrame)
}

/// Columns shorter than this fraction of the lag-0 column count as zero in
/// the delay search; this only discards rounding residue.
pub const REFLECTION_FLOOR: f64 = 1e-9;

/// Strongest lag in `1..floor(lag_search_max · T)`; ties go to the smaller
/// lag. Returns the delay in seconds and the lag index.
pub fn tau_from_tdvv(tdvv: &TdvvFrame, config: &EstimatorConfig) -> Result<(f64, usize)> {
    let len = tdvv.len();
    if len < 3 {
        return Err(Error::NoReflection);
    }
    let end = ((config.lag_search_max * len as f64).floor() as usize).min(len);
    let floor = REFLECTION_FLOOR * tdvv.column(0).norm();
    let mut best: Option<(usize, f64)> = None;
    for j in 1..end {
        let norm = tdvv.column(j).norm();
        if norm > best.map_or(floor, |(_, b)| b) {
            best = Some((j, norm));
        }
    }
    best.map(|(j, _)| (j as f64 / tdvv.fs(), j)).ok_or(Error::NoReflection)
}

/// Reflects `u0` across the plane orthogonal to `v`:
/// `u1 = u0 - 2 (u0·v) v / ‖v‖²`.
pub fn reflection_dir(u0: Vec3, v: Vec3) -> Result<Vec3> {
    let norm_sq = v.norm_sq();
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::DegenerateReflection);
    }
    Ok(u0 - v * (2.0 * u0.dot(v) / norm_sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeFailure {
    Degenerate,
    OutOfBounds(f64),
}

/// Range of the source from the two arrival directions and the delay.
pub fn range_from_geometry(
    u0: Vec3,
    u1: Vec3,
    tau1: f64,
    config: &EstimatorConfig,
) -> std::result::Result<f64, RangeFailure> {
    let cos0 = u0.elevation().cos();
    let cos1 = u1.elevation().cos();
    if cos1.abs() < 1e-12 {
        return Err(RangeFailure::Degenerate);
    }
    let denom = cos0 / cos1 - 1.0;
    if denom.abs() < 1e-6 {
        return Err(RangeFailure::Degenerate);
    }
    let d0 = tau1 * config.c / denom;
    if d0 < 0.0 || !d0.is_finite() {
        return Err(RangeFailure::Degenerate);
    }
    if d0 < config.range_min || d0 > config.range_max {
        return Err(RangeFailure::OutOfBounds(d0));
    }
    Ok(d0)
}

/// Weighted positive spectral-flux score of frame `m`, summed over all four
/// channels. Boundary frames score 0.
pub fn attack_score(spectra: &SpectralFrames, m: usize, q: &[f64], eps: f64) -> f64 {
    if m == 0 || m + 1 >= spectra.frame_count() {
        return 0.0;
    }
    let mut total = 0.0;
    for ch in 0..CHANNELS {
        let prev = spectra.spectrum(m - 1, ch);
        let next = spectra.spectrum(m + 1, ch);
        for ((p, n), &w) in prev.iter().zip(next).zip(q) {
            let (cp, cn) = (p.norm(), n.norm());
            total += w * (cn - cp) / (cn.max(cp) + eps);
        }
    }
    total.max(0.0)
}

/// Per-frame working state reused across frames on one thread.
pub struct FrameEstimator {
    config: EstimatorConfig,
    transform: TdvvTransform,
}

/// Intermediate products of one frame, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub estimate: FrameEstimate,
    pub fdvv: Option<FdvvFrame>,
    pub tdvv: Option<TdvvFrame>,
}

impl FrameEstimator {
    /// Undoes the spread of the weighting between lag 0 and the reflection
    /// lag. Weighting bins convolves the TDVV with the inverse transform `k`
    /// of the weights, an even kernel, so the two observed columns mix as
    /// `a = k0·x + kτ·y`, `b = kτ·x + k0·y`. Solving the pair gives back the
    /// unweighted direct column `x` (normalized) and reflection column `y`.
    fn unmix(tdvv: &TdvvFrame, kernel: &[f64], lag: usize) -> Option<(Vec3, Vec3)> {
        let (k0, kt) = (kernel[0], kernel[lag]);
        let det = k0 * k0 - kt * kt;
        if !(det > 1e-12 * k0 * k0) {
            return None;
        }
        let (a, b) = (tdvv.column(0), tdvv.column(lag));
        let direct = (a * k0 - b * kt) * (1.0 / det);
        let reflected = (b * k0 - a * kt) * (1.0 / det);
        direct.normalized().map(|u| (u, reflected))
    }

    /// The TDVV with the kernel's copy of the lag-0 column removed from every
    /// other lag; this is what the delay search looks at.
    fn without_leak(tdvv: &TdvvFrame, kernel: &[f64]) -> Result<TdvvFrame> {
        let k0 = kernel[0];
        if !(k0 > 0.0) {
            return Ok(tdvv.clone());
        }
        let rows = std::array::from_fn(|r| {
            let row = &tdvv.rows()[r];
            let mut out = row.clone();
            for (o, k) in out.iter_mut().zip(kernel).skip(1) {
                *o -= k / k0 * row[0];
            }
            out
        });
        TdvvFrame::new(rows, tdvv.fs())
    }

    pub fn new(config: EstimatorConfig, frame_len: usize) -> Self {
        Self {
            config,
            transform: TdvvTransform::new(frame_len),
        }
    }

    pub fn estimate(&mut self, spectra: &SpectralFrames, m: usize, snr_db: &[f64]) -> Result<FrameEstimate> {
        Ok(self.analyze(spectra, m, snr_db)?.estimate)
    }

    /// Runs the full per-frame chain: FDVV, SNR gate, iterated plane
    /// weighting, delay search, reflection direction and range.
    pub fn analyze(&mut self, spectra: &SpectralFrames, m: usize, snr_db: &[f64]) -> Result<FrameAnalysis> {
        let fs = spectra.sample_rate() as f64;
        let silent = |fdvv, tdvv| FrameAnalysis {
            estimate: FrameEstimate::silent(m),
            fdvv,
            tdvv,
        };
        let mut fdvv = match compute_fdvv(spectra, m, self.config.eps_w) {
            Ok(f) => f,
            Err(Error::SilentFrame) => return Ok(silent(None, None)),
            Err(e) => return Err(e),
        };
        fdvv.suppress_low_snr(snr_db)?;
        let gate = fdvv.weights().to_vec();

        let mut tdvv = self.transform.process(&fdvv, fs)?;
        let Ok(mut u0) = doa_from_tdvv(&tdvv) else {
            return Ok(silent(Some(fdvv), Some(tdvv)));
        };
        let mut q = vec![1.0; fdvv.bin_count()];
        for _ in 0..self.config.max_weight_iters {
            let Ok(next_q) = fdvv.plane_weights(u0) else {
                break;
            };
            fdvv.set_weights(&gate)?;
            fdvv.apply_weights(&next_q)?;
            let next_tdvv = self.transform.process(&fdvv, fs)?;
            let Ok(next_u0) = doa_from_tdvv(&next_tdvv) else {
                break;
            };
            let moved = next_u0.angle_deg(u0);
            q = next_q;
            tdvv = next_tdvv;
            u0 = next_u0;
            if moved < self.config.doa_converge_deg {
                break;
            }
        }
        // The weights in force must match the TDVV they produced.
        fdvv.set_weights(&gate)?;
        fdvv.apply_weights(&q)?;

        let mut estimate = FrameEstimate {
            index: m,
            u0: Some(u0),
            u1: None,
            tau1: None,
            tau1_samples: None,
            d0: None,
            attack: attack_score(spectra, m, &q, self.config.eps),
            status: FrameStatus::Ok,
        };
        let kernel = if self.config.leak_correction {
            Some(self.transform.weight_kernel(fdvv.weights())?)
        } else {
            None
        };
        let search = match &kernel {
            Some(k) => Self::without_leak(&tdvv, k)?,
            None => tdvv.clone(),
        };
        estimate.status = match tau_from_tdvv(&search, &self.config) {
            Err(_) => FrameStatus::NoReflection,
            Ok((tau1, lag)) => {
                estimate.tau1 = Some(tau1);
                estimate.tau1_samples = Some(lag);
                let mut column = tdvv.column(lag);
                if let Some((direct, reflected)) = kernel.as_deref().and_then(|k| Self::unmix(&tdvv, k, lag)) {
                    u0 = direct;
                    estimate.u0 = Some(direct);
                    column = reflected;
                }
                match reflection_dir(u0, column).ok().and_then(Vec3::normalized) {
                    None => FrameStatus::DegenerateGeometry,
                    Some(u1) => {
                        estimate.u1 = Some(u1);
                        match range_from_geometry(u0, u1, tau1, &self.config) {
                            Ok(d0) => {
                                estimate.d0 = Some(d0);
                                FrameStatus::Ok
                            }
                            Err(RangeFailure::OutOfBounds(d0)) => {
                                estimate.d0 = Some(d0);
                                FrameStatus::RangeOutOfBounds
                            }
                            Err(RangeFailure::Degenerate) => FrameStatus::DegenerateGeometry,
                        }
                    }
                }
            }
        };
        Ok(FrameAnalysis {
            estimate,
            fdvv: Some(fdvv),
            tdvv: Some(tdvv),
        })
    }
}

pub fn estimate_frame(
    spectra: &SpectralFrames,
    m: usize,
    snr_db: &[f64],
    config: &EstimatorConfig,
) -> Result<FrameEstimate> {
    if m >= spectra.frame_count() {
        return Err(Error::FrameOutOfRange {
            index: m,
            count: spectra.frame_count(),
        });
    }
    FrameEstimator::new(*config, spectra.frame_len()).estimate(spectra, m, snr_db)
}

/// `attack_fraction · max D` over all frames.
pub fn attack_threshold(frames: &[FrameEstimate], config: &EstimatorConfig) -> f64 {
    let max = frames.iter().map(|f| f.attack).fold(0.0_f64, f64::max);
    config.attack_fraction * max
}

/// Relabels `ok` frames below the attack threshold as `low_attack`.
pub fn mark_low_attack(frames: &mut [FrameEstimate], config: &EstimatorConfig) {
    let threshold = attack_threshold(frames, config);
    for f in frames.iter_mut().filter(|f| f.is_ok() && f.attack < threshold) {
        f.status = FrameStatus::LowAttack;
    }
}

/// Median aggregation over the frames that pass both the attack threshold
/// and the range check. Without any such frame, the DoA falls back to the
/// attack-selected frames and the range is left empty.
pub fn aggregate(frames: &[FrameEstimate], config: &EstimatorConfig) -> Result<RecordingEstimate> {
    if frames.is_empty() {
        return Err(Error::EmptyRecording);
    }
    let threshold = attack_threshold(frames, config);
    let strong = |f: &&FrameEstimate| f.attack >= threshold;

    let selected: Vec<&FrameEstimate> = frames.iter().filter(strong).filter(|f| f.is_ok()).collect();
    let (u0, d0, used) = if selected.is_empty() {
        let fallback: Vec<Vec3> = frames.iter().filter(strong).filter_map(|f| f.u0).collect();
        (median_direction(&fallback), None, fallback.len())
    } else {
        let dirs: Vec<Vec3> = selected.iter().filter_map(|f| f.u0).collect();
        let mut ranges: Vec<f64> = selected.iter().filter_map(|f| f.d0).collect();
        (median_direction(&dirs), median(&mut ranges), selected.len())
    };
    Ok(RecordingEstimate {
        u0,
        azimuth_deg: u0.map(Vec3::azimuth_deg),
        elevation_deg: u0.map(Vec3::elevation_deg),
        d0,
        frames_used: if u0.is_some() { used } else { 0 },
        frames_total: frames.len(),
    })
}

/// Active-intensity baseline: per frame the mean of Re V(f) over valid
/// bins, then the componentwise median over frames.
pub fn baseline_active_doa(frames: &[FdvvFrame]) -> Result<Vec3> {
    let means: Vec<Vec3> = frames.iter().filter_map(FdvvFrame::mean_active).collect();
    if means.is_empty() {
        return Err(Error::SilentRecording);
    }
    median_direction(&means).ok_or(Error::SilentRecording)
}
