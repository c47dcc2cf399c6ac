//! Floor-reflection scene simulator and closed-form velocity-vector oracles.
//!
//! The microphone sits at the origin, `mic_height` metres above a horizontal
//! reflecting plane. A single specular floor reflection is modelled with the
//! image-source method: the image is the source mirrored through the plane.
//! Every propagation path is rendered as a plane wave in SN3D first order,
//! `W += a·s(t - t_n)`, `[X, Y, Z] += a·s(t - t_n)·u_n`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::FoaSignal;
use crate::geom::Vec3;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Test stimulus generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceSignal {
    /// Unit-variance Gaussian white noise.
    #[default]
    White,
    /// Unit impulses every `period` samples, starting at sample 0.
    ImpulseTrain { period: usize },
    /// Order-2 autoregressive low-pass noise, unit variance.
    ArSpeechlike,
}

impl fmt::Display for SourceSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSignal::White => f.write_str("white"),
            SourceSignal::ImpulseTrain { period } => write!(f, "impulse_train({period})"),
            SourceSignal::ArSpeechlike => f.write_str("ar_speechlike"),
        }
    }
}

impl FromStr for SourceSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "white" => return Ok(SourceSignal::White),
            "ar_speechlike" => return Ok(SourceSignal::ArSpeechlike),
            _ => {}
        }
        let period = s
            .strip_prefix("impulse_train(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|p| p.trim().parse::<usize>().ok())
            .filter(|&p| p > 0);
        match period {
            Some(period) => Ok(SourceSignal::ImpulseTrain { period }),
            None => Err(Error::UnknownSignal(s.to_string())),
        }
    }
}

impl TryFrom<String> for SourceSignal {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SourceSignal> for String {
    fn from(s: SourceSignal) -> String {
        s.to_string()
    }
}

impl Serialize for SourceSignal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SourceSignal {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Generates `len` samples of `kind`, deterministic in `seed`.
pub fn generate_samples(kind: SourceSignal, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SourceSignal::White => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        SourceSignal::ImpulseTrain { period } => (0..len)
            .map(|n| if n % period == 0 { 1.0 } else { 0.0 })
            .collect(),
        SourceSignal::ArSpeechlike => {
            // Poles at 0.8 and 0.5: a smooth low-pass tilt.
            const WARMUP: usize = 200;
            let (a1, a2) = (1.3, -0.4);
            let (mut y1, mut y2) = (0.0, 0.0);
            let mut out = Vec::with_capacity(len);
            for n in 0..len + WARMUP {
                let e: f64 = rng.sample(StandardNormal);
                let y = a1 * y1 + a2 * y2 + e;
                y2 = y1;
                y1 = y;
                if n >= WARMUP {
                    out.push(y);
                }
            }
            let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
            if rms > 0.0 {
                out.iter_mut().for_each(|v| *v /= rms);
            }
            out
        }
    }
}

/// Generates `duration · fs` samples (rounded) of `kind`.
pub fn generate_signal(kind: SourceSignal, duration: f64, fs: u32, seed: u64) -> Result<Vec<f64>> {
    let len = (duration * fs as f64).round();
    if !(len >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "duration {duration} s at {fs} Hz yields no samples"
        )));
    }
    Ok(generate_samples(kind, len as usize, seed))
}

/// Gain applied to the floor reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReflectionGain {
    Fixed(f64),
    /// `d0 / d1`, the spherical-spreading ratio of the two paths.
    InverseDistance,
}

impl Default for ReflectionGain {
    fn default() -> Self {
        ReflectionGain::Fixed(0.5)
    }
}

impl Serialize for ReflectionGain {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ReflectionGain::Fixed(g) => serializer.serialize_f64(*g),
            ReflectionGain::InverseDistance => serializer.serialize_str("inverse-distance"),
        }
    }
}

impl<'de> Deserialize<'de> for ReflectionGain {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(g) => Ok(ReflectionGain::Fixed(g)),
            Raw::Text(s) if s == "inverse-distance" => Ok(ReflectionGain::InverseDistance),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "reflection_gain must be a number or \"inverse-distance\", got `{s}`"
            ))),
        }
    }
}

/// Source position relative to the microphone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePosition {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub distance: f64,
}

/// An additional plane-wave path: direction of arrival, gain, and delay
/// relative to the direct path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub direction: Vec3,
    pub gain: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub mic_height: f64,
    pub source: SourcePosition,
    pub reflection_gain: ReflectionGain,
    pub extra_reflectors: Vec<Reflection>,
    pub noise_snr_db: Option<f64>,
    pub source_signal: SourceSignal,
    pub duration: f64,
    pub fs: u32,
    pub speed_of_sound: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            mic_height: 1.0,
            source: SourcePosition {
                azimuth_deg: 0.0,
                elevation_deg: 0.0,
                distance: 2.0,
            },
            reflection_gain: ReflectionGain::default(),
            extra_reflectors: Vec::new(),
            noise_snr_db: None,
            source_signal: SourceSignal::White,
            duration: 2.0,
            fs: 16000,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl SceneSpec {
    /// Checks the scene and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.source.distance > 0.0) {
            return bad(format!("source distance {} must be positive", self.source.distance));
        }
        if !(self.mic_height > 0.0) {
            return bad(format!("mic height {} must be positive", self.mic_height));
        }
        if let ReflectionGain::Fixed(g) = self.reflection_gain {
            if !(g.abs() < 1.0) {
                return bad(format!("reflection gain {g} must satisfy |g| < 1"));
            }
        }
        if self.fs == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.duration * self.fs as f64 >= 1.0) {
            return bad(format!("duration {} s yields no samples", self.duration));
        }
        if !(self.speed_of_sound > 0.0) {
            return bad(format!("speed of sound {} must be positive", self.speed_of_sound));
        }
        for r in &self.extra_reflectors {
            if r.direction.normalized().is_none() {
                return bad("extra reflector direction must be nonzero".into());
            }
            if !(r.gain.abs() < 1.0) || !(r.delay >= 0.0) {
                return bad(format!("extra reflector gain {} / delay {} out of range", r.gain, r.delay));
            }
        }

        let mut warnings = Vec::new();
        let floor_gain = match self.reflection_gain {
            ReflectionGain::Fixed(g) => g.abs(),
            ReflectionGain::InverseDistance => 0.0,
        };
        let total: f64 = floor_gain + self.extra_reflectors.iter().map(|r| r.gain.abs()).sum::<f64>();
        if total >= 1.0 {
            warnings.push(format!(
                "sum of reflection gains {total:.3} >= 1: the multi-reflection series does not converge"
            ));
        }
        Ok(warnings)
    }
}

/// One rendered path: direction, gain, and absolute arrival time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGain {
    pub direction: Vec3,
    pub gain: f64,
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub u0: Vec3,
    pub u1: Vec3,
    pub tau1: f64,
    pub d0: f64,
    pub d1: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub phi0_deg: f64,
    pub phi1_deg: f64,
    pub speed_of_sound: f64,
    pub paths: Vec<PathGain>,
}

impl GroundTruth {
    /// True when the range formula is ill-posed for this geometry (source
    /// straight above or below, or elevations too close).
    pub fn is_range_degenerate(&self) -> bool {
        let (c0, c1) = (self.u0.elevation().cos(), self.u1.elevation().cos());
        c1.abs() < 1e-9 || c0.abs() < 1e-9 || (c0 / c1 - 1.0).abs() < 1e-6
    }

    /// Reflection delay rounded to the nearest sample at `fs`.
    pub fn tau1_samples(&self, fs: f64) -> usize {
        (self.tau1 * fs).round() as usize
    }
}

/// Mirrors the source through the floor and derives the two-path geometry.
pub fn image_source(scene: &SceneSpec, c: f64) -> Result<GroundTruth> {
    scene.validate()?;
    let SourcePosition {
        azimuth_deg,
        elevation_deg,
        distance,
    } = scene.source;
    let h = scene.mic_height;
    let source = Vec3::from_angles_deg(azimuth_deg, elevation_deg) * distance;
    // Plane at z = -h.
    if !(source.z > -h) {
        return Err(Error::InvalidGeometry(format!(
            "source at z = {:.3} m is not above the reflecting plane at z = {:.3} m",
            source.z, -h
        )));
    }
    let image = Vec3::new(source.x, source.y, -2.0 * h - source.z);
    let d0 = source.norm();
    let d1 = image.norm();
    let u0 = source * (1.0 / d0);
    let u1 = image * (1.0 / d1);

    let g1 = match scene.reflection_gain {
        ReflectionGain::Fixed(g) => g,
        ReflectionGain::InverseDistance => d0 / d1,
    };
    let mut paths = vec![
        PathGain {
            direction: u0,
            gain: 1.0,
            arrival: d0 / c,
        },
        PathGain {
            direction: u1,
            gain: g1,
            arrival: d1 / c,
        },
    ];
    paths.extend(scene.extra_reflectors.iter().map(|r| PathGain {
        direction: r.direction.normalized().unwrap_or(r.direction),
        gain: r.gain,
        arrival: d0 / c + r.delay,
    }));

    Ok(GroundTruth {
        u0,
        u1,
        tau1: (d1 - d0) / c,
        d0,
        d1,
        azimuth_deg: u0.azimuth_deg(),
        elevation_deg: u0.elevation_deg(),
        phi0_deg: u0.elevation_deg(),
        phi1_deg: u1.elevation_deg(),
        speed_of_sound: c,
        paths,
    })
}

/// Renders the scene's paths into a 4-channel FOA signal.
///
/// Delays are applied as phase ramps on the DFT grid of the whole signal, so
/// fractional delays are exact for the (circularly extended) stimulus.
pub fn render_foa(scene: &SceneSpec, truth: &GroundTruth, seed: u64) -> Result<FoaSignal> {
    scene.validate()?;
    let fs = scene.fs as f64;
    let source = generate_signal(scene.source_signal, scene.duration, scene.fs, seed)?;
    let n = source.len();

    let mut planner = RealFftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut input = source;
    let mut spectrum = forward.make_output_vec();
    forward
        .process(&mut input, &mut spectrum)
        .expect("buffer sizes come from the same plan");

    let bins = spectrum.len();
    let nyquist = (n % 2 == 0).then_some(bins - 1);
    let mut channels = vec![vec![Complex64::default(); bins]; 4];
    for path in truth.paths.iter().filter(|p| p.gain != 0.0) {
        let delay = path.arrival * fs;
        let gains = [1.0, path.direction.x, path.direction.y, path.direction.z].map(|u| u * path.gain);
        for (k, &s) in spectrum.iter().enumerate() {
            let mut phase = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * delay / n as f64);
            if Some(k) == nyquist {
                phase = Complex64::new(phase.re, 0.0);
            }
            let v = s * phase;
            for (ch, g) in channels.iter_mut().zip(gains) {
                ch[k] += v * g;
            }
        }
    }

    let scale = 1.0 / n as f64;
    let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    for (spec, dst) in channels.iter_mut().zip(out.iter_mut()) {
        spec[0].im = 0.0;
        if let Some(k) = nyquist {
            spec[k].im = 0.0;
        }
        inverse
            .process(spec, dst)
            .expect("buffer sizes come from the same plan");
        dst.iter_mut().for_each(|v| *v *= scale);
    }

    if let Some(snr_db) = scene.noise_snr_db {
        let w_power = out[0].iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sigma = (w_power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for ch in out.iter_mut() {
            for v in ch.iter_mut() {
                *v += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    FoaSignal::new(scene.fs, out)
}

/// Centre frequencies of the one-sided DFT grid of length `frame_len`.
pub fn bin_frequencies(frame_len: usize, fs: f64) -> Vec<f64> {
    (0..=frame_len / 2).map(|k| k as f64 * fs / frame_len as f64).collect()
}

fn unit_phasor(f: f64, delay: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * f * delay)
}

fn rows_from(columns: impl Iterator<Item = [Complex64; 3]>) -> [Vec<Complex64>; 3] {
    let mut rows: [Vec<Complex64>; 3] = Default::default();
    for col in columns {
        for (row, v) in rows.iter_mut().zip(col) {
            row.push(v);
        }
    }
    rows
}

/// Superposition of a unit direct wave and `reflections`:
/// `V(f) = (u0 + Σ γ_n u_n) / (1 + Σ γ_n)`, `γ_n = g_n e^{-j2πfτ_n}`.
pub fn analytic_fdvv_multi(u0: Vec3, reflections: &[Reflection], freqs: &[f64]) -> [Vec<Complex64>; 3] {
    rows_from(freqs.iter().map(|&f| {
        let mut num = u0.to_array().map(|u| Complex64::new(u, 0.0));
        let mut den = Complex64::new(1.0, 0.0);
        for r in reflections {
            let gamma = unit_phasor(f, r.delay) * r.gain;
            den += gamma;
            for (n, u) in num.iter_mut().zip(r.direction.to_array()) {
                *n += gamma * u;
            }
        }
        num.map(|n| n / den)
    }))
}

/// One-reflection FDVV, `(u0 + g1 e^{-j2πfτ1} u1) / (1 + g1 e^{-j2πfτ1})`.
pub fn analytic_fdvv(u0: Vec3, u1: Vec3, g1: f64, tau1: f64, freqs: &[f64]) -> [Vec<Complex64>; 3] {
    analytic_fdvv_multi(
        u0,
        &[Reflection {
            direction: u1,
            gain: g1,
            delay: tau1,
        }],
        freqs,
    )
}

/// The one-reflection FDVV expanded as a geometric series and truncated
/// after `terms` terms: `u0 + Σ_{k=1..K} (-g1 e^{-j2πfτ1})^k (u0 - u1)`.
pub fn series_fdvv(
    u0: Vec3,
    u1: Vec3,
    g1: f64,
    tau1: f64,
    freqs: &[f64],
    terms: usize,
) -> [Vec<Complex64>; 3] {
    let diff = (u0 - u1).to_array();
    rows_from(freqs.iter().map(|&f| {
        let ratio = -unit_phasor(f, tau1) * g1;
        let mut power = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::default();
        for _ in 0..terms {
            power *= ratio;
            sum += power;
        }
        let u = u0.to_array();
        std::array::from_fn(|i| Complex64::new(u[i], 0.0) + sum * diff[i])
    }))
}

/// Closed-form TDVV of the one-reflection model on a circular lag grid of
/// length `len`: `u0` at lag 0 plus `(-g1)^k (u0 - u1)` at lag `k·τ1 mod len`
/// for `k = 1..=terms`.
pub fn analytic_tdvv(
    u0: Vec3,
    u1: Vec3,
    g1: f64,
    tau1_samples: usize,
    len: usize,
    terms: usize,
) -> [Vec<f64>; 3] {
    let mut rows: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; len]);
    if len == 0 {
        return rows;
    }
    for (row, u) in rows.iter_mut().zip(u0.to_array()) {
        row[0] = u;
    }
    let diff = (u0 - u1).to_array();
    let mut coeff = 1.0;
    for k in 1..=terms {
        coeff *= -g1;
        let lag = (k * tau1_samples) % len;
        for (row, d) in rows.iter_mut().zip(diff) {
            row[lag] += coeff * d;
        }
    }
    rows
}

/// Number of series terms needed for `|g|^K` to drop below `tol`.
pub fn terms_for_tolerance(g: f64, tol: f64) -> usize {
    let g = g.abs();
    if g == 0.0 {
        return 0;
    }
    (tol.ln() / g.ln()).ceil().max(1.0) as usize
}
