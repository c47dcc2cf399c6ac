//! Report, ground-truth and metrics formats.
//!
//! Reports and truth records are TOML; per-frame tables are CSV. Estimates
//! are rounded to nine significant digits so that last-bit differences do
//! not reach the text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tdvv::estimator::FrameEstimate;
use tdvv::foa::Window;
use tdvv::pipeline::{PipelineConfig, RecordingAnalysis};
use tdvv::simulator::{GroundTruth, SceneSpec};
use tdvv::velocity::TdvvFrame;
use tdvv::Vec3;

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: &str = concat!("tdvv ", env!("CARGO_PKG_VERSION"));

const DIGITS: i32 = 9;

/// Rounds to `DIGITS` significant digits; `-0` becomes `0`.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let exp = DIGITS - 1 - x.abs().log10().floor() as i32;
    let r = if exp >= 0 {
        let scale = 10f64.powi(exp);
        (x * scale).round() / scale
    } else {
        let scale = 10f64.powi(-exp);
        (x / scale).round() * scale
    };
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round_vec(v: Vec3) -> [f64; 3] {
    v.to_array().map(round_sig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: String,
    pub input: String,
    pub analysis: AnalysisInfo,
    pub estimate: EstimateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInfo {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub frames_used: usize,
    pub frames_total: usize,
    pub attack_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub method: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub u0: [f64; 3],
}

impl AnalysisReport {
    pub fn new(input: &str, config: &PipelineConfig, analysis: &RecordingAnalysis) -> Self {
        let est = &analysis.estimate;
        Self {
            version: FORMAT_VERSION.to_string(),
            input: input.to_string(),
            analysis: AnalysisInfo {
                sample_rate: analysis.sample_rate,
                frame_len: analysis.stft.frame_len,
                hop: analysis.stft.hop,
                window: analysis.stft.window,
                frames_used: est.frames_used,
                frames_total: est.frames_total,
                attack_threshold: round_sig(analysis.attack_threshold),
            },
            estimate: EstimateSection {
                azimuth_deg: est.azimuth_deg.map(round_sig),
                elevation_deg: est.elevation_deg.map(round_sig),
                u0: est.u0.map(round_vec),
                range_m: est.d0.map(round_sig),
            },
            baseline: analysis.baseline.map(|u| BaselineSection {
                method: "active_intensity".to_string(),
                azimuth_deg: round_sig(u.azimuth_deg()),
                elevation_deg: round_sig(u.elevation_deg()),
                u0: round_vec(u),
            }),
            config: *config,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn has_direction(&self) -> bool {
        self.estimate.u0.is_some()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| round_sig(x).to_string()).unwrap_or_default()
}

fn opt_vec(v: Option<Vec3>) -> String {
    match v {
        Some(v) => round_vec(v).map(|x| x.to_string()).join(","),
        None => ",,".to_string(),
    }
}

/// One row per frame.
pub fn frames_csv(frames: &[FrameEstimate]) -> String {
    let mut out = String::from("frame,status,attack,u0_x,u0_y,u0_z,u1_x,u1_y,u1_z,tau1_s,tau1_samples,d0_m\n");
    for f in frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.index,
            f.status,
            round_sig(f.attack),
            opt_vec(f.u0),
            opt_vec(f.u1),
            opt(f.tau1),
            f.tau1_samples.map(|t| t.to_string()).unwrap_or_default(),
            opt(f.d0),
        );
    }
    out
}

/// Long-format dump of the 3×T lag matrices: one row per (frame, lag).
pub fn tdvv_csv(frames: &[(usize, TdvvFrame)]) -> String {
    let mut out = String::from("frame,lag,x,y,z\n");
    for (m, tdvv) in frames {
        for lag in 0..tdvv.len() {
            let [x, y, z] = round_vec(tdvv.column(lag));
            let _ = writeln!(out, "{m},{lag},{x},{y},{z}");
        }
    }
    out
}

/// Ground truth written next to a rendered scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub version: String,
    pub seed: u64,
    pub sample_rate: u32,
    #[serde(flatten)]
    pub truth: GroundTruth,
    pub scene: SceneSpec,
}

impl TruthRecord {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub angular_error_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_error_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_angular_error_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beats_baseline: Option<bool>,
}

impl Metrics {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}

/// Angle between two directions in degrees; neither needs unit norm.
pub fn angular_error_deg(estimate: Vec3, truth: Vec3) -> CliResult<f64> {
    let (Some(a), Some(b)) = (estimate.normalized(), truth.normalized()) else {
        return Err(CliError::Format("direction vector has zero length".into()));
    };
    Ok(a.dot(b).clamp(-1.0, 1.0).acos().to_degrees())
}

struct Doc<'a> {
    name: &'a str,
    table: toml::Table,
}

impl<'a> Doc<'a> {
    fn parse(name: &'a str, text: &str) -> CliResult<Self> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Format(format!("{name}: {e}")))?;
        Ok(Self { name, table })
    }

    fn lookup(&self, path: &str) -> Option<&toml::Value> {
        let mut parts = path.split('.');
        let mut value = self.table.get(parts.next()?)?;
        for part in parts {
            value = value.as_table()?.get(part)?;
        }
        Some(value)
    }

    fn float(&self, path: &str) -> CliResult<Option<f64>> {
        match self.lookup(path) {
            None => Ok(None),
            Some(v) => number(v).map(Some).ok_or_else(|| self.bad(path, "a number")),
        }
    }

    fn vector(&self, path: &str) -> CliResult<Option<Vec3>> {
        let Some(v) = self.lookup(path) else {
            return Ok(None);
        };
        let items: Option<Vec<f64>> = v.as_array().map(|a| a.iter().filter_map(number).collect());
        match items {
            Some(xs) if xs.len() == 3 && v.as_array().is_some_and(|a| a.len() == 3) => {
                Ok(Some(Vec3::new(xs[0], xs[1], xs[2])))
            }
            _ => Err(self.bad(path, "an array of three numbers")),
        }
    }

    fn missing(&self, path: &str) -> CliError {
        CliError::Format(format!("{}: missing field `{path}`", self.name))
    }

    fn bad(&self, path: &str, want: &str) -> CliError {
        CliError::Format(format!("{}: field `{path}` must be {want}", self.name))
    }
}

fn number(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

/// Compares a report against a truth record.
///
/// The report needs `estimate.u0`; the truth needs `u0`. Range and baseline
/// errors are emitted when both sides carry them.
pub fn evaluate(report_name: &str, report: &str, truth_name: &str, truth: &str) -> CliResult<Metrics> {
    let report = Doc::parse(report_name, report)?;
    let truth = Doc::parse(truth_name, truth)?;
    let u_hat = report.vector("estimate.u0")?.ok_or_else(|| report.missing("estimate.u0"))?;
    let u_true = truth.vector("u0")?.ok_or_else(|| truth.missing("u0"))?;
    let angular = angular_error_deg(u_hat, u_true)?;
    let range = match (report.float("estimate.range_m")?, truth.float("d0")?) {
        (Some(d_hat), Some(d)) => Some(round_sig((d_hat - d).abs())),
        _ => None,
    };
    let baseline = report
        .vector("baseline.u0")?
        .map(|u| angular_error_deg(u, u_true))
        .transpose()?;
    Ok(Metrics {
        angular_error_deg: round_sig(angular),
        range_error_m: range,
        baseline_angular_error_deg: baseline.map(round_sig),
        beats_baseline: baseline.map(|b| angular < b),
    })
}
