//! The `analyze`, `simulate` and `evaluate` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tdvv::estimator::FrameStatus;
use tdvv::foa::{FoaSignal, Window};
use tdvv::pipeline::{analyze_recording, tdvv_frames, AnalysisOptions, PipelineConfig, RecordingAnalysis};
use tdvv::simulator::{image_source, render_foa, SceneSpec};

use crate::error::{CliError, CliResult};
use crate::report::{evaluate, frames_csv, tdvv_csv, AnalysisReport, Metrics, TruthRecord, FORMAT_VERSION};
use crate::wav::{read_foa, write_foa, ChannelOrder};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub frame_sec: Option<f64>,
    pub overlap: Option<f64>,
    pub sample_rate: Option<u32>,
    pub window: Option<Window>,
}

/// Defaults, then the config file, then the overrides.
pub fn load_config(file: Option<&Path>, overrides: Overrides) -> CliResult<PipelineConfig> {
    let mut config = match file {
        Some(path) => {
            let text = read_text(path)?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = overrides.frame_sec {
        config.frame_sec = v;
    }
    if let Some(v) = overrides.overlap {
        config.overlap = v;
    }
    if let Some(v) = overrides.sample_rate {
        config.sample_rate = v;
    }
    if let Some(v) = overrides.window {
        config.window = v;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeRequest {
    pub inputs: Vec<PathBuf>,
    pub order: ChannelOrder,
    pub config: PipelineConfig,
    pub baseline: bool,
    /// Report file, or a directory when several inputs are given.
    pub output: Option<PathBuf>,
    pub frames_csv: Option<PathBuf>,
    pub tdvv_dump: Option<PathBuf>,
}

/// Analysis of one in-memory recording.
pub fn analyze_signal(
    signal: &FoaSignal,
    label: &str,
    config: &PipelineConfig,
    baseline: bool,
) -> CliResult<(AnalysisReport, RecordingAnalysis)> {
    let analysis = analyze_recording(signal, config, AnalysisOptions { baseline })?;
    Ok((AnalysisReport::new(label, config, &analysis), analysis))
}

struct Analyzed {
    signal: FoaSignal,
    report: AnalysisReport,
    analysis: RecordingAnalysis,
}

fn analyze_file(path: &Path, req: &AnalyzeRequest) -> CliResult<Analyzed> {
    let signal = read_foa(path, req.order)?;
    let (report, analysis) = analyze_signal(&signal, &path.display().to_string(), &req.config, req.baseline)?;
    Ok(Analyzed {
        signal,
        report,
        analysis,
    })
}

/// Runs every input on its own thread and writes the reports in input order.
///
/// The first failure is returned; later ones go to stderr. A recording
/// without a usable frame still gets its report.
pub fn run_analyze(req: &AnalyzeRequest) -> CliResult<()> {
    if req.inputs.is_empty() {
        return Err(CliError::Config("no input files".into()));
    }
    let several = req.inputs.len() > 1;
    if several && (req.frames_csv.is_some() || req.tdvv_dump.is_some()) {
        return Err(CliError::Config("--frames-csv and --tdvv-dump take a single input".into()));
    }
    let out_dir = match &req.output {
        Some(dir) if several || dir.is_dir() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            Some(dir.clone())
        }
        _ => None,
    };

    let results: Vec<CliResult<Analyzed>> = std::thread::scope(|scope| {
        let handles: Vec<_> = req
            .inputs
            .iter()
            .map(|path| scope.spawn(move || analyze_file(path, req)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });

    let mut first_error = None;
    let mut stdout = std::io::stdout().lock();
    for (path, result) in req.inputs.iter().zip(results) {
        let outcome = result.and_then(|done| {
            let text = done.report.to_toml();
            match (&out_dir, &req.output) {
                (Some(dir), _) => write_text(&dir.join(report_name(path)), &text)?,
                (None, Some(file)) => write_text(file, &text)?,
                (None, None) => {
                    if several {
                        writeln!(stdout, "# {}", path.display()).map_err(|e| CliError::io("<stdout>", e))?;
                    }
                    stdout.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?;
                }
            }
            if let Some(csv) = &req.frames_csv {
                write_text(csv, &frames_csv(&done.analysis.frames))?;
            }
            if let Some(dump) = &req.tdvv_dump {
                let selected: Vec<usize> = done
                    .analysis
                    .frames
                    .iter()
                    .filter(|f| f.status != FrameStatus::Silent && f.attack >= done.analysis.attack_threshold)
                    .map(|f| f.index)
                    .collect();
                write_text(dump, &tdvv_csv(&tdvv_frames(&done.signal, &req.config, &selected)?))?;
            }
            if done.report.has_direction() {
                Ok(())
            } else {
                Err(CliError::NoUsableFrames(path.display().to_string()))
            }
        });
        match (outcome, &first_error) {
            (Err(err), Some(_)) => eprintln!("tdvv: {}: {err}", err.reason()),
            (Err(err), None) => first_error = Some(err),
            (Ok(()), _) => {}
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn report_name(input: &Path) -> String {
    let stem = input.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    format!("{stem}.report.toml")
}

/// Path of the truth record that accompanies a rendered file.
pub fn truth_path(audio: &Path) -> PathBuf {
    audio.with_extension("truth")
}

/// Renders a scene file; returns the warnings raised by the scene check.
pub fn run_simulate(scene_path: &Path, output: &Path, seed: u64) -> CliResult<Vec<String>> {
    let text = read_text(scene_path)?;
    let scene: SceneSpec =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", scene_path.display())))?;
    simulate_scene(&scene, output, seed)
}

pub fn simulate_scene(scene: &SceneSpec, output: &Path, seed: u64) -> CliResult<Vec<String>> {
    let warnings = scene.validate()?;
    let truth = image_source(scene, scene.speed_of_sound)?;
    let signal = render_foa(scene, &truth, seed)?;
    write_foa(output, &signal)?;
    let record = TruthRecord {
        version: FORMAT_VERSION.to_string(),
        seed,
        sample_rate: scene.fs,
        truth,
        scene: scene.clone(),
    };
    write_text(&truth_path(output), &record.to_toml())?;
    Ok(warnings)
}

pub fn run_evaluate(report: &Path, truth: &Path) -> CliResult<Metrics> {
    evaluate(
        &report.display().to_string(),
        &read_text(report)?,
        &truth.display().to_string(),
        &read_text(truth)?,
    )
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
