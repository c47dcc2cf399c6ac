//! Four-channel WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use tdvv::foa::{FoaSignal, CHANNELS};

use crate::error::{CliError, CliResult};

/// Channel order of the file on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelOrder {
    /// W, X, Y, Z.
    #[default]
    Fuma,
    /// ACN: W, Y, Z, X.
    Acn,
}

/// Reads a 4-channel PCM16/24/32 or float32 file, scaled to [-1, 1).
pub fn read_foa(path: &Path, order: ChannelOrder) -> CliResult<FoaSignal> {
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels as usize != CHANNELS {
        return Err(CliError::Format(format!(
            "{}: expected 4 channels, found {}",
            path.display(),
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (format, bits) => {
            return Err(CliError::Format(format!(
                "{}: unsupported sample format {format:?} with {bits} bits",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / CHANNELS;
    let channels: [Vec<f64>; CHANNELS] =
        std::array::from_fn(|ch| (0..frames).map(|i| interleaved[i * CHANNELS + ch]).collect());
    let signal = match order {
        ChannelOrder::Fuma => FoaSignal::new(spec.sample_rate, channels),
        ChannelOrder::Acn => FoaSignal::from_acn(spec.sample_rate, channels),
    };
    signal.map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Writes W, X, Y, Z as 32-bit float.
pub fn write_foa(path: &Path, signal: &FoaSignal) -> CliResult<()> {
    let spec = WavSpec {
        channels: CHANNELS as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for i in 0..signal.len() {
        for ch in signal.channels() {
            writer.write_sample(ch[i] as f32).map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, err: hound::Error) -> CliError {
    match err {
        hound::Error::IoError(source) if source.kind() != std::io::ErrorKind::UnexpectedEof => CliError::io(path, source),
        other => CliError::Format(format!("{}: {other}", path.display())),
    }
}
