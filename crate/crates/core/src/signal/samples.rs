//! Sample-sequence ingestion: 16-bit PCM mono WAV or one-value-per-line text.

use std::fs;
use std::path::Path;

use super::SignalError;

/// A mono sequence and, for WAV input, its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub values: Vec<f64>,
    pub sample_rate: Option<u32>,
}

const PCM_SCALE: f64 = 32768.0;

fn format_err(path: &Path, reason: impl Into<String>) -> SignalError {
    SignalError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SignalError {
    SignalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a sample file. Files starting with a `RIFF` tag are read as WAV;
/// anything else must be UTF-8 text with one decimal per line (`#` comments
/// and blank lines skipped).
pub fn load_samples(path: impl AsRef<Path>) -> Result<Samples, SignalError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"RIFF") {
        return read_wav(path, &bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| format_err(path, "unsupported format: neither RIFF/WAVE nor UTF-8 text"))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| format_err(path, format!("line {}: `{line}` is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(format_err(
                path,
                format!("line {}: non-finite sample", i + 1),
            ));
        }
        values.push(v);
    }
    Ok(Samples {
        values,
        sample_rate: None,
    })
}

fn read_wav(path: &Path, bytes: &[u8]) -> Result<Samples, SignalError> {
    let reader = hound::WavReader::new(std::io::Cursor::new(bytes))
        .map_err(|e| format_err(path, format!("malformed WAV: {e}")))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_err(
            path,
            format!("{} channels; only mono WAV is accepted", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format_err(
            path,
            format!(
                "{}-bit {:?} samples; only 16-bit PCM is accepted",
                spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    let values = reader
        .into_samples::<i16>()
        .map(|s| s.map(|s| s as f64 / PCM_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format_err(path, format!("malformed WAV data: {e}")))?;
    Ok(Samples {
        values,
        sample_rate: Some(spec.sample_rate),
    })
}

/// Writes one sample per line with 17 significant digits.
pub fn write_text_samples(path: impl AsRef<Path>, values: &[f64]) -> Result<(), SignalError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(values.len() * 24);
    for v in values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Encodes 16-bit PCM mono WAV in memory, scaling by 32768 and saturating at
/// full scale.
pub fn encode_wav(values: &[f64], sample_rate: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut bytes = Vec::new();
    {
        let mut writer = hound::WavWriter::new(std::io::Cursor::new(&mut bytes), spec)
            .expect("in-memory WAV header");
        for &v in values {
            let q = (v * PCM_SCALE)
                .round()
                .clamp(i16::MIN as f64, i16::MAX as f64);
            writer.write_sample(q as i16).expect("in-memory WAV sample");
        }
        writer.finalize().expect("in-memory WAV finalize");
    }
    bytes
}

/// Writes 16-bit PCM mono; see [`encode_wav`].
pub fn write_wav_samples(
    path: impl AsRef<Path>,
    values: &[f64],
    sample_rate: u32,
) -> Result<(), SignalError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(values, sample_rate)).map_err(|e| io_err(path, e))
}
