use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

/// Reads 16-bit mono 16 kHz PCM into samples scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::new(std::io::BufReader::new(crate::error::open_file(path)?))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedFormat(format!(
            "{}: sample_rate {} != {SAMPLE_RATE}",
            path.display(),
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: channels {} != 1",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: codec {:?}/{} bits, expected 16-bit integer PCM",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, SAMPLE_RATE)
}

/// Writes 16-bit PCM with rounding and saturation.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::new(std::io::BufWriter::new(crate::error::create_file(path)?), spec)?;
    for &s in w.samples() {
        writer.write_sample((s * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
