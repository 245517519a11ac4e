use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use srmd3d::io::read_signal_csv;
use srmd3d::signal::Signal;

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Reads a `time,value` CSV, or a WAV file when the extension is `.wav`.
pub fn read_input(path: &Path, channel: Option<u16>) -> Result<Signal> {
    if is_wav(path) {
        return read_wav(path, channel);
    }
    if channel.is_some() {
        bail!("--channel applies to WAV input only");
    }
    let file = File::open(path).with_context(|| format!("cannot open input {}", path.display()))?;
    let x = read_signal_csv(BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))?;
    if x.is_empty() {
        bail!("{} holds no samples", path.display());
    }
    Ok(x)
}

fn encoding_name(spec: &WavSpec) -> String {
    match spec.sample_format {
        SampleFormat::Int => format!("{}-bit integer PCM", spec.bits_per_sample),
        SampleFormat::Float => format!("{}-bit float", spec.bits_per_sample),
    }
}

/// PCM16, PCM32 and float32 only. Integer samples are scaled to [-1, 1).
pub fn read_wav(path: &Path, channel: Option<u16>) -> Result<Signal> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => anyhow!(io).context(format!("cannot open input {}", path.display())),
        hound::Error::Unsupported => anyhow!(
            "unsupported WAV encoding in {} (supported: 16-bit PCM, 32-bit PCM, 32-bit float)",
            path.display()
        ),
        other => anyhow!("cannot read WAV {}: {other}", path.display()),
    })?;
    let spec = reader.spec();
    let supported = matches!(
        (spec.sample_format, spec.bits_per_sample),
        (SampleFormat::Int, 16) | (SampleFormat::Int, 32) | (SampleFormat::Float, 32)
    );
    if !supported {
        bail!(
            "unsupported WAV encoding {} in {} (supported: 16-bit PCM, 32-bit PCM, 32-bit float)",
            encoding_name(&spec),
            path.display()
        );
    }
    let n_ch = spec.channels;
    let ch = match (channel, n_ch) {
        (Some(c), _) if c >= n_ch => bail!("channel {c} requested but {} has {n_ch} channel(s)", path.display()),
        (Some(c), _) => c,
        (None, 1) => 0,
        (None, _) => bail!("{} has {n_ch} channels; pick one with --channel", path.display()),
    };
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let samples: Vec<f64> = interleaved
        .into_iter()
        .skip(ch as usize)
        .step_by(n_ch as usize)
        .collect();
    if samples.is_empty() {
        bail!("{} holds no samples", path.display());
    }
    Ok(Signal::new(samples, spec.sample_rate as f64)?)
}

/// 32-bit float mono. The sample rate is rounded to an integer.
pub fn wav_bytes(x: &Signal) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate().round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::new());
    let mut w = WavWriter::new(&mut buf, spec)?;
    for &v in x.samples() {
        w.write_sample(v as f32)?;
    }
    w.finalize()?;
    Ok(buf.into_inner())
}
