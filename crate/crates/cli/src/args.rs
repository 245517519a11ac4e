use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "srmd3d", version, about = "Sparse random mode decomposition with chirplet features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic test signal, its ground-truth modes and a manifest.
    Synth(SynthArgs),
    /// Split a signal into modes.
    Decompose(DecomposeArgs),
    /// Export an STFT or chirplet magnitude grid.
    Spectrogram(SpectrogramArgs),
    /// Run an output-SNR sweep described by a JSON file.
    Benchmark(BenchmarkArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    PaperSim,
    CrossoverPair,
    Tones,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Srmd3d,
    Srmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TensorFormat {
    Csv,
    Bin,
}

pub fn parse_db(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse().map_err(|e| format!("{s:?} is not a dB value: {e}")),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SignalKind,
    #[arg(long, default_value_t = 1024.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Input SNR in dB, or `inf` for a clean signal.
    #[arg(long, default_value = "inf", value_parser = parse_db)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tone frequencies in Hz for `tones`.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100.0, 300.0])]
    pub freqs: Vec<f64>,
    /// Also write WAV copies.
    #[arg(long)]
    pub wav: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Signal as `time,value` CSV or WAV.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Srmd3d, env = "SRMD3D_METHOD")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 2, env = "SRMD3D_K")]
    pub k: usize,
    /// Atoms per mode; the baseline draws `k` times as many.
    #[arg(long, default_value_t = 5000, env = "SRMD3D_N_FEATURES")]
    pub n_features: usize,
    /// Window variance in s².
    #[arg(long, env = "SRMD3D_ALPHA")]
    pub alpha: Option<f64>,
    /// Sampling bandwidth in Hz.
    #[arg(long, env = "SRMD3D_LAMBDA")]
    pub lambda: Option<f64>,
    /// Noise standard deviation; skips estimation.
    #[arg(long, env = "SRMD3D_SIGMA")]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0, env = "SRMD3D_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 1000, env = "SRMD3D_MAX_ITER")]
    pub max_iter: usize,
    /// Window variance of the ridge transform in s².
    #[arg(long, env = "SRMD3D_RIDGE_ALPHA")]
    pub ridge_alpha: Option<f64>,
    /// Largest expected |chirp rate| in Hz/s.
    #[arg(long, env = "SRMD3D_MAX_CHIRP_RATE")]
    pub max_chirp_rate: Option<f64>,
    /// DBSCAN radius for the baseline.
    #[arg(long, default_value_t = 0.03, env = "SRMD3D_EPS")]
    pub eps: f64,
    #[arg(long, default_value_t = 4, env = "SRMD3D_MIN_PTS")]
    pub min_pts: usize,
    /// WAV channel to read from multichannel files.
    #[arg(long)]
    pub channel: Option<u16>,
    /// Ground-truth mode CSVs; prints matched per-mode SNR.
    #[arg(long, num_args = 1..)]
    pub truth: Vec<PathBuf>,
    /// Also write modes as WAV.
    #[arg(long)]
    pub wav: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    pub input: PathBuf,
    /// Export the time-frequency-chirp-rate tensor instead of the STFT.
    #[arg(long)]
    pub chirplet: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long, default_value_t = 41)]
    pub n_cr_bins: usize,
    #[arg(long)]
    pub max_chirp_rate: Option<f64>,
    #[arg(long)]
    pub channel: Option<u16>,
    #[arg(long, value_enum, default_value_t = TensorFormat::Csv)]
    pub format: TensorFormat,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// JSON sweep description.
    pub config: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
