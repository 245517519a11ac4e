use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srmd3d::baseline::SrmdConfig;
use srmd3d::benchmark::{db_serde, SweepConfig};
use srmd3d::pipeline::DecompositionConfig;

use crate::args::SignalKind;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default = "default_fs")]
    pub fs: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_freqs")]
    pub freqs: Vec<f64>,
}

fn default_fs() -> f64 {
    1024.0
}

fn default_duration() -> f64 {
    1.0
}

fn default_freqs() -> Vec<f64> {
    vec![100.0, 300.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub signal: SignalSpec,
    #[serde(with = "db_serde")]
    pub snr_db: f64,
    pub seed: u64,
    pub wav: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "config", rename_all = "lowercase")]
pub enum MethodConfig {
    Srmd3d(DecompositionConfig),
    Srmd(SrmdConfig),
}

impl MethodConfig {
    pub fn seed(&self) -> u64 {
        match self {
            MethodConfig::Srmd3d(c) => c.seed,
            MethodConfig::Srmd(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSpec {
    pub input: PathBuf,
    pub channel: Option<u16>,
    pub decomposition: MethodConfig,
    #[serde(default)]
    pub truth: Vec<PathBuf>,
    pub wav: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramSpec {
    pub input: PathBuf,
    pub channel: Option<u16>,
    pub chirplet: bool,
    pub alpha: Option<f64>,
    pub hop: Option<usize>,
    pub n_cr_bins: usize,
    pub max_chirp_rate: Option<f64>,
    pub binary: bool,
}

/// Contents of a benchmark JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub signal: SignalSpec,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunSpec {
    Synth(SynthSpec),
    Decompose(DecomposeSpec),
    Spectrogram(SpectrogramSpec),
    Benchmark(BenchmarkConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub run: RunSpec,
    pub inputs: Vec<FileRecord>,
    pub output_dir: PathBuf,
    /// Checksums of the reproducible outputs, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn record(path: &Path) -> Result<FileRecord> {
    Ok(FileRecord {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}
