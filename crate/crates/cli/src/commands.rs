use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use srmd3d::baseline::{srmd_decompose, SrmdConfig};
use srmd3d::benchmark::{benchmark_snr_sweep, SweepTable};
use srmd3d::io::{
    read_signal_csv, write_atoms_csv, write_ridges_csv, write_signal_csv, write_spectrogram_csv, write_tensor_binary,
    write_tfc_csv,
};
use srmd3d::pipeline::{decompose_3d, default_alpha, DecompositionConfig, StageTimings};
use srmd3d::signal::{
    add_white_noise, crossover_chirp_pair, matched_snr_db, paper_simulated_signal, tones, ModeSet, Signal,
};
use srmd3d::tfa::{chirplet_transform, default_cr_span, stft, symmetric_cr_axis, StftGrid};

use crate::args::{
    BenchmarkArgs, Command, DecomposeArgs, MethodArg, RerunArgs, SignalKind, SpectrogramArgs, SynthArgs,
    TensorFormat,
};
use crate::audio::{read_input, wav_bytes};
use crate::manifest::{
    record, sha256_file, sha256_hex, BenchmarkConfig, DecomposeSpec, FileRecord, MethodConfig, RunManifest, RunSpec,
    SignalSpec, SpectrogramSpec, SynthSpec, MANIFEST_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Converged => 0,
            Outcome::NotConverged => 2,
        }
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Decompose(a) => decompose(a),
        Command::Spectrogram(a) => spectrogram(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Rerun(a) => rerun(a),
    }
}

/// Outputs are assembled in memory and written only once the run succeeds.
#[derive(Default)]
struct Bundle {
    files: Vec<(String, Vec<u8>, bool)>,
}

impl Bundle {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes, true));
    }

    /// Files holding timings, left out of the manifest checksums.
    fn add_volatile(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes, false));
    }

    fn commit(self, dir: &Path) -> Result<BTreeMap<String, String>> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut sums = BTreeMap::new();
        for (name, bytes, reproducible) in self.files {
            let path = dir.join(&name);
            fs::write(&path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
            if reproducible {
                sums.insert(name, sha256_hex(&bytes));
            }
        }
        Ok(sums)
    }
}

fn signal_csv(x: &Signal) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_signal_csv(&mut buf, x)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn synth_signal(spec: &SignalSpec) -> Result<(Signal, ModeSet)> {
    let out = match spec.kind {
        SignalKind::PaperSim => paper_simulated_signal(spec.fs, spec.duration)?,
        SignalKind::CrossoverPair => crossover_chirp_pair(spec.fs, spec.duration)?,
        SignalKind::Tones => tones(&spec.freqs, spec.fs, spec.duration)?,
    };
    Ok(out)
}

fn read_truth(paths: &[PathBuf]) -> Result<Option<ModeSet>> {
    if paths.is_empty() {
        return Ok(None);
    }
    let mut modes = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let f = fs::File::open(p).with_context(|| format!("cannot open truth file {}", p.display()))?;
        modes.push(read_signal_csv(std::io::BufReader::new(f)).with_context(|| format!("cannot read {}", p.display()))?);
        labels.push(p.file_stem().and_then(|s| s.to_str()).unwrap_or("truth").to_string());
    }
    Ok(Some(ModeSet::new(modes, labels)?))
}

fn input_records(paths: &[&Path]) -> Result<Vec<FileRecord>> {
    paths.iter().map(|p| record(p)).collect()
}

/// Runs `spec` into `out` and writes its manifest.
fn execute(spec: RunSpec, out: &Path, extra_inputs: Vec<FileRecord>) -> Result<(Outcome, RunManifest)> {
    let mut bundle = Bundle::default();
    let mut inputs = Vec::new();
    let (outcome, seed) = match &spec {
        RunSpec::Synth(s) => (synth_files(s, &mut bundle)?, s.seed),
        RunSpec::Decompose(d) => {
            let mut paths = vec![d.input.as_path()];
            paths.extend(d.truth.iter().map(PathBuf::as_path));
            let outcome = decompose_files(d, &mut bundle)?;
            inputs = input_records(&paths)?;
            (outcome, d.decomposition.seed())
        }
        RunSpec::Spectrogram(s) => {
            let outcome = spectrogram_files(s, &mut bundle)?;
            inputs = input_records(&[s.input.as_path()])?;
            (outcome, 0)
        }
        RunSpec::Benchmark(b) => (benchmark_files(b, &mut bundle)?, b.sweep.base_seed),
    };
    inputs.extend(extra_inputs);
    let outputs = bundle.commit(out)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        run: spec,
        inputs,
        output_dir: out.to_path_buf(),
        outputs,
    };
    manifest.write(out)?;
    Ok((outcome, manifest))
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let spec = SynthSpec {
        signal: SignalSpec {
            kind: a.kind,
            fs: a.fs,
            duration: a.duration,
            freqs: a.freqs,
        },
        snr_db: a.snr_db,
        seed: a.seed,
        wav: a.wav,
    };
    let (outcome, m) = execute(RunSpec::Synth(spec), &a.out, Vec::new())?;
    println!("wrote {} files to {}", m.outputs.len() + 1, a.out.display());
    Ok(outcome)
}

fn synth_files(s: &SynthSpec, bundle: &mut Bundle) -> Result<Outcome> {
    let (clean, truth) = synth_signal(&s.signal)?;
    let x = if s.snr_db.is_finite() {
        add_white_noise(&clean, s.snr_db, s.seed)?.0
    } else if s.snr_db == f64::INFINITY {
        clean
    } else {
        bail!("input SNR must be finite or inf, got {}", s.snr_db);
    };
    bundle.add("signal.csv", signal_csv(&x)?);
    if s.wav {
        bundle.add("signal.wav", wav_bytes(&x)?);
    }
    for (i, (_, m)) in truth.iter().enumerate() {
        bundle.add(format!("truth_{}.csv", i + 1), signal_csv(m)?);
        if s.wav {
            bundle.add(format!("truth_{}.wav", i + 1), wav_bytes(m)?);
        }
    }
    Ok(Outcome::Converged)
}

fn method_config(a: &DecomposeArgs) -> MethodConfig {
    match a.method {
        MethodArg::Srmd3d => MethodConfig::Srmd3d(DecompositionConfig {
            k_modes: a.k,
            n_features_per_mode: a.n_features,
            alpha: a.alpha,
            lambda: a.lambda,
            max_solver_iter: a.max_iter,
            seed: a.seed,
            sigma_override: a.sigma,
            ridge_alpha: a.ridge_alpha,
            max_chirp_rate: a.max_chirp_rate,
            ..Default::default()
        }),
        MethodArg::Srmd => MethodConfig::Srmd(SrmdConfig {
            n_features: a.k.max(1) * a.n_features,
            alpha: a.alpha,
            eps: a.eps,
            min_pts: a.min_pts,
            max_solver_iter: a.max_iter,
            seed: a.seed,
            sigma_override: a.sigma,
            ..Default::default()
        }),
    }
}

fn decompose(a: DecomposeArgs) -> Result<Outcome> {
    let spec = DecomposeSpec {
        input: a.input.clone(),
        channel: a.channel,
        decomposition: method_config(&a),
        truth: a.truth.clone(),
        wav: a.wav,
    };
    let (outcome, _) = execute(RunSpec::Decompose(spec), &a.out, Vec::new())?;
    if outcome == Outcome::NotConverged {
        eprintln!("warning: solver did not converge; outputs written to {}", a.out.display());
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct Report {
    method: &'static str,
    labels: Vec<String>,
    sigma2: f64,
    sigma2_estimated: Option<f64>,
    sigma_bound: f64,
    iterations: usize,
    matvecs: usize,
    exit: String,
    converged: bool,
    warnings: Vec<String>,
    truth_snr_db: Option<Vec<f64>>,
    timings: Option<StageTimings>,
    runtime_s: f64,
}

fn decompose_files(d: &DecomposeSpec, bundle: &mut Bundle) -> Result<Outcome> {
    let x = read_input(&d.input, d.channel)?;
    let truth = read_truth(&d.truth)?;

    let (modes, solution, report_base) = match &d.decomposition {
        MethodConfig::Srmd3d(cfg) => {
            let r = decompose_3d(&x, cfg)?;
            let mut buf = Vec::new();
            write_ridges_csv(&mut buf, &r.ridges)?;
            bundle.add("ridges.csv", buf);
            let mut buf = Vec::new();
            write_atoms_csv(&mut buf, &r.atoms.atoms, None)?;
            bundle.add("atoms.csv", buf);
            let report = Report {
                method: "srmd3d",
                labels: Vec::new(),
                sigma2: r.sigma2,
                sigma2_estimated: r.sigma2_estimated,
                sigma_bound: r.sigma_bound,
                iterations: 0,
                matvecs: 0,
                exit: String::new(),
                converged: false,
                warnings: r.warnings,
                truth_snr_db: None,
                runtime_s: r.timings.total(),
                timings: Some(r.timings),
            };
            (r.modes, r.solution, report)
        }
        MethodConfig::Srmd(cfg) => {
            let r = srmd_decompose(&x, cfg)?;
            let mut clusters = vec![-1i64; r.atoms.atoms.len()];
            for (i, &j) in r.retained.iter().enumerate() {
                clusters[j] = r.labeling.labels[i];
            }
            let mut buf = Vec::new();
            write_atoms_csv(&mut buf, &r.atoms.atoms, Some(&clusters))?;
            bundle.add("atoms.csv", buf);
            bundle.add("discarded.csv", signal_csv(&r.discarded)?);
            let report = Report {
                method: "srmd",
                labels: Vec::new(),
                sigma2: r.sigma2,
                sigma2_estimated: None,
                sigma_bound: (x.len() as f64 * r.sigma2).sqrt(),
                iterations: 0,
                matvecs: 0,
                exit: String::new(),
                converged: false,
                warnings: r.warnings,
                truth_snr_db: None,
                timings: None,
                runtime_s: r.runtime_s,
            };
            (r.modes, r.solution, report)
        }
    };

    for (i, (label, m)) in modes.iter().enumerate() {
        bundle.add(format!("mode_{}.csv", i + 1), signal_csv(m)?);
        if d.wav {
            bundle.add(format!("mode_{}.wav", i + 1), wav_bytes(m)?);
        }
        println!("mode {} ({label}): energy {:.6e}", i + 1, m.energy());
    }
    let residual = match modes.sum() {
        Some(s) => x.sub(&s)?,
        None => x.clone(),
    };
    bundle.add("residual.csv", signal_csv(&residual)?);
    let mut buf = Vec::new();
    solution.write_trace_csv(&mut buf)?;
    bundle.add("solver_trace.csv", buf);

    let truth_snr = match &truth {
        Some(t) => {
            let snr = matched_snr_db(t, &modes)?;
            for ((label, _), s) in t.iter().zip(&snr) {
                println!("output SNR vs {label}: {s:.2} dB");
            }
            let mean = snr.iter().sum::<f64>() / snr.len() as f64;
            println!("average output SNR: {mean:.2} dB");
            Some(snr)
        }
        None => None,
    };
    println!(
        "solver: {} iterations, {:?}, residual {:.4e} (bound {:.4e})",
        solution.iterations, solution.exit, solution.residual_norm, report_base.sigma_bound
    );
    for w in &report_base.warnings {
        eprintln!("warning: {w}");
    }

    let report = Report {
        labels: modes.labels().to_vec(),
        iterations: solution.iterations,
        matvecs: solution.matvec_count,
        exit: format!("{:?}", solution.exit),
        converged: solution.converged,
        truth_snr_db: truth_snr,
        ..report_base
    };
    bundle.add_volatile("report.json", json_bytes(&report)?);
    Ok(if solution.converged {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    })
}

fn spectrogram(a: SpectrogramArgs) -> Result<Outcome> {
    let spec = SpectrogramSpec {
        input: a.input,
        channel: a.channel,
        chirplet: a.chirplet,
        alpha: a.alpha,
        hop: a.hop,
        n_cr_bins: a.n_cr_bins,
        max_chirp_rate: a.max_chirp_rate,
        binary: a.format == TensorFormat::Bin,
    };
    let (outcome, _) = execute(RunSpec::Spectrogram(spec), &a.out, Vec::new())?;
    Ok(outcome)
}

fn axes_csv(axes: &[(&str, &[f64])]) -> Vec<u8> {
    let mut s = String::from("axis,index,value\n");
    for (name, values) in axes {
        for (i, v) in values.iter().enumerate() {
            s.push_str(&format!("{name},{i},{v:?}\n"));
        }
    }
    s.into_bytes()
}

fn spectrogram_files(s: &SpectrogramSpec, bundle: &mut Bundle) -> Result<Outcome> {
    let x = read_input(&s.input, s.channel)?;
    let fs = x.sample_rate();
    let alpha = s.alpha.unwrap_or_else(|| default_alpha(x.duration()));
    let mut grid = StftGrid::gaussian(alpha, fs)?;
    if let Some(h) = s.hop {
        grid = grid.with_hop(h);
    }
    if s.chirplet {
        let span = default_cr_span(s.max_chirp_rate, fs, x.duration(), alpha.sqrt());
        let tfc = chirplet_transform(&x, &grid, &symmetric_cr_axis(span, s.n_cr_bins))?;
        let mut buf = Vec::new();
        if s.binary {
            write_tensor_binary(&mut buf, tfc.dims(), &tfc.magnitudes())?;
            bundle.add("tfc.bin", buf);
            bundle.add(
                "axes.csv",
                axes_csv(&[("time", &tfc.time_axis), ("freq", &tfc.freq_axis), ("cr", &tfc.cr_axis)]),
            );
        } else {
            write_tfc_csv(&mut buf, &tfc)?;
            bundle.add("tfc.csv", buf);
        }
        let (nf, nk, nb) = tfc.dims();
        println!("chirplet tensor: {nf} frames x {nk} bins x {nb} chirp rates");
    } else {
        let spec = stft(&x, &grid)?;
        let mut buf = Vec::new();
        if s.binary {
            write_tensor_binary(&mut buf, (spec.n_frames, spec.n_bins, 1), &spec.magnitudes())?;
            bundle.add("spectrogram.bin", buf);
            bundle.add("axes.csv", axes_csv(&[("time", &spec.time_axis), ("freq", &spec.freq_axis)]));
        } else {
            write_spectrogram_csv(&mut buf, &spec)?;
            bundle.add("spectrogram.csv", buf);
        }
        println!("spectrogram: {} frames x {} bins", spec.n_frames, spec.n_bins);
    }
    Ok(Outcome::Converged)
}

pub fn parse_benchmark_config(text: &str) -> Result<BenchmarkConfig> {
    Ok(serde_json::from_str(text)?)
}

fn benchmark(a: BenchmarkArgs) -> Result<Outcome> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let cfg = parse_benchmark_config(&text).with_context(|| format!("malformed config {}", a.config.display()))?;
    let config_record = record(&a.config)?;
    let (outcome, _) = execute(RunSpec::Benchmark(cfg), &a.out, vec![config_record])?;
    Ok(outcome)
}

fn print_summary(table: &SweepTable) {
    println!("{:>12}  {:<8} {:>10} {:>8} {:>7} {:>7}", "input_dB", "method", "mean_dB", "std_dB", "trials", "failed");
    for r in table.summary() {
        println!(
            "{:>12}  {:<8} {:>10.2} {:>8.2} {:>7} {:>7}",
            r.input_snr_db,
            r.method.name(),
            r.mean_db,
            r.std_db,
            r.n_trials,
            r.n_failed
        );
    }
}

fn benchmark_files(cfg: &BenchmarkConfig, bundle: &mut Bundle) -> Result<Outcome> {
    let (clean, truth) = synth_signal(&cfg.signal)?;
    let table = benchmark_snr_sweep(&clean, &truth, &cfg.sweep)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf, false)?;
    bundle.add("benchmark.csv", buf);
    let mut buf = Vec::new();
    table.write_csv(&mut buf, true)?;
    bundle.add_volatile("benchmark_timed.csv", buf);
    let mut buf = Vec::new();
    table.write_summary_csv(&mut buf)?;
    bundle.add("summary.csv", buf);
    print_summary(&table);
    for f in &table.failures {
        eprintln!(
            "trial failed: {} dB, {}, trial {}: {}",
            f.input_snr_db,
            f.method.name(),
            f.trial,
            f.message
        );
    }
    Ok(Outcome::Converged)
}

fn spec_inputs(spec: &RunSpec) -> Vec<&Path> {
    match spec {
        RunSpec::Decompose(d) => {
            let mut v = vec![d.input.as_path()];
            v.extend(d.truth.iter().map(PathBuf::as_path));
            v
        }
        RunSpec::Spectrogram(s) => vec![s.input.as_path()],
        RunSpec::Synth(_) | RunSpec::Benchmark(_) => Vec::new(),
    }
}

/// Re-executes a manifest and checks every recorded output checksum.
pub fn rerun_manifest(path: &Path, out: Option<&Path>) -> Result<(Outcome, RunManifest)> {
    let recorded = RunManifest::read(path)?;
    for p in spec_inputs(&recorded.run) {
        let rec = recorded
            .inputs
            .iter()
            .find(|r| r.path == p)
            .with_context(|| format!("manifest has no checksum for input {}", p.display()))?;
        if sha256_file(p)? != rec.sha256 {
            bail!("input {} changed since the recorded run", p.display());
        }
    }
    let extra: Vec<FileRecord> = match &recorded.run {
        RunSpec::Benchmark(_) => recorded.inputs.clone(),
        _ => Vec::new(),
    };
    let out = out.unwrap_or(&recorded.output_dir).to_path_buf();
    let (outcome, fresh) = execute(recorded.run.clone(), &out, extra)?;
    let mismatched: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(name, sum)| fresh.outputs.get(*name) != Some(*sum))
        .map(|(name, _)| name)
        .collect();
    if !mismatched.is_empty() {
        bail!("rerun differs from the recorded run in: {mismatched:?}");
    }
    Ok((outcome, fresh))
}

fn rerun(a: RerunArgs) -> Result<Outcome> {
    let (outcome, m) = rerun_manifest(&a.manifest, a.out.as_deref())?;
    println!(
        "reproduced {} files byte-identically in {}",
        m.outputs.len(),
        m.output_dir.display()
    );
    Ok(outcome)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
