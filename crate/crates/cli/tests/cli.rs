use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hound::{SampleFormat, WavSpec, WavWriter};
use srmd3d::io::{read_signal_csv, read_tensor_binary};
use srmd3d::signal::{matched_snr_db, paper_simulated_modes, ModeSet};
use srmd3d_cli::manifest::RunManifest;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srmd3d"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: PathBuf) -> srmd3d::signal::Signal {
    read_signal_csv(fs::File::open(&path).unwrap()).unwrap()
}

fn synth(dir: &Path, args: &[&str]) {
    let o = run(&[&["synth"], args].concat(), dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_simulated_signal_writes_truth_and_manifest() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["paper-sim", "--fs", "1024", "--duration", "1", "--out", "s"]);
    let x = read_csv(tmp.path().join("s/signal.csv"));
    assert_eq!(x.len(), 1024);
    assert_eq!(x.sample_rate(), 1024.0);
    let t1 = read_csv(tmp.path().join("s/truth_1.csv"));
    let t2 = read_csv(tmp.path().join("s/truth_2.csv"));
    let sum = t1.add(&t2).unwrap();
    assert_eq!(sum.samples(), x.samples());
    assert!(!tmp.path().join("s/truth_3.csv").exists());
    let m = RunManifest::read(&tmp.path().join("s/manifest.json")).unwrap();
    assert_eq!(m.outputs.len(), 3);
}

#[test]
fn synth_records_infinite_snr() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["tones", "--snr-db", "inf", "--out", "s"]);
    let text = fs::read_to_string(tmp.path().join("s/manifest.json")).unwrap();
    assert!(text.contains("\"snr_db\": \"inf\""), "{text}");
    let x = read_csv(tmp.path().join("s/signal.csv"));
    let t1 = read_csv(tmp.path().join("s/truth_1.csv"));
    let t2 = read_csv(tmp.path().join("s/truth_2.csv"));
    assert_eq!(t1.add(&t2).unwrap().samples(), x.samples());
}

#[test]
fn noisy_synth_is_seeded() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["crossover-pair", "--snr-db", "5", "--seed", "3", "--out", "a"]);
    synth(tmp.path(), &["crossover-pair", "--snr-db", "5", "--seed", "3", "--out", "b"]);
    synth(tmp.path(), &["crossover-pair", "--snr-db", "5", "--seed", "4", "--out", "c"]);
    let a = fs::read(tmp.path().join("a/signal.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/signal.csv")).unwrap());
    assert_ne!(a, fs::read(tmp.path().join("c/signal.csv")).unwrap());
}

#[test]
fn missing_input_exits_one_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["decompose", "absent.csv", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.csv"));
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn decompose_reports_snr_against_truth_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["crossover-pair", "--out", "s"]);
    let o = run(
        &[
            "decompose",
            "s/signal.csv",
            "--method",
            "srmd3d",
            "--k",
            "2",
            "--n-features",
            "1000",
            "--alpha",
            "0.0025",
            "--truth",
            "s/truth_1.csv",
            "s/truth_2.csv",
            "--wav",
            "--out",
            "d",
        ],
        tmp.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("output SNR vs truth_1"), "{out}");
    assert!(out.contains("average output SNR"), "{out}");
    for f in [
        "mode_1.csv",
        "mode_2.csv",
        "mode_1.wav",
        "residual.csv",
        "ridges.csv",
        "atoms.csv",
        "solver_trace.csv",
        "report.json",
        "manifest.json",
    ] {
        assert!(tmp.path().join("d").join(f).exists(), "{f}");
    }
    let truth = ModeSet::new(
        vec![read_csv(tmp.path().join("s/truth_1.csv")), read_csv(tmp.path().join("s/truth_2.csv"))],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let est = ModeSet::new(
        vec![read_csv(tmp.path().join("d/mode_1.csv")), read_csv(tmp.path().join("d/mode_2.csv"))],
        vec!["1".into(), "2".into()],
    )
    .unwrap();
    let snr = matched_snr_db(&truth, &est).unwrap();
    assert!(snr.iter().all(|&s| s > 20.0), "{snr:?}");

    let r = run(&["rerun", "d/manifest.json", "--out", "d2"], tmp.path());
    assert_eq!(r.status.code(), o.status.code(), "{}", stderr(&r));
    for f in ["mode_1.csv", "mode_2.csv", "ridges.csv", "atoms.csv", "solver_trace.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("d").join(f)).unwrap(),
            fs::read(tmp.path().join("d2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn rerun_refuses_changed_input() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["tones", "--out", "s"]);
    let o = run(
        &["decompose", "s/signal.csv", "--method", "srmd", "--n-features", "300", "--max-iter", "50", "--out", "d"],
        tmp.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    assert!(tmp.path().join("d/discarded.csv").exists());
    let mut text = fs::read_to_string(tmp.path().join("s/signal.csv")).unwrap();
    text = text.replacen("time,value\n0.0,", "time,value\n0.0,1", 1);
    fs::write(tmp.path().join("s/signal.csv"), text).unwrap();
    let r = run(&["rerun", "d/manifest.json", "--out", "d2"], tmp.path());
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("changed"), "{}", stderr(&r));
}

#[test]
fn environment_supplies_defaults() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["tones", "--out", "s"]);
    let o = bin()
        .args(["decompose", "s/signal.csv", "--max-iter", "20", "--out", "d"])
        .env("SRMD3D_N_FEATURES", "50")
        .env("SRMD3D_SEED", "9")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let m = RunManifest::read(&tmp.path().join("d/manifest.json")).unwrap();
    assert_eq!(m.seed, 9);
    let text = fs::read_to_string(tmp.path().join("d/manifest.json")).unwrap();
    assert!(text.contains("\"n_features_per_mode\": 50"), "{text}");
}

fn write_wav(path: &Path, spec: WavSpec, frames: &[Vec<i32>]) {
    let mut w = WavWriter::create(path, spec).unwrap();
    for frame in frames {
        for &s in frame {
            match (spec.sample_format, spec.bits_per_sample) {
                (SampleFormat::Int, 8) => w.write_sample(s as i8).unwrap(),
                (SampleFormat::Int, 16) => w.write_sample(s as i16).unwrap(),
                (SampleFormat::Int, _) => w.write_sample(s).unwrap(),
                (SampleFormat::Float, _) => w.write_sample(s as f32 / 1000.0).unwrap(),
            }
        }
    }
    w.finalize().unwrap();
}

fn tone_frames(n: usize, channels: usize, amp: f64) -> Vec<Vec<i32>> {
    (0..n)
        .map(|i| {
            (0..channels)
                .map(|c| (amp * (2.0 * std::f64::consts::PI * (50.0 + 50.0 * c as f64) * i as f64 / 1024.0).sin()) as i32)
                .collect()
        })
        .collect()
}

fn wav_spec(channels: u16, bits: u16, format: SampleFormat) -> WavSpec {
    WavSpec {
        channels,
        sample_rate: 1024,
        bits_per_sample: bits,
        sample_format: format,
    }
}

#[test]
fn wav_input_encodings() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    write_wav(&p.join("pcm16.wav"), wav_spec(1, 16, SampleFormat::Int), &tone_frames(512, 1, 10000.0));
    write_wav(&p.join("pcm32.wav"), wav_spec(1, 32, SampleFormat::Int), &tone_frames(512, 1, 1e9));
    write_wav(&p.join("float.wav"), wav_spec(1, 32, SampleFormat::Float), &tone_frames(512, 1, 500.0));
    write_wav(&p.join("pcm24.wav"), wav_spec(1, 24, SampleFormat::Int), &tone_frames(512, 1, 1e6));
    write_wav(&p.join("pcm8.wav"), wav_spec(1, 8, SampleFormat::Int), &tone_frames(512, 1, 100.0));
    write_wav(&p.join("stereo.wav"), wav_spec(2, 16, SampleFormat::Int), &tone_frames(512, 2, 10000.0));

    for f in ["pcm16.wav", "pcm32.wav", "float.wav"] {
        let o = run(&["spectrogram", f, "--out", &format!("out_{f}")], p);
        assert!(o.status.success(), "{f}: {}", stderr(&o));
    }
    for (f, name) in [("pcm24.wav", "24-bit integer PCM"), ("pcm8.wav", "8-bit integer PCM")] {
        let o = run(&["spectrogram", f, "--out", "x"], p);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains(name), "{}", stderr(&o));
        assert!(!p.join("x").exists());
    }
    let o = run(&["spectrogram", "stereo.wav", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--channel"));
    let o = run(&["spectrogram", "stereo.wav", "--channel", "1", "--out", "st"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["spectrogram", "stereo.wav", "--channel", "2", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn wav_output_round_trips_through_input() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["tones", "--wav", "--out", "s"]);
    let o = run(&["spectrogram", "s/signal.wav", "--out", "w"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["spectrogram", "s/signal.csv", "--out", "c"], tmp.path());
    assert!(o.status.success());
    let a = fs::read_to_string(tmp.path().join("w/spectrogram.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("c/spectrogram.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
}

fn axis(text: &str, name: &str) -> Vec<f64> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0] == name).then(|| f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulated_spectrogram_argmax_follows_the_two_ifs() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["paper-sim", "--out", "s"]);
    let o = run(&["spectrogram", "s/signal.csv", "--format", "bin", "--out", "g"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (dims, mag) = read_tensor_binary(fs::File::open(tmp.path().join("g/spectrogram.bin")).unwrap()).unwrap();
    let axes = fs::read_to_string(tmp.path().join("g/axes.csv")).unwrap();
    let times = axis(&axes, "time");
    let freqs = axis(&axes, "freq");
    assert_eq!((dims.0, dims.1, dims.2), (times.len(), freqs.len(), 1));
    let modes = paper_simulated_modes();
    let df = freqs[1] - freqs[0];
    let n = dims.0;
    let interior = n / 10..n - n / 10;
    let hits = interior
        .clone()
        .filter(|&f| {
            let row = &mag[f * dims.1..(f + 1) * dims.1];
            let k = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            modes.iter().any(|m| (m.inst_freq(times[f]) - freqs[k]).abs() <= 2.0 * df)
        })
        .count();
    assert!(hits as f64 >= 0.9 * interior.len() as f64, "{hits} of {}", interior.len());
}

#[test]
fn chirplet_export_peaks_twice_at_the_crossing() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["crossover-pair", "--out", "s"]);
    let o = run(
        &["spectrogram", "s/signal.csv", "--chirplet", "--alpha", "0.0025", "--max-chirp-rate", "300", "--format", "bin", "--out", "t"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (dims, mag) = read_tensor_binary(fs::File::open(tmp.path().join("t/tfc.bin")).unwrap()).unwrap();
    let axes = fs::read_to_string(tmp.path().join("t/axes.csv")).unwrap();
    let times = axis(&axes, "time");
    let crs = axis(&axes, "cr");
    let f = (0..times.len()).min_by(|&a, &b| (times[a] - 0.5).abs().total_cmp(&(times[b] - 0.5).abs())).unwrap();
    let (nk, nb) = (dims.1, dims.2);
    let slice = &mag[f * nk * nb..(f + 1) * nk * nb];
    let best_for = |sign: f64| {
        (0..nk * nb)
            .filter(|i| crs[i % nb] * sign > 0.0)
            .max_by(|&a, &b| slice[a].total_cmp(&slice[b]))
            .unwrap()
    };
    let (up, down) = (best_for(1.0), best_for(-1.0));
    assert!((crs[up % nb] - 200.0).abs() <= 2.0 * (crs[1] - crs[0]), "{}", crs[up % nb]);
    assert!((crs[down % nb] + 200.0).abs() <= 2.0 * (crs[1] - crs[0]), "{}", crs[down % nb]);
    let global = slice.iter().cloned().fold(0.0, f64::max);
    assert!(slice[up] > 0.8 * global && slice[down] > 0.8 * global);
}

#[test]
fn empty_input_exits_one() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("empty.csv"), "time,value\n").unwrap();
    let o = run(&["spectrogram", "empty.csv", "--out", "g"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("g").exists());
}

const BENCH: &str = r#"{
  "signal": {"kind": "paper-sim"},
  "sweep": {
    "input_snrs_db": [0, 10, 20],
    "n_trials": 5,
    "base_seed": 2,
    "decomposition": {"n_features_per_mode": 100, "max_solver_iter": 50},
    "baseline": {"n_features": 200, "max_solver_iter": 50}
  }
}"#;

#[test]
fn benchmark_shape_and_rerun() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("b.json"), BENCH).unwrap();
    let o = run(&["benchmark", "b.json", "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean_dB"));
    let csv = fs::read_to_string(tmp.path().join("r/benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 15);
    let summary = fs::read_to_string(tmp.path().join("r/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 6);
    assert!(tmp.path().join("r/benchmark_timed.csv").exists());

    let r = run(&["rerun", "r/manifest.json", "--out", "r2"], tmp.path());
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(csv, fs::read_to_string(tmp.path().join("r2/benchmark.csv")).unwrap());
}

#[test]
fn malformed_benchmark_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("b.json"), "{\n  \"signal\": {\"kind\": \"paper-sim\"},\n  \"sweep\": {\"n_trails\": 2}\n}").unwrap();
    let o = run(&["benchmark", "b.json", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("n_trails") && err.contains("line 3"), "{err}");
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn unknown_signal_kind_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["synth", "sawtooth", "--out", "s"], tmp.path());
    assert!(!o.status.success());
    assert!(!tmp.path().join("s").exists());
}
