//! Output-SNR sweep over input noise levels and per-iteration cost probe.

use std::io::{self, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baseline::{srmd_decompose, SrmdConfig};
use crate::error::{Error, Result};
use crate::features::{build_dictionary, sample_uniform_2d, DEFAULT_MEMORY_CAP};
use crate::pipeline::{decompose_3d, default_alpha, derive_seeds, DecompositionConfig};
use crate::signal::{add_white_noise, matched_snr_db, time_grid, ModeSet, Signal};
use crate::solver::{solve_lasso, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Srmd3d,
    Srmd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Srmd3d => "srmd3d",
            Method::Srmd => "srmd",
        }
    }
}

/// Serde for dB values that may be infinite; `±inf` is written as the strings
/// `"inf"` and `"-inf"` since JSON has no infinity.
pub mod db_serde {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_infinite() {
            Repr::Text(if v > 0.0 { "inf".into() } else { "-inf".into() })
        } else {
            Repr::Num(v)
        }
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(with = "db_serde::list")]
    pub input_snrs_db: Vec<f64>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub decomposition: DecompositionConfig,
    pub baseline: SrmdConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            input_snrs_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_trials: 10,
            base_seed: 0,
            methods: vec![Method::Srmd3d, Method::Srmd],
            decomposition: DecompositionConfig::default(),
            baseline: SrmdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub input_snr_db: f64,
    pub method: Method,
    pub trial: usize,
    /// Index of the ground-truth mode.
    pub mode: usize,
    pub output_snr_db: f64,
    pub runtime_s: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub input_snr_db: f64,
    pub method: Method,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub input_snr_db: f64,
    pub method: Method,
    /// Mean and population std of the per-trial average output SNR.
    pub mean_db: f64,
    pub std_db: f64,
    pub n_trials: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<TrialFailure>,
}

impl SweepTable {
    /// Rows ordered by level, method, trial and mode. `runtime_s` is left
    /// empty unless requested so that reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, mut w: W, with_runtime: bool) -> io::Result<()> {
        writeln!(w, "input_snr_db,method,trial,mode,output_snr_db,runtime_s,converged")?;
        for r in &self.rows {
            let runtime = if with_runtime { format!("{:.6}", r.runtime_s) } else { String::new() };
            writeln!(
                w,
                "{:?},{},{},{},{:?},{},{}",
                r.input_snr_db,
                r.method.name(),
                r.trial,
                r.mode,
                r.output_snr_db,
                runtime,
                r.converged
            )?;
        }
        Ok(())
    }

    pub fn failure_rate(&self) -> f64 {
        let trials = self.failures.len() + self.trial_keys().len();
        if trials == 0 {
            0.0
        } else {
            self.failures.len() as f64 / trials as f64
        }
    }

    fn trial_keys(&self) -> Vec<(u64, Method, usize)> {
        let mut keys: Vec<_> = self.rows.iter().map(|r| (r.input_snr_db.to_bits(), r.method, r.trial)).collect();
        keys.dedup();
        keys
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out: Vec<SummaryRow> = Vec::new();
        let mut levels: Vec<(f64, Method)> = Vec::new();
        for r in &self.rows {
            if !levels.iter().any(|&(s, m)| s.to_bits() == r.input_snr_db.to_bits() && m == r.method) {
                levels.push((r.input_snr_db, r.method));
            }
        }
        for f in &self.failures {
            if !levels.iter().any(|&(s, m)| s.to_bits() == f.input_snr_db.to_bits() && m == f.method) {
                levels.push((f.input_snr_db, f.method));
            }
        }
        for (snr, method) in levels {
            let same = |s: f64, m: Method| s.to_bits() == snr.to_bits() && m == method;
            let mut per_trial: Vec<(usize, f64, usize)> = Vec::new();
            for r in self.rows.iter().filter(|r| same(r.input_snr_db, r.method)) {
                match per_trial.iter_mut().find(|t| t.0 == r.trial) {
                    Some(t) => {
                        t.1 += r.output_snr_db;
                        t.2 += 1;
                    }
                    None => per_trial.push((r.trial, r.output_snr_db, 1)),
                }
            }
            let values: Vec<f64> = per_trial.iter().map(|t| t.1 / t.2 as f64).collect();
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n.max(1) as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
            out.push(SummaryRow {
                input_snr_db: snr,
                method,
                mean_db: if n == 0 { f64::NAN } else { mean },
                std_db: var.sqrt(),
                n_trials: n,
                n_failed: self.failures.iter().filter(|f| same(f.input_snr_db, f.method)).count(),
            });
        }
        out
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "input_snr_db,method,mean_output_snr_db,std_output_snr_db,n_trials,n_failed")?;
        for s in self.summary() {
            writeln!(
                w,
                "{:?},{},{:?},{:?},{},{}",
                s.input_snr_db,
                s.method.name(),
                s.mean_db,
                s.std_db,
                s.n_trials,
                s.n_failed
            )?;
        }
        Ok(())
    }
}

/// Runs every method on `n_trials` fresh noise draws per input SNR. Noise and
/// feature seeds derive from `base_seed`, level index and trial, so a rerun
/// reproduces every output value.
pub fn benchmark_snr_sweep(clean: &Signal, truth: &ModeSet, cfg: &SweepConfig) -> Result<SweepTable> {
    if cfg.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    if cfg.input_snrs_db.is_empty() || cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("empty sweep".into()));
    }
    let seeds = derive_seeds(cfg.base_seed, cfg.input_snrs_db.len() * cfg.n_trials);
    let mut table = SweepTable::default();
    for (li, &snr) in cfg.input_snrs_db.iter().enumerate() {
        for trial in 0..cfg.n_trials {
            let seed = seeds[li * cfg.n_trials + trial];
            let noisy = add_white_noise(clean, snr, seed).map(|(y, _)| y);
            for &method in &cfg.methods {
                let start = Instant::now();
                let outcome = noisy.as_ref().map_err(|e| e.to_string()).and_then(|y| {
                    run_method(method, y, cfg, seed).map_err(|e| e.to_string())
                });
                let runtime_s = start.elapsed().as_secs_f64();
                match outcome.and_then(|(modes, converged)| {
                    matched_snr_db(truth, &modes).map(|s| (s, converged)).map_err(|e| e.to_string())
                }) {
                    Ok((snrs, converged)) => {
                        for (mode, output_snr_db) in snrs.into_iter().enumerate() {
                            table.rows.push(SweepRow {
                                input_snr_db: snr,
                                method,
                                trial,
                                mode,
                                output_snr_db,
                                runtime_s,
                                converged,
                            });
                        }
                    }
                    Err(message) => table.failures.push(TrialFailure {
                        input_snr_db: snr,
                        method,
                        trial,
                        message,
                    }),
                }
            }
        }
    }
    Ok(table)
}

fn run_method(method: Method, y: &Signal, cfg: &SweepConfig, seed: u64) -> Result<(ModeSet, bool)> {
    match method {
        Method::Srmd3d => {
            let c = DecompositionConfig { seed, ..cfg.decomposition.clone() };
            decompose_3d(y, &c).map(|r| (r.modes, r.solution.converged))
        }
        Method::Srmd => {
            let c = SrmdConfig { seed, ..cfg.baseline.clone() };
            srmd_decompose(y, &c).map(|r| (r.modes, r.solution.converged))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRow {
    pub m: usize,
    pub kn: usize,
    pub iterations: usize,
    pub matvecs: usize,
    /// Best of the repeats.
    pub per_iteration_s: f64,
}

/// Times solver runs of at most `iterations` iterations on uniform-atom
/// dictionaries at `fs = 1024` for every `(m, KN)` cell. Repeats are
/// interleaved across the cells of one `m` and each cell keeps its fastest run.
pub fn complexity_probe(
    m_values: &[usize],
    kn_values: &[usize],
    iterations: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<ComplexityRow>> {
    if iterations == 0 || repeats == 0 {
        return Err(Error::InvalidArgument("iterations and repeats must be at least 1".into()));
    }
    let fs = 1024.0;
    let opts = SolverOptions {
        max_iter: iterations,
        tol_gap: 0.0,
        ls_tol: 0.0,
        bp_tol: 0.0,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for &m in m_values {
        let times = time_grid(m, fs);
        let duration = m as f64 / fs;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let matrices = kn_values
            .iter()
            .map(|&kn| {
                let atoms = sample_uniform_2d(kn, duration, fs / 2.0, seed);
                build_dictionary(&[atoms], &times, default_alpha(duration), DEFAULT_MEMORY_CAP).map(|(_, a)| a)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cells: Vec<ComplexityRow> = kn_values
            .iter()
            .map(|&kn| ComplexityRow {
                m,
                kn,
                iterations: 0,
                matvecs: 0,
                per_iteration_s: f64::INFINITY,
            })
            .collect();
        for _ in 0..repeats {
            for (cell, matrix) in cells.iter_mut().zip(&matrices) {
                let start = Instant::now();
                let sol = solve_lasso(matrix, &b, 1e3, None, &opts)?;
                let per = start.elapsed().as_secs_f64() / sol.iterations.max(1) as f64;
                if per < cell.per_iteration_s {
                    cell.per_iteration_s = per;
                    cell.iterations = sol.iterations;
                    cell.matvecs = sol.matvec_count;
                }
            }
        }
        rows.extend(cells);
    }
    Ok(rows)
}

/// Per-iteration time ratios between consecutive `KN` values at equal `m`.
pub fn doubling_ratios(rows: &[ComplexityRow]) -> Vec<(usize, usize, usize, f64)> {
    rows.windows(2)
        .filter(|w| w[0].m == w[1].m)
        .map(|w| (w[0].m, w[0].kn, w[1].kn, w[1].per_iteration_s / w[0].per_iteration_s))
        .collect()
}

pub fn write_complexity_csv<W: Write>(rows: &[ComplexityRow], mut w: W) -> io::Result<()> {
    writeln!(w, "m,kn,iterations,matvecs,per_iteration_s")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:e}", r.m, r.kn, r.iterations, r.matvecs, r.per_iteration_s)?;
    }
    Ok(())
}
