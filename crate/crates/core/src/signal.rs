//! Sampled signals, analytic mode descriptions and the synthetic test signals.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Uniformly sampled real time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time: 0.0,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration `m / fs` in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Sample times relative to the first sample, `i / fs`.
    pub fn relative_times(&self) -> Vec<f64> {
        time_grid(self.samples.len(), self.sample_rate)
    }

    /// Absolute sample times, `start_time + i / fs`.
    pub fn times(&self) -> Vec<f64> {
        self.relative_times()
            .into_iter()
            .map(|t| t + self.start_time)
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Mean power `energy / m`.
    pub fn power(&self) -> f64 {
        self.energy() / self.samples.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Sample-wise sum. Both signals must share length and sample rate.
    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other)?;
        Ok(Signal {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_compatible(other)?;
        Ok(Signal {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            ..self.clone()
        })
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Signal> {
        if samples.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                expected: self.samples.len(),
                actual: samples.len(),
            });
        }
        Ok(Signal {
            samples,
            sample_rate: self.sample_rate,
            start_time: self.start_time,
        })
    }

    fn check_compatible(&self, other: &Signal) -> Result<()> {
        if self.samples.len() != other.samples.len() {
            return Err(Error::LengthMismatch {
                expected: self.samples.len(),
                actual: other.samples.len(),
            });
        }
        if self.sample_rate != other.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        Ok(())
    }
}

/// `t_i = i / fs` for `i in 0..m`.
pub fn time_grid(m: usize, fs: f64) -> Vec<f64> {
    (0..m).map(|i| i as f64 / fs).collect()
}

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form description of one AM-FM mode `a(t) cos(phase(t))`.
///
/// The instantaneous frequency and chirp rate are stored analytically so
/// that oracle checks never depend on numerical differentiation.
#[derive(Clone)]
pub struct ModeSpec {
    label: String,
    amplitude: TimeFn,
    phase: TimeFn,
    inst_freq: TimeFn,
    chirp_rate: TimeFn,
}

impl fmt::Debug for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpec").field("label", &self.label).finish()
    }
}

impl ModeSpec {
    pub fn new(
        label: impl Into<String>,
        amplitude: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phase: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inst_freq: impl Fn(f64) -> f64 + Send + Sync + 'static,
        chirp_rate: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            amplitude: Arc::new(amplitude),
            phase: Arc::new(phase),
            inst_freq: Arc::new(inst_freq),
            chirp_rate: Arc::new(chirp_rate),
        }
    }

    /// Unit-amplitude tone `cos(2π f t + phase0)`.
    pub fn tone(label: impl Into<String>, freq: f64, phase0: f64) -> Self {
        Self::new(
            label,
            |_| 1.0,
            move |t| 2.0 * PI * freq * t + phase0,
            move |_| freq,
            |_| 0.0,
        )
    }

    /// Unit-amplitude linear chirp `cos(2π(f0 t + rate t²/2))`.
    pub fn linear_chirp(label: impl Into<String>, f0: f64, rate: f64) -> Self {
        Self::new(
            label,
            |_| 1.0,
            move |t| 2.0 * PI * (f0 * t + 0.5 * rate * t * t),
            move |t| f0 + rate * t,
            move |_| rate,
        )
    }

    /// Unit-amplitude sinusoidal FM mode with IF `carrier + sign·depth·cos(2π mod_freq t)`.
    pub fn sinusoidal_fm(
        label: impl Into<String>,
        carrier: f64,
        depth: f64,
        mod_freq: f64,
        sign: f64,
    ) -> Self {
        let w = 2.0 * PI * mod_freq;
        Self::new(
            label,
            |_| 1.0,
            move |t| 2.0 * PI * (carrier * t + sign * depth / w * (w * t).sin()),
            move |t| carrier + sign * depth * (w * t).cos(),
            move |t| -sign * depth * w * (w * t).sin(),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        (self.amplitude)(t)
    }

    pub fn phase(&self, t: f64) -> f64 {
        (self.phase)(t)
    }

    pub fn inst_freq(&self, t: f64) -> f64 {
        (self.inst_freq)(t)
    }

    pub fn chirp_rate(&self, t: f64) -> f64 {
        (self.chirp_rate)(t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude(t) * self.phase(t).cos()
    }
}

/// Ground-truth or estimated modes sharing one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    modes: Vec<Signal>,
    labels: Vec<String>,
}

impl ModeSet {
    pub fn new(modes: Vec<Signal>, labels: Vec<String>) -> Result<Self> {
        if modes.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: modes.len(),
                actual: labels.len(),
            });
        }
        if let Some(first) = modes.first() {
            for m in &modes[1..] {
                first.check_compatible(m)?;
            }
        }
        Ok(Self { modes, labels })
    }

    pub fn empty() -> Self {
        Self {
            modes: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn modes(&self) -> &[Signal] {
        &self.modes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Signal)> {
        self.labels.iter().map(String::as_str).zip(&self.modes)
    }

    /// Sample-wise sum of all modes, or `None` for an empty set.
    pub fn sum(&self) -> Option<Signal> {
        let first = self.modes.first()?;
        let mut acc = vec![0.0; first.len()];
        for m in &self.modes {
            for (a, v) in acc.iter_mut().zip(m.samples()) {
                *a += v;
            }
        }
        first.with_samples(acc).ok()
    }
}

/// Samples `a(t_i) cos(phase(t_i))` at `t_i = i / fs`.
pub fn synth_mode(spec: &ModeSpec, m: usize, fs: f64) -> Result<Signal> {
    if m == 0 {
        return Err(Error::InvalidArgument("mode needs at least one sample".into()));
    }
    let times = time_grid(m, fs);
    let max_if = times
        .iter()
        .map(|&t| spec.inst_freq(t).abs())
        .fold(0.0, f64::max);
    let nyquist = fs / 2.0;
    if max_if >= nyquist {
        return Err(Error::Nyquist {
            max_if,
            fs,
            nyquist,
        });
    }
    Signal::new(times.iter().map(|&t| spec.value(t)).collect(), fs)
}

fn synth_set(specs: &[ModeSpec], fs: f64, duration: f64) -> Result<(Signal, ModeSet)> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let m = (duration * fs).round() as usize;
    let modes = specs
        .iter()
        .map(|s| synth_mode(s, m, fs))
        .collect::<Result<Vec<_>>>()?;
    let labels = specs.iter().map(|s| s.label().to_string()).collect();
    let set = ModeSet::new(modes, labels)?;
    let sum = set.sum().expect("non-empty mode set");
    Ok((sum, set))
}

/// The two crossing sinusoidal-FM modes `cos(2π(250t ∓ 200/(7π) sin 7πt))`.
pub fn paper_simulated_modes() -> Vec<ModeSpec> {
    vec![
        ModeSpec::sinusoidal_fm("m1", 250.0, 200.0, 3.5, -1.0),
        ModeSpec::sinusoidal_fm("m2", 250.0, 200.0, 3.5, 1.0),
    ]
}

/// Sum of the oscillating-IF pair and its ground-truth modes.
pub fn paper_simulated_signal(fs: f64, duration: f64) -> Result<(Signal, ModeSet)> {
    synth_set(&paper_simulated_modes(), fs, duration)
}

/// `cos(2π(400t − 100t²))` and `cos(2π(200t + 100t²))`, crossing at t = 0.5 s.
pub fn crossover_chirp_modes() -> Vec<ModeSpec> {
    vec![
        ModeSpec::linear_chirp("s1", 400.0, -200.0),
        ModeSpec::linear_chirp("s2", 200.0, 200.0),
    ]
}

pub fn crossover_chirp_pair(fs: f64, duration: f64) -> Result<(Signal, ModeSet)> {
    synth_set(&crossover_chirp_modes(), fs, duration)
}

/// Unit-amplitude stationary tones.
pub fn tones(freqs: &[f64], fs: f64, duration: f64) -> Result<(Signal, ModeSet)> {
    let specs: Vec<ModeSpec> = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| ModeSpec::tone(format!("tone{}", i + 1), f, 0.0))
        .collect();
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no tone frequencies given".into()));
    }
    synth_set(&specs, fs, duration)
}

/// Adds seeded white Gaussian noise scaled so the realized SNR equals `snr_db`
/// exactly. `+inf` returns the input untouched. Returns the per-sample noise
/// variance `‖e‖² / m`.
pub fn add_white_noise(x: &Signal, snr_db: f64, seed: u64) -> Result<(Signal, f64)> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    let energy = x.energy();
    if energy <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    if snr_db == f64::INFINITY {
        return Ok((x.clone(), 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..x.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw_energy: f64 = raw.iter().map(|v| v * v).sum();
    let target = energy / 10f64.powf(snr_db / 10.0);
    let scale = (target / raw_energy).sqrt();
    let noisy = x
        .samples()
        .iter()
        .zip(&raw)
        .map(|(s, e)| s + scale * e)
        .collect();
    Ok((x.with_samples(noisy)?, target / x.len() as f64))
}

/// `20 log10(‖reference‖ / ‖reference − estimate‖)`; `+inf` on exact match.
pub fn snr_db(reference: &Signal, estimate: &Signal) -> Result<f64> {
    snr_db_slices(reference.samples(), estimate.samples())
}

pub fn snr_db_slices(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let num: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum::<f64>()
        .sqrt();
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (num / den).log10())
}

/// Per-reference SNR under the assignment of estimates to references that
/// maximizes the total SNR. References left without an estimate are scored
/// against silence (0 dB).
pub fn matched_snr_db(references: &ModeSet, estimates: &ModeSet) -> Result<Vec<f64>> {
    let k = references.len();
    let table = references
        .modes()
        .iter()
        .map(|r| estimates.modes().iter().map(|e| snr_db(r, e)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut best = (f64::NEG_INFINITY, vec![None; k]);
    let mut current = vec![None; k];
    let mut used = vec![false; estimates.len()];
    assign(&table, 0, 0.0, &mut current, &mut used, &mut best);
    Ok(best
        .1
        .iter()
        .zip(&table)
        .map(|(a, row)| a.map_or(0.0, |j| row[j]))
        .collect())
}

fn assign(
    table: &[Vec<f64>],
    i: usize,
    total: f64,
    current: &mut [Option<usize>],
    used: &mut [bool],
    best: &mut (f64, Vec<Option<usize>>),
) {
    if i == table.len() {
        if total > best.0 {
            *best = (total, current.to_vec());
        }
        return;
    }
    let free = used.iter().filter(|u| !**u).count();
    if free < table.len() - i {
        current[i] = None;
        assign(table, i + 1, total, current, used, best);
    }
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            current[i] = Some(j);
            assign(table, i + 1, total + table[i][j].min(1e3), current, used, best);
            used[j] = false;
        }
    }
    current[i] = None;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_mode_values_at_known_times() {
        let specs = paper_simulated_modes();
        assert_eq!(specs[0].value(0.0), 1.0);
        // independent evaluation of cos(2π(250·0.5 + 200/(7π)·sin(3.5π)))
        let expected = (2.0 * PI * (125.0 + 200.0 / (7.0 * PI) * (3.5 * PI).sin())).cos();
        let sig = synth_mode(&specs[1], 1024, 1024.0).unwrap();
        assert!((sig.samples()[512] - expected).abs() < 1e-9);
        assert!((expected - (2.0 * PI * (125.0 - 200.0 / (7.0 * PI))).cos()).abs() < 1e-9);
    }

    #[test]
    fn crossover_pair_starts_at_one() {
        let (_, modes) = crossover_chirp_pair(1024.0, 1.0).unwrap();
        assert_eq!(modes.modes()[0].samples()[0], 1.0);
    }

    #[test]
    fn analytic_if_and_cr() {
        let specs = paper_simulated_modes();
        assert!((specs[0].inst_freq(0.0) - 50.0).abs() < 1e-12);
        assert!((specs[1].inst_freq(0.0) - 450.0).abs() < 1e-12);
        assert_eq!(specs[0].chirp_rate(0.0), 0.0);
        let pair = crossover_chirp_modes();
        assert!((pair[0].inst_freq(0.5) - 300.0).abs() < 1e-12);
        assert!((pair[1].inst_freq(0.5) - 300.0).abs() < 1e-12);
        assert_eq!(pair[1].chirp_rate(0.1), 200.0);
        assert_eq!(pair[0].chirp_rate(0.9), -200.0);
    }

    #[test]
    fn chirp_rate_matches_finite_difference_of_if() {
        let mut specs = paper_simulated_modes();
        specs.extend(crossover_chirp_modes());
        let h = 1e-6;
        for spec in &specs {
            for i in 1..100 {
                let t = i as f64 / 100.0;
                let fd = (spec.inst_freq(t + h) - spec.inst_freq(t - h)) / (2.0 * h);
                let cr = spec.chirp_rate(t);
                let err = (fd - cr).abs() / cr.abs().max(1.0);
                assert!(err < 1e-4, "{} at {t}: fd {fd} vs {cr}", spec.label());
            }
        }
    }

    #[test]
    fn inst_freq_matches_phase_derivative() {
        for spec in paper_simulated_modes() {
            let h = 1e-7;
            for i in 1..50 {
                let t = i as f64 / 50.0;
                let fd = (spec.phase(t + h) - spec.phase(t - h)) / (2.0 * h) / (2.0 * PI);
                assert!((fd - spec.inst_freq(t)).abs() < 1e-4 * spec.inst_freq(t));
            }
        }
    }

    #[test]
    fn nyquist_violation_names_max_if() {
        let spec = ModeSpec::tone("t", 600.0, 0.0);
        match synth_mode(&spec, 100, 1024.0) {
            Err(Error::Nyquist { max_if, .. }) => assert_eq!(max_if, 600.0),
            other => panic!("expected Nyquist error, got {other:?}"),
        }
    }

    #[test]
    fn mode_energy_is_half_length() {
        let (_, modes) = paper_simulated_signal(1024.0, 1.0).unwrap();
        for m in modes.modes() {
            assert_eq!(m.len(), 1024);
            assert!((m.energy() / 512.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn noise_realizes_requested_snr() {
        let (x, _) = paper_simulated_signal(1024.0, 1.0).unwrap();
        for (snr, seed) in [(0.0, 1), (10.0, 2), (-5.0, 3)] {
            let (y, var) = add_white_noise(&x, snr, seed).unwrap();
            let e = y.sub(&x).unwrap();
            let realized = 10.0 * (x.energy() / e.energy()).log10();
            assert!((realized - snr).abs() < 0.2);
            assert!((var - e.energy() / 1024.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let (x, _) = crossover_chirp_pair(1024.0, 1.0).unwrap();
        let a = add_white_noise(&x, 5.0, 42).unwrap();
        let b = add_white_noise(&x, 5.0, 42).unwrap();
        assert_eq!(a.0.samples(), b.0.samples());
        let c = add_white_noise(&x, 5.0, 43).unwrap();
        assert_ne!(a.0.samples(), c.0.samples());
    }

    #[test]
    fn infinite_snr_is_identity() {
        let (x, _) = crossover_chirp_pair(1024.0, 1.0).unwrap();
        let (y, var) = add_white_noise(&x, f64::INFINITY, 0).unwrap();
        assert_eq!(y, x);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn zero_energy_rejected() {
        let z = Signal::zeros(16, 100.0).unwrap();
        assert!(matches!(add_white_noise(&z, 0.0, 0), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn snr_examples() {
        let r = Signal::new(vec![1.0, 0.0], 1.0).unwrap();
        let e = Signal::new(vec![0.9, 0.0], 1.0).unwrap();
        assert!((snr_db(&r, &e).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(snr_db(&r, &r).unwrap(), f64::INFINITY);
        let z = Signal::zeros(2, 1.0).unwrap();
        assert_eq!(snr_db(&r, &z).unwrap(), 0.0);
        let short = Signal::new(vec![1.0], 1.0).unwrap();
        assert!(snr_db(&r, &short).is_err());
    }

    #[test]
    fn snr_is_scale_invariant() {
        let r = Signal::new(vec![1.0, -2.0, 0.5], 1.0).unwrap();
        let e = Signal::new(vec![0.8, -2.1, 0.7], 1.0).unwrap();
        let a = snr_db(&r, &e).unwrap();
        let b = snr_db(&r.scaled(7.5), &e.scaled(7.5)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn signal_rejects_bad_input() {
        assert!(Signal::new(vec![], 1.0).is_err());
        assert!(Signal::new(vec![1.0], 0.0).is_err());
        assert!(Signal::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn matched_snr_undoes_permutation() {
        let (_, truth) = crossover_chirp_pair(1024.0, 0.25).unwrap();
        let swapped = ModeSet::new(
            truth.modes().iter().rev().cloned().collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let s = matched_snr_db(&truth, &swapped).unwrap();
        assert!(s.iter().all(|v| v.is_infinite()));
        let one = ModeSet::new(vec![truth.modes()[1].clone()], vec!["a".into()]).unwrap();
        let s = matched_snr_db(&truth, &one).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1].is_infinite());
    }
}
