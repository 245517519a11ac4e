//! Gaussian-window STFT, its least-squares inverse, and the chirplet transform.
//!
//! Frames are centred on samples `f * hop` and zero-padded at both ends, so
//! every sample is covered by at least one window whenever `hop <= window_len`.
//! Phases use absolute time `exp(-j 2π ξ t_n)` with `t_n = n / fs`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Analysis grid for a truncated Gaussian window `exp(-t²/(2α))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftGrid {
    pub hop: usize,
    pub window_len: usize,
    /// Gaussian variance α in s².
    pub alpha: f64,
    pub sample_rate: f64,
}

impl StftGrid {
    /// Window truncated at ±3 standard deviations, rounded to odd length,
    /// with `hop = window_len / 8`.
    pub fn gaussian(alpha: f64, sample_rate: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "window variance must be positive, got {alpha}"
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let half = (3.0 * alpha.sqrt() * sample_rate).round().max(1.0) as usize;
        let window_len = 2 * half + 1;
        Ok(Self {
            hop: (window_len / 8).max(1),
            window_len,
            alpha,
            sample_rate,
        })
    }

    pub fn with_hop(mut self, hop: usize) -> Self {
        self.hop = hop;
        self
    }

    /// Real-spectrum bin count `window_len / 2 + 1`.
    pub fn freq_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate / self.window_len as f64
    }

    pub fn half_len(&self) -> usize {
        self.window_len / 2
    }

    /// Window standard deviation in seconds.
    pub fn sigma_s(&self) -> f64 {
        self.alpha.sqrt()
    }

    /// Window samples normalized to unit sum.
    pub fn window(&self) -> Vec<f64> {
        let h = self.half_len() as f64;
        let mut w: Vec<f64> = (0..self.window_len)
            .map(|i| {
                let t = (i as f64 - h) / self.sample_rate;
                (-t * t / (2.0 * self.alpha)).exp()
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }

    pub fn n_frames(&self, m: usize) -> usize {
        if m <= 1 {
            1
        } else {
            (m - 1).div_ceil(self.hop) + 1
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.window_len % 2 == 0 || self.window_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "window length must be odd, got {}",
                self.window_len
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidArgument("hop must be at least 1".into()));
        }
        if self.hop > self.window_len {
            return Err(Error::Cola {
                hop: self.hop,
                window_len: self.window_len,
            });
        }
        if self.window_len > m {
            return Err(Error::WindowTooLong {
                window_len: self.window_len,
                signal_len: m,
            });
        }
        Ok(())
    }

    /// Frames whose window lies entirely inside a signal of `m` samples.
    pub fn interior_frames(&self, m: usize) -> std::ops::Range<usize> {
        let h = self.half_len();
        let first = h.div_ceil(self.hop);
        let last = if m > h { (m - 1 - h) / self.hop + 1 } else { 0 };
        first..last.max(first)
    }
}

/// Complex STFT, frames × real-spectrum bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<Complex64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub time_axis: Vec<f64>,
    pub freq_axis: Vec<f64>,
    pub signal_len: usize,
    pub sample_rate: f64,
}

impl Spectrogram {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.values[f * self.n_bins..(f + 1) * self.n_bins]
    }

    pub fn at(&self, f: usize, k: usize) -> Complex64 {
        self.values[f * self.n_bins + k]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }
}

/// Complex time–frequency–chirp-rate tensor indexed `(frame, freq_bin, cr_bin)`,
/// row-major with the chirp-rate index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TfcRepresentation {
    pub values: Vec<Complex64>,
    pub time_axis: Vec<f64>,
    pub freq_axis: Vec<f64>,
    pub cr_axis: Vec<f64>,
    /// Variance α (s²) of the analysis window.
    pub window_alpha: f64,
}

impl TfcRepresentation {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.time_axis.len(), self.freq_axis.len(), self.cr_axis.len())
    }

    #[inline]
    pub fn index(&self, f: usize, k: usize, b: usize) -> usize {
        (f * self.freq_axis.len() + k) * self.cr_axis.len() + b
    }

    pub fn at(&self, f: usize, k: usize, b: usize) -> Complex64 {
        self.values[self.index(f, k, b)]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    pub fn freq_step(&self) -> f64 {
        axis_step(&self.freq_axis)
    }

    pub fn cr_step(&self) -> f64 {
        axis_step(&self.cr_axis)
    }

    pub fn time_step(&self) -> f64 {
        axis_step(&self.time_axis)
    }
}

fn axis_step(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        axis[1] - axis[0]
    }
}

/// Uniform chirp-rate axis of `n_bins` points on `[-max, max]`.
pub fn symmetric_cr_axis(max_abs: f64, n_bins: usize) -> Vec<f64> {
    if n_bins <= 1 {
        return vec![0.0];
    }
    let step = 2.0 * max_abs / (n_bins - 1) as f64;
    (0..n_bins)
        .map(|i| {
            // exact zero in the middle for odd counts
            let j = i as f64 - (n_bins - 1) as f64 / 2.0;
            j * step
        })
        .collect()
}

/// Half-width of the default chirp-rate axis: 1.5·hint, or without a hint the
/// larger of 4·fs/L and the rate `fs / (12·std)` whose sweep over the window
/// support covers half the sampling band.
pub fn default_cr_span(max_cr_hint: Option<f64>, sample_rate: f64, duration: f64, window_std: f64) -> f64 {
    match max_cr_hint {
        Some(h) if h > 0.0 => 1.5 * h,
        _ => (4.0 * sample_rate / duration).max(sample_rate / (12.0 * window_std)),
    }
}

/// 41 bins spanning [`default_cr_span`].
pub fn default_cr_axis(max_cr_hint: Option<f64>, sample_rate: f64, duration: f64, window_std: f64) -> Vec<f64> {
    symmetric_cr_axis(default_cr_span(max_cr_hint, sample_rate, duration, window_std), 41)
}

struct FrameAnalyzer {
    grid: StftGrid,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl FrameAnalyzer {
    fn new(grid: StftGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: grid.window(),
            fft: planner.plan_fft_forward(grid.window_len),
            buf: vec![Complex64::default(); grid.window_len],
            grid,
        }
    }

    /// Spectrum of `x(t) g(t - τ_c) exp(-jπβ(t - τ_c)²)` for the frame centred at `center`.
    fn analyze(&mut self, x: &[f64], center: usize, beta: f64) -> &[Complex64] {
        let w = self.grid.window_len;
        let h = self.grid.half_len() as isize;
        let fs = self.grid.sample_rate;
        self.buf.iter_mut().for_each(|c| *c = Complex64::default());
        for (i, &g) in self.window.iter().enumerate() {
            let n = center as isize + i as isize - h;
            if n < 0 || n as usize >= x.len() {
                continue;
            }
            let v = x[n as usize] * g;
            let slot = (n as usize) % w;
            self.buf[slot] = if beta == 0.0 {
                Complex64::new(v, 0.0)
            } else {
                let dt = (i as isize - h) as f64 / fs;
                Complex64::from_polar(v, -PI * beta * dt * dt)
            };
        }
        self.fft.process(&mut self.buf);
        &self.buf[..self.grid.freq_bins()]
    }
}

fn axes(grid: &StftGrid, m: usize) -> (Vec<f64>, Vec<f64>) {
    let fs = grid.sample_rate;
    let time_axis = (0..grid.n_frames(m))
        .map(|f| (f * grid.hop) as f64 / fs)
        .collect();
    let freq_axis = (0..grid.freq_bins())
        .map(|k| k as f64 * fs / grid.window_len as f64)
        .collect();
    (time_axis, freq_axis)
}

fn check_rate(x: &Signal, grid: &StftGrid) -> Result<()> {
    if x.sample_rate() != grid.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "grid sample rate {} differs from signal sample rate {}",
            grid.sample_rate,
            x.sample_rate()
        )));
    }
    Ok(())
}

pub fn stft(x: &Signal, grid: &StftGrid) -> Result<Spectrogram> {
    check_rate(x, grid)?;
    grid.validate(x.len())?;
    let (time_axis, freq_axis) = axes(grid, x.len());
    let n_frames = time_axis.len();
    let n_bins = freq_axis.len();
    let mut an = FrameAnalyzer::new(*grid);
    let mut values = Vec::with_capacity(n_frames * n_bins);
    for f in 0..n_frames {
        values.extend_from_slice(an.analyze(x.samples(), f * grid.hop, 0.0));
    }
    Ok(Spectrogram {
        values,
        n_frames,
        n_bins,
        time_axis,
        freq_axis,
        signal_len: x.len(),
        sample_rate: x.sample_rate(),
    })
}

/// Least-squares overlap-add inverse: `x[n] = Σ_f g[n-c_f] y_f[n] / Σ_f g[n-c_f]²`.
pub fn istft(spec: &Spectrogram, grid: &StftGrid) -> Result<Signal> {
    if grid.hop > grid.window_len {
        return Err(Error::Cola {
            hop: grid.hop,
            window_len: grid.window_len,
        });
    }
    let m = spec.signal_len;
    if spec.n_bins != grid.freq_bins() || spec.n_frames != grid.n_frames(m) {
        return Err(Error::InvalidArgument(format!(
            "spectrogram {}x{} does not match grid {}x{}",
            spec.n_frames,
            spec.n_bins,
            grid.n_frames(m),
            grid.freq_bins()
        )));
    }
    let w = grid.window_len;
    let h = grid.half_len() as isize;
    let window = grid.window();
    let ifft = FftPlanner::new().plan_fft_inverse(w);
    let mut buf = vec![Complex64::default(); w];
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    for f in 0..spec.n_frames {
        let frame = spec.frame(f);
        buf[0] = frame[0];
        for k in 1..spec.n_bins {
            buf[k] = frame[k];
            buf[w - k] = frame[k].conj();
        }
        ifft.process(&mut buf);
        let center = (f * grid.hop) as isize;
        for (i, &g) in window.iter().enumerate() {
            let n = center + i as isize - h;
            if n < 0 || n as usize >= m {
                continue;
            }
            let n = n as usize;
            num[n] += g * buf[n % w].re / w as f64;
            den[n] += g * g;
        }
    }
    let samples = num
        .iter()
        .zip(&den)
        .map(|(a, d)| if *d > 0.0 { a / d } else { 0.0 })
        .collect();
    Signal::new(samples, spec.sample_rate)
}

/// `values[f, ξ, β] = Σ_t x(t) g(t - τ_f) exp(-j2πξt) exp(-jπβ(t - τ_f)²)`.
///
/// The `β = 0` slice is computed by the same path as [`stft`] and matches it
/// exactly.
pub fn chirplet_transform(
    x: &Signal,
    grid: &StftGrid,
    cr_axis: &[f64],
) -> Result<TfcRepresentation> {
    if cr_axis.is_empty() {
        return Err(Error::InvalidArgument("chirp-rate axis is empty".into()));
    }
    if cr_axis.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument(
            "chirp-rate axis must be strictly increasing".into(),
        ));
    }
    check_rate(x, grid)?;
    grid.validate(x.len())?;
    let (time_axis, freq_axis) = axes(grid, x.len());
    let (nf, nk, nb) = (time_axis.len(), freq_axis.len(), cr_axis.len());
    let mut values = vec![Complex64::default(); nf * nk * nb];
    let mut an = FrameAnalyzer::new(*grid);
    for f in 0..nf {
        for (b, &beta) in cr_axis.iter().enumerate() {
            let spectrum = an.analyze(x.samples(), f * grid.hop, beta);
            for (k, &v) in spectrum.iter().enumerate() {
                values[(f * nk + k) * nb + b] = v;
            }
        }
    }
    Ok(TfcRepresentation {
        values,
        time_axis,
        freq_axis,
        cr_axis: cr_axis.to_vec(),
        window_alpha: grid.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{crossover_chirp_pair, paper_simulated_signal, tones, ModeSpec, synth_mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(m: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new(
            (0..m).map(|_| StandardNormal.sample(&mut rng)).collect(),
            1024.0,
        )
        .unwrap()
    }

    fn interior_rel_err(a: &Signal, b: &Signal, skip: usize) -> f64 {
        let r = &a.samples()[skip..a.len() - skip];
        let e = &b.samples()[skip..b.len() - skip];
        let num: f64 = r.iter().zip(e).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = r.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }

    #[test]
    fn window_is_odd_and_unit_sum() {
        let g = StftGrid::gaussian(1.0 / 80.0, 1024.0).unwrap();
        assert_eq!(g.window_len % 2, 1);
        let w = g.window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g.freq_bins(), g.window_len / 2 + 1);
    }

    #[test]
    fn round_trip_white_noise() {
        let x = noise(2048, 3);
        let g = StftGrid::gaussian(0.02f64.powi(2), 1024.0).unwrap();
        let y = istft(&stft(&x, &g).unwrap(), &g).unwrap();
        assert!(interior_rel_err(&x, &y, g.half_len()) < 1e-8);
    }

    #[test]
    fn round_trip_fm_signal() {
        let (x, _) = paper_simulated_signal(1024.0, 1.0).unwrap();
        for alpha in [1.0 / 80.0, (1.0f64 / 80.0).powi(2)] {
            let g = StftGrid::gaussian(alpha, 1024.0).unwrap();
            let y = istft(&stft(&x, &g).unwrap(), &g).unwrap();
            assert!(interior_rel_err(&x, &y, g.half_len()) < 1e-8);
        }
    }

    #[test]
    fn zero_signal_gives_zero_tensor_and_back() {
        let x = Signal::zeros(256, 1024.0).unwrap();
        let g = StftGrid::gaussian(1e-4, 1024.0).unwrap();
        let s = stft(&x, &g).unwrap();
        assert!(s.values.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s, &g).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_peaks_at_nearest_bin() {
        let (x, _) = tones(&[100.0], 1024.0, 1.0).unwrap();
        let g = StftGrid::gaussian(0.02f64.powi(2), 1024.0).unwrap();
        let s = stft(&x, &g).unwrap();
        let expect = (100.0 / g.bin_width_hz()).round() as usize;
        for f in 0..s.n_frames {
            let frame = s.frame(f);
            let k = (0..s.n_bins)
                .max_by(|&a, &b| frame[a].norm().total_cmp(&frame[b].norm()))
                .unwrap();
            assert_eq!(k, expect, "frame {f}");
        }
    }

    #[test]
    fn hop_beyond_window_is_cola_error() {
        let x = noise(512, 1);
        let g = StftGrid::gaussian(1e-4, 1024.0).unwrap();
        let bad = g.with_hop(g.window_len + 1);
        assert!(matches!(stft(&x, &bad), Err(Error::Cola { .. })));
    }

    #[test]
    fn window_longer_than_signal_rejected() {
        let x = noise(64, 1);
        let g = StftGrid::gaussian(0.01, 1024.0).unwrap();
        assert!(matches!(stft(&x, &g), Err(Error::WindowTooLong { .. })));
    }

    #[test]
    fn zero_cr_slice_equals_stft() {
        let (x, _) = paper_simulated_signal(1024.0, 1.0).unwrap();
        let g = StftGrid::gaussian(0.0125f64.powi(2), 1024.0).unwrap();
        let cr = symmetric_cr_axis(4096.0, 41);
        assert_eq!(cr[20], 0.0);
        let t = chirplet_transform(&x, &g, &cr).unwrap();
        let s = stft(&x, &g).unwrap();
        for f in 0..s.n_frames {
            for k in 0..s.n_bins {
                assert!((t.at(f, k, 20) - s.at(f, k)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_cr_axis_rejected() {
        let x = noise(512, 1);
        let g = StftGrid::gaussian(1e-4, 1024.0).unwrap();
        assert!(chirplet_transform(&x, &g, &[]).is_err());
    }

    #[test]
    fn linear_chirp_peaks_at_matched_rate() {
        let x = synth_mode(&ModeSpec::linear_chirp("s1", 400.0, -200.0), 1024, 1024.0).unwrap();
        let g = StftGrid::gaussian(0.05f64.powi(2), 1024.0).unwrap();
        let cr = symmetric_cr_axis(800.0, 41);
        let t = chirplet_transform(&x, &g, &cr).unwrap();
        let (nf, nk, nb) = t.dims();
        let want = cr
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 + 200.0).abs().total_cmp(&(b.1 + 200.0).abs()))
            .unwrap()
            .0;
        for f in g.interior_frames(1024) {
            assert!(f < nf);
            let mut best = (0, 0, 0.0);
            for k in 0..nk {
                for b in 0..nb {
                    let v = t.at(f, k, b).norm();
                    if v > best.2 {
                        best = (k, b, v);
                    }
                }
            }
            assert_eq!(best.1, want, "frame {f}");
        }
    }

    #[test]
    fn matched_rate_beats_opposite_rate() {
        let c = 200.0;
        let x = synth_mode(&ModeSpec::linear_chirp("s2", 200.0, c), 1024, 1024.0).unwrap();
        let g = StftGrid::gaussian(0.05f64.powi(2), 1024.0).unwrap();
        let cr = vec![-c, c];
        let t = chirplet_transform(&x, &g, &cr).unwrap();
        let (_, nk, _) = t.dims();
        for f in g.interior_frames(1024) {
            let best = |b: usize| (0..nk).map(|k| t.at(f, k, b).norm()).fold(0.0, f64::max);
            assert!(best(1) > 2.0 * best(0), "frame {f}");
        }
    }

    #[test]
    fn crossover_frame_has_two_maxima() {
        let (x, _) = crossover_chirp_pair(1024.0, 1.0).unwrap();
        let g = StftGrid::gaussian(0.05f64.powi(2), 1024.0).unwrap().with_hop(32);
        let cr = symmetric_cr_axis(400.0, 5);
        let t = chirplet_transform(&x, &g, &cr).unwrap();
        let f = t.time_axis.iter().position(|&tt| (tt - 0.5).abs() < 1e-9).unwrap();
        let k = (300.0 / g.bin_width_hz()).round() as usize;
        let at = |b: usize| t.at(f, k, b).norm();
        // cr axis: -400 -200 0 200 400
        assert!(at(1) > at(0) && at(1) > at(2));
        assert!(at(3) > at(2) && at(3) > at(4));
    }

    #[test]
    fn transform_is_linear() {
        let a = noise(512, 5);
        let b = noise(512, 6);
        let g = StftGrid::gaussian(0.02f64.powi(2), 1024.0).unwrap();
        let cr = symmetric_cr_axis(1000.0, 5);
        let combo = a.scaled(2.0).add(&b.scaled(-0.5)).unwrap();
        let ta = chirplet_transform(&a, &g, &cr).unwrap();
        let tb = chirplet_transform(&b, &g, &cr).unwrap();
        let tc = chirplet_transform(&combo, &g, &cr).unwrap();
        for i in 0..tc.values.len() {
            let lin = ta.values[i] * 2.0 - tb.values[i] * 0.5;
            assert!((lin - tc.values[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn stft_energy_scales_with_signal_energy() {
        let a = noise(1024, 9);
        let g = StftGrid::gaussian(0.02f64.powi(2), 1024.0).unwrap();
        let e = |s: &Signal| stft(s, &g).unwrap().magnitudes().iter().map(|v| v * v).sum::<f64>();
        let ratio = e(&a.scaled(3.0)) / e(&a);
        assert!((ratio - 9.0).abs() < 1e-9);
    }
}
