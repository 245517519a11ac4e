//! White-noise variance from an iterative segmentation of the rectified STFT.
//!
//! For white noise of variance σ², every non-DC coefficient of the power
//! spectrogram is close to exponential with mean `σ² Σg²`. Bins above `γ`
//! times the current mean are classified as signal, the mean is refit on the
//! rest with a truncation correction, and the noise set shrinks until stable.
//! Signal bins are dilated in time and frequency before removal so that the
//! skirts of each component do not leak into the noise set. A last pass at a
//! stricter threshold re-estimates the mean from the converged level.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ridge::RidgeCurve;
use crate::signal::Signal;
use crate::tfa::{stft, StftGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOptions {
    /// Upper quantile of the exponential noise law used as the signal threshold.
    pub quantile: f64,
    /// Stricter quantile for the final re-estimate on the converged mean.
    pub final_quantile: f64,
    /// Relative change in the noise-bin count below which iteration stops.
    pub stability: f64,
    pub max_iter: usize,
    /// Minimum noise fraction for the estimate to count as reliable.
    pub min_noise_fraction: f64,
    /// Frequency-bin radius of the dilation applied around signal bins.
    pub dilate_bins: usize,
    pub dilate_frames: usize,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self {
            quantile: 0.999,
            final_quantile: 0.9999,
            stability: 1e-3,
            max_iter: 20,
            min_noise_fraction: 0.1,
            dilate_bins: 2,
            dilate_frames: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub sigma2: f64,
    pub n_noise_bins: usize,
    pub n_total_bins: usize,
    pub n_iterations: usize,
    /// Noise-bin count after each iteration.
    pub history: Vec<usize>,
    pub reliable: bool,
}

impl NoiseEstimate {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

pub fn estimate_noise_variance(x: &Signal, grid: &StftGrid) -> Result<NoiseEstimate> {
    estimate_noise_variance_with(x, grid, &NoiseOptions::default())
}

struct Plane {
    power: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Plane {
    /// Bins not within the dilation radius of any bin above `threshold`.
    fn noise_mask(&self, threshold: f64, opts: &NoiseOptions) -> Vec<bool> {
        let mut mask = vec![true; self.power.len()];
        let (rows, cols) = (self.rows, self.cols);
        for (i, &p) in self.power.iter().enumerate() {
            if p > threshold {
                let (r, c) = (i / cols, i % cols);
                let lo = c.saturating_sub(opts.dilate_bins);
                let hi = (c + opts.dilate_bins + 1).min(cols);
                for rr in r.saturating_sub(opts.dilate_frames)..(r + opts.dilate_frames + 1).min(rows) {
                    mask[rr * cols + lo..rr * cols + hi].fill(false);
                }
            }
        }
        mask
    }

    fn masked_sum(&self, mask: &[bool]) -> (f64, usize) {
        mask.iter()
            .zip(&self.power)
            .filter(|(f, _)| **f)
            .fold((0.0, 0), |(s, n), (_, p)| (s + p, n + 1))
    }
}

/// `γ` for an exponential quantile and the mean of the law truncated at `γ`.
fn threshold_factors(quantile: f64) -> (f64, f64) {
    let gamma = -(1.0 - quantile).ln();
    let tail = (-gamma).exp();
    (gamma, 1.0 - gamma * tail / (1.0 - tail))
}

pub fn estimate_noise_variance_with(
    x: &Signal,
    grid: &StftGrid,
    opts: &NoiseOptions,
) -> Result<NoiseEstimate> {
    estimate(x, grid, opts, &[])
}

/// Same estimator restricted to bins outside the footprint of known ridges:
/// at each frame, bins within `3σ|CR| + 3/(2πσ)` Hz of a ridge's IF are
/// excluded from the start. Falls back to the whole plane when the footprint
/// leaves fewer than `min_noise_fraction` of the bins.
pub fn estimate_noise_variance_excluding(
    x: &Signal,
    grid: &StftGrid,
    ridges: &[RidgeCurve],
    opts: &NoiseOptions,
) -> Result<NoiseEstimate> {
    estimate(x, grid, opts, ridges)
}

fn estimate(x: &Signal, grid: &StftGrid, opts: &NoiseOptions, ridges: &[RidgeCurve]) -> Result<NoiseEstimate> {
    let m = x.len();
    if m < 4 * grid.window_len {
        return Err(Error::InvalidArgument(format!(
            "noise estimation needs at least {} samples, got {m}",
            4 * grid.window_len
        )));
    }
    for q in [opts.quantile, opts.final_quantile] {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1), got {q}")));
        }
    }
    let spec = stft(x, grid)?;
    let frames = grid.interior_frames(m);
    let cols = spec.n_bins - 1;
    let rows = frames.len();
    let mut power = Vec::with_capacity(rows * cols);
    for f in frames {
        power.extend(spec.frame(f)[1..].iter().map(|c| c.norm_sqr()));
    }
    let plane = Plane { power, rows, cols };
    let total = plane.power.len();
    let g2: f64 = grid.window().iter().map(|v| v * v).sum();

    let mut allowed = vec![true; total];
    let sigma = grid.sigma_s();
    let bin_hz = grid.bin_width_hz();
    for (row, f) in grid.interior_frames(m).enumerate() {
        let t = (f * grid.hop) as f64 / grid.sample_rate;
        for r in ridges {
            let half = 3.0 * sigma * r.cr_at(t).abs() + 3.0 / (2.0 * PI * sigma);
            let centre = r.if_at(t);
            let lo = ((centre - half) / bin_hz).ceil().max(1.0) as usize;
            let hi = ((centre + half) / bin_hz).floor().min(cols as f64) as usize;
            for b in lo..=hi {
                allowed[row * cols + b - 1] = false;
            }
        }
    }
    if (allowed.iter().filter(|a| **a).count() as f64) < opts.min_noise_fraction * total as f64 {
        allowed.fill(true);
    }

    let mut sorted: Vec<f64> = plane.power.iter().zip(&allowed).filter(|(_, a)| **a).map(|(p, _)| *p).collect();
    sorted.sort_by(f64::total_cmp);
    let n_allowed = sorted.len();
    let median = if n_allowed % 2 == 1 {
        sorted[n_allowed / 2]
    } else {
        0.5 * (sorted[n_allowed / 2 - 1] + sorted[n_allowed / 2])
    };
    let mut mu = median / std::f64::consts::LN_2;

    let (gamma, truncated) = threshold_factors(opts.quantile);
    let mut in_noise = allowed.clone();
    let mut count = n_allowed;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut mask = plane.noise_mask(gamma * mu, opts);
        mask.iter_mut().zip(&in_noise).for_each(|(m, &n)| *m &= n);
        let (sum, next) = plane.masked_sum(&mask);
        in_noise = mask;
        history.push(next);
        if next > 0 {
            mu = sum / next as f64 / truncated;
        }
        let changed = count.abs_diff(next) as f64;
        count = next;
        if next == 0 || changed <= opts.stability * next as f64 {
            break;
        }
    }

    if count > 0 {
        let (gamma, truncated) = threshold_factors(opts.final_quantile);
        let mut mask = plane.noise_mask(gamma * mu, opts);
        mask.iter_mut().zip(&allowed).for_each(|(m, &a)| *m &= a);
        let (sum, n) = plane.masked_sum(&mask);
        if n > 0 {
            mu = sum / n as f64 / truncated;
        }
    } else {
        mu = 0.0;
    }
    Ok(NoiseEstimate {
        sigma2: mu / g2,
        n_noise_bins: count,
        n_total_bins: total,
        n_iterations: iterations,
        history,
        reliable: count as f64 >= opts.min_noise_fraction * total as f64,
    })
}
