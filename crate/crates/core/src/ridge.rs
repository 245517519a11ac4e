//! Ridge extraction in the time–frequency–chirp-rate representation.
//!
//! Ridges are extracted one at a time. Each is the best path through the
//! `(freq, chirp-rate)` grid found by forward dynamic programming over frames,
//! scoring log magnitude minus a quadratic transition penalty. The frequency
//! step is penalized relative to the shift predicted by the chirp rate, so a
//! ridge keeps its slope through a crossing instead of bouncing off the other
//! mode. After each extraction a small `(freq, chirp-rate)` neighbourhood of
//! the ridge is zeroed frame by frame; crossing ridges with distinct chirp
//! rates survive the peeling.

use crate::error::{Error, Result};
use crate::tfa::TfcRepresentation;

/// Estimated IF and chirp-rate trajectories of one mode on the frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeCurve {
    pub time_s: Vec<f64>,
    pub if_hz: Vec<f64>,
    pub cr_hzps: Vec<f64>,
    /// Transform magnitude along the ridge.
    pub energy: Vec<f64>,
}

impl RidgeCurve {
    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    /// Linearly interpolated IF, held constant beyond the first and last frame.
    pub fn if_at(&self, t: f64) -> f64 {
        interp(&self.time_s, &self.if_hz, t)
    }

    pub fn cr_at(&self, t: f64) -> f64 {
        interp(&self.time_s, &self.cr_hzps, t)
    }
}

pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - w) + ys[j] * w
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOptions {
    /// Largest frequency step per frame. Defaults to the larger of three bins
    /// and the shift implied by the largest chirp rate on the axis.
    pub jump_limit_hz: Option<f64>,
    /// Largest chirp-rate step per frame, in bins.
    pub cr_jump_bins: usize,
    /// Half-width of the peeled frequency band. Never narrower than three
    /// standard deviations of the window's frequency response.
    pub peel_band_hz: Option<f64>,
    /// Half-width of the peeled chirp-rate band. Defaults to the chirp-rate
    /// mismatch that halves the response of a matched chirp.
    pub peel_cr_band_hzps: Option<f64>,
    /// Weight μ of the transition penalty. Defaults to a tenth of the median
    /// per-frame peak-to-median log contrast.
    pub smoothness: Option<f64>,
    /// Relative weight ν of chirp-rate steps in the transition penalty.
    pub cr_weight: f64,
    /// Re-assign ridge tails at contact points so slopes stay continuous.
    pub resolve_crossings: bool,
    /// A ridge must average at least this multiple of the median magnitude.
    pub min_contrast: f64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            jump_limit_hz: None,
            cr_jump_bins: 2,
            peel_band_hz: None,
            peel_cr_band_hzps: None,
            smoothness: None,
            cr_weight: 1.0,
            resolve_crossings: true,
            min_contrast: 2.5,
        }
    }
}

impl RidgeOptions {
    pub fn with_peel_band(mut self, hz: f64) -> Self {
        self.peel_band_hz = Some(hz);
        self
    }

    pub fn with_jump_limit(mut self, hz: f64) -> Self {
        self.jump_limit_hz = Some(hz);
        self
    }
}

struct Resolved {
    jump_bins: usize,
    peel_hz: f64,
    peel_cr: f64,
    mu: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

fn resolve(tfc: &TfcRepresentation, mags: &[f64], opts: &RidgeOptions) -> Result<Resolved> {
    let (nf, nk, nb) = tfc.dims();
    let df = tfc.freq_step();
    let dt = tfc.time_step();
    let sigma = tfc.window_alpha.sqrt();
    let max_cr = tfc.cr_axis.iter().fold(0.0f64, |a, &c| a.max(c.abs()));

    let jump_bins = match opts.jump_limit_hz {
        Some(hz) if hz > 0.0 => (hz / df).ceil() as usize,
        Some(hz) => {
            return Err(Error::InvalidArgument(format!(
                "jump limit must be positive, got {hz}"
            )))
        }
        None => 3usize.max((max_cr * dt / df).ceil() as usize + 1),
    }
    .max(1);

    let sigma_f = 1.0 / (2.0 * std::f64::consts::PI * sigma);
    let peel_hz = match opts.peel_band_hz {
        Some(hz) if hz > 0.0 => hz,
        Some(hz) => {
            return Err(Error::InvalidArgument(format!(
                "peel band must be positive, got {hz}"
            )))
        }
        None => 0.0,
    }
    .max(3.0 * sigma_f)
    .max(df);
    let peel_cr = opts
        .peel_cr_band_hzps
        .unwrap_or(0.616 / tfc.window_alpha)
        .max(tfc.cr_step());

    let mu = match opts.smoothness {
        Some(mu) => mu,
        None => {
            let per_frame = nk * nb;
            let contrasts: Vec<f64> = (0..nf)
                .filter_map(|f| {
                    let frame = &mags[f * per_frame..(f + 1) * per_frame];
                    let peak = frame.iter().cloned().fold(0.0, f64::max);
                    let med = median(frame.to_vec());
                    (peak > 0.0 && med > 0.0).then(|| (peak / med).ln())
                })
                .collect();
            let c = median(contrasts);
            if c > 0.0 {
                0.1 * c
            } else {
                1.0
            }
        }
    };
    Ok(Resolved {
        jump_bins,
        peel_hz,
        peel_cr,
        mu,
    })
}

/// Extracts `k` ridges, strongest first.
pub fn detect_ridges(
    tfc: &TfcRepresentation,
    k: usize,
    opts: &RidgeOptions,
) -> Result<Vec<RidgeCurve>> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one ridge".into()));
    }
    let (nf, nk, nb) = tfc.dims();
    if nf == 0 || nk == 0 || nb == 0 {
        return Err(Error::InvalidArgument("empty representation".into()));
    }
    let original = tfc.magnitudes();
    let global_max = original.iter().cloned().fold(0.0, f64::max);
    if !(global_max > 0.0) {
        return Err(Error::RidgeShortfall {
            requested: k,
            found: 0,
        });
    }
    let params = resolve(tfc, &original, opts)?;
    let floor = median(original.clone());
    let eps = 1e-9 * global_max;

    let mut work = original.clone();
    let mut paths: Vec<Vec<(usize, usize)>> = Vec::with_capacity(k);
    let mut first_mean = 0.0;
    for n in 0..k {
        let path = best_path(tfc, &work, eps, &params, opts);
        let mean: f64 = path
            .iter()
            .enumerate()
            .map(|(f, &(kk, b))| work[tfc.index(f, kk, b)])
            .sum::<f64>()
            / nf as f64;
        if n == 0 {
            first_mean = mean;
        }
        if mean <= opts.min_contrast * floor || mean < 0.1 * first_mean || mean <= 0.0 {
            return Err(Error::RidgeShortfall {
                requested: k,
                found: n,
            });
        }
        peel(tfc, &mut work, &path, &params);
        paths.push(path);
    }

    let mut curves: Vec<RidgeCurve> = paths
        .iter()
        .map(|p| to_curve(tfc, &original, p))
        .collect();
    if opts.resolve_crossings && curves.len() > 1 {
        resolve_crossings(&mut curves, params.peel_hz);
    }
    Ok(curves)
}

fn best_path(
    tfc: &TfcRepresentation,
    mags: &[f64],
    eps: f64,
    p: &Resolved,
    opts: &RidgeOptions,
) -> Vec<(usize, usize)> {
    let (nf, nk, nb) = tfc.dims();
    let ns = nk * nb;
    let df = tfc.freq_step();
    let dt = tfc.time_step();
    let cr = &tfc.cr_axis;
    let jk = p.jump_bins as isize;
    let jb = opts.cr_jump_bins as isize;
    let nu = opts.cr_weight;
    let shift_per_cr = if df > 0.0 { dt / df } else { 0.0 };

    let score = |f: usize, s: usize| (mags[f * ns + s] + eps).ln();
    let mut prev: Vec<f64> = (0..ns).map(|s| score(0, s)).collect();
    let mut cur = vec![0.0; ns];
    let mut back = vec![0u32; nf * ns];

    for f in 1..nf {
        for kk in 0..nk as isize {
            for b in 0..nb as isize {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for k0 in (kk - jk).max(0)..=(kk + jk).min(nk as isize - 1) {
                    for b0 in (b - jb).max(0)..=(b + jb).min(nb as isize - 1) {
                        let s0 = k0 as usize * nb + b0 as usize;
                        let pred = 0.5 * (cr[b0 as usize] + cr[b as usize]) * shift_per_cr;
                        let d = (kk - k0) as f64 - pred;
                        let db = (b - b0) as f64;
                        let v = prev[s0] - p.mu * (d * d + nu * db * db);
                        if v > best {
                            best = v;
                            arg = s0;
                        }
                    }
                }
                let s = kk as usize * nb + b as usize;
                cur[s] = best + score(f, s);
                back[f * ns + s] = arg as u32;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut s = 0;
    for cand in 1..ns {
        if prev[cand] > prev[s] {
            s = cand;
        }
    }
    let mut path = vec![(0, 0); nf];
    for f in (0..nf).rev() {
        path[f] = (s / nb, s % nb);
        if f > 0 {
            s = back[f * ns + s] as usize;
        }
    }
    path
}

fn peel(tfc: &TfcRepresentation, mags: &mut [f64], path: &[(usize, usize)], p: &Resolved) {
    let (_, nk, nb) = tfc.dims();
    for (f, &(kc, bc)) in path.iter().enumerate() {
        let fc = tfc.freq_axis[kc];
        let cc = tfc.cr_axis[bc];
        for kk in 0..nk {
            if (tfc.freq_axis[kk] - fc).abs() > p.peel_hz {
                continue;
            }
            for b in 0..nb {
                if (tfc.cr_axis[b] - cc).abs() <= p.peel_cr {
                    mags[(f * nk + kk) * nb + b] = 0.0;
                }
            }
        }
    }
}

/// Parabolic vertex offset of log magnitudes, in bins, clamped to ±0.5.
fn vertex(l_minus: f64, l0: f64, l_plus: f64) -> f64 {
    let den = l_minus - 2.0 * l0 + l_plus;
    if den < 0.0 {
        (0.5 * (l_minus - l_plus) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

fn to_curve(tfc: &TfcRepresentation, mags: &[f64], path: &[(usize, usize)]) -> RidgeCurve {
    let (_, nk, nb) = tfc.dims();
    let df = tfc.freq_step();
    let dc = tfc.cr_step();
    let lm = |f: usize, kk: usize, b: usize| mags[(f * nk + kk) * nb + b].max(1e-300).ln();
    let mut if_hz = Vec::with_capacity(path.len());
    let mut cr_hzps = Vec::with_capacity(path.len());
    let mut energy = Vec::with_capacity(path.len());
    for (f, &(kk, b)) in path.iter().enumerate() {
        let mut fr = tfc.freq_axis[kk];
        if kk > 0 && kk + 1 < nk {
            fr += df * vertex(lm(f, kk - 1, b), lm(f, kk, b), lm(f, kk + 1, b));
        }
        let mut c = tfc.cr_axis[b];
        if b > 0 && b + 1 < nb {
            c += dc * vertex(lm(f, kk, b - 1), lm(f, kk, b), lm(f, kk, b + 1));
        }
        if_hz.push(fr);
        cr_hzps.push(c);
        energy.push(mags[(f * nk + kk) * nb + b]);
    }
    RidgeCurve {
        time_s: tfc.time_axis.clone(),
        if_hz,
        cr_hzps,
        energy,
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn contact_segments(a: &RidgeCurve, b: &RidgeCurve, band: f64) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut start = None;
    for f in 0..a.len() {
        let touching = (a.if_hz[f] - b.if_hz[f]).abs() <= band;
        match (touching, start) {
            (true, None) => start = Some(f),
            (false, Some(s)) => {
                segs.push((s, f - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segs.push((s, a.len() - 1));
    }
    segs
}

fn swap_tails(curves: &mut [RidgeCurve], i: usize, j: usize, from: usize) {
    let (lo, hi) = curves.split_at_mut(j);
    let (a, b) = (&mut lo[i], &mut hi[0]);
    a.if_hz[from..].swap_with_slice(&mut b.if_hz[from..]);
    a.cr_hzps[from..].swap_with_slice(&mut b.cr_hzps[from..]);
    a.energy[from..].swap_with_slice(&mut b.energy[from..]);
}

/// Cubic Hermite fill of `[a, b]` between the anchors `a - 1` and `b + 1`.
fn hermite_fill(c: &mut RidgeCurve, a: usize, b: usize, s0: f64, s1: f64) {
    let (t0, t1) = (c.time_s[a - 1], c.time_s[b + 1]);
    let (y0, y1) = (c.if_hz[a - 1], c.if_hz[b + 1]);
    let h = t1 - t0;
    for f in a..=b {
        let u = (c.time_s[f] - t0) / h;
        let (u2, u3) = (u * u, u * u * u);
        c.if_hz[f] = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * s0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * s1;
        c.cr_hzps[f] = (6.0 * u2 - 6.0 * u) * y0 / h
            + (3.0 * u2 - 4.0 * u + 1.0) * s0
            + (-6.0 * u2 + 6.0 * u) * y1 / h
            + (3.0 * u2 - 2.0 * u) * s1;
    }
}

/// Where two ridges touch, keep the pairing of incoming and outgoing branches
/// that preserves each ridge's IF slope, then bridge the contact segment.
fn resolve_crossings(curves: &mut [RidgeCurve], band: f64) {
    let n = curves[0].len();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            for (a, b) in contact_segments(&curves[i], &curves[j], band) {
                let w = 4usize.max(b + 1 - a);
                if a < w || b + w >= n {
                    continue;
                }
                let t = &curves[i].time_s;
                let pre = (a - w)..a;
                let post = (b + 1)..(b + 1 + w);
                let sl = |c: &RidgeCurve, r: std::ops::Range<usize>| {
                    slope(&t[r.clone()], &c.if_hz[r])
                };
                let (si0, si1) = (sl(&curves[i], pre.clone()), sl(&curves[i], post.clone()));
                let (sj0, sj1) = (sl(&curves[j], pre), sl(&curves[j], post));
                let keep = (si0 - si1).powi(2) + (sj0 - sj1).powi(2);
                let swap = (si0 - sj1).powi(2) + (sj0 - si1).powi(2);
                let (si1, sj1) = if swap < keep {
                    swap_tails(curves, i, j, b + 1);
                    (sj1, si1)
                } else {
                    (si1, sj1)
                };
                hermite_fill(&mut curves[i], a, b, si0, si1);
                hermite_fill(&mut curves[j], a, b, sj0, sj1);
            }
        }
    }
}

/// Reconciles the chirp-rate track with the derivative of the IF track.
///
/// Samples disagreeing with the smoothed IF derivative by more than two
/// chirp-rate bins are replaced by it; if more than 20% of samples disagree
/// the whole track is replaced.
pub fn refine_cr_from_if(curve: &RidgeCurve, smoothing_window: usize, cr_step: f64) -> RidgeCurve {
    let n = curve.len();
    if n < 2 {
        return curve.clone();
    }
    let t = &curve.time_s;
    let y = &curve.if_hz;
    let deriv: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (y[hi] - y[lo]) / (t[hi] - t[lo])
        })
        .collect();
    let half = smoothing_window / 2;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            deriv[lo..=hi].iter().sum::<f64>() / (hi + 1 - lo) as f64
        })
        .collect();
    let tol = 2.0 * cr_step.abs();
    let bad: Vec<bool> = curve
        .cr_hzps
        .iter()
        .zip(&smooth)
        .map(|(c, d)| (c - d).abs() > tol)
        .collect();
    let n_bad = bad.iter().filter(|&&b| b).count();
    if n_bad == 0 {
        return curve.clone();
    }
    let mut out = curve.clone();
    if n_bad as f64 > 0.2 * n as f64 {
        out.cr_hzps = smooth;
    } else {
        for (i, b) in bad.iter().enumerate() {
            if *b {
                out.cr_hzps[i] = smooth[i];
            }
        }
    }
    out
}
