//! Random chirplet atoms and the dense dictionary built from them.
//!
//! An atom `(τ, ξ, β, φ)` evaluates to
//! `exp(-(t-τ)²/(2α)) · cos(2πξt + πβ(t-τ)² - (π/2)φ)`, where `φ ∈ {0, 1}`
//! selects the cosine or sine phase.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ridge::RidgeCurve;
use crate::solver::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureAtom {
    pub tau: f64,
    pub xi: f64,
    pub beta: f64,
    pub phi: u8,
    /// 1-based mode for concentrated atoms, 0 for uniform ones.
    pub mode_index: usize,
}

/// `(τ, ξ)` i.i.d. uniform on `[0, L] × [0, f_max]`, `β = 0`, `φ ~ Bernoulli(1/2)`.
pub fn sample_uniform_2d(n: usize, duration: f64, f_max: f64, seed: u64) -> Vec<FeatureAtom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| FeatureAtom {
            tau: rng.random::<f64>() * duration,
            xi: rng.random::<f64>() * f_max,
            beta: 0.0,
            phi: rng.random_bool(0.5) as u8,
            mode_index: 0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentratedSample {
    pub atoms: Vec<FeatureAtom>,
    /// Atoms whose frequency had to be clamped into `[0, fs/2]`.
    pub clamped: usize,
    pub warning: Option<String>,
}

/// Band-limited uniform sampling around one ridge: `τ ~ U[0, L]`, then
/// `ξ ~ U[f̂(τ) ± λ/2]` and `β ~ U[f̂'(τ) ± λ/2]` with the ridge linearly
/// interpolated between frames. Frequencies are clamped to `[0, fs/2]`; a
/// warning is attached when more than 5% of the atoms needed it.
pub fn sample_concentrated_3d(
    ridge: &RidgeCurve,
    n: usize,
    lambda: f64,
    duration: f64,
    sample_rate: f64,
    mode_index: usize,
    seed: u64,
) -> Result<ConcentratedSample> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {lambda}"
        )));
    }
    if ridge.is_empty() {
        return Err(Error::InvalidArgument("ridge has no frames".into()));
    }
    let nyquist = sample_rate / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clamped = 0;
    let atoms = (0..n)
        .map(|_| {
            let tau = rng.random::<f64>() * duration;
            let xi = ridge.if_at(tau) + lambda * (rng.random::<f64>() - 0.5);
            let beta = ridge.cr_at(tau) + lambda * (rng.random::<f64>() - 0.5);
            let phi = rng.random_bool(0.5) as u8;
            let xi = if (0.0..=nyquist).contains(&xi) {
                xi
            } else {
                clamped += 1;
                xi.clamp(0.0, nyquist)
            };
            FeatureAtom {
                tau,
                xi,
                beta,
                phi,
                mode_index,
            }
        })
        .collect();
    let warning = (clamped as f64 > 0.05 * n as f64).then(|| {
        format!(
            "mode {mode_index}: {clamped} of {n} atoms clamped to [0, {nyquist}] Hz; \
             the ridge runs along the spectrum edge"
        )
    });
    Ok(ConcentratedSample {
        atoms,
        clamped,
        warning,
    })
}

pub fn evaluate_atom_into(atom: &FeatureAtom, times: &[f64], alpha: f64, out: &mut [f64]) {
    let shift = 0.5 * PI * atom.phi as f64;
    for (o, &t) in out.iter_mut().zip(times) {
        let d = t - atom.tau;
        let env = (-d * d / (2.0 * alpha)).exp();
        *o = env * (2.0 * PI * atom.xi * t + PI * atom.beta * d * d - shift).cos();
    }
}

pub fn evaluate_atom(atom: &FeatureAtom, times: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    evaluate_atom_into(atom, times, alpha, &mut out);
    out
}

/// Column metadata for a dense random-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDictionary {
    pub atoms: Vec<FeatureAtom>,
    pub alpha: f64,
    pub times: Vec<f64>,
    /// `(start, end)` column range of each atom group.
    pub blocks: Vec<(usize, usize)>,
    pub column_norm_range: (f64, f64),
}

impl FeatureDictionary {
    pub fn n_columns(&self) -> usize {
        self.atoms.len()
    }
}

/// Default memory cap for a dense dictionary, 1 GiB.
pub const DEFAULT_MEMORY_CAP: usize = 1 << 30;

/// Evaluates every atom into one column, groups in order.
pub fn build_dictionary(
    groups: &[Vec<FeatureAtom>],
    times: &[f64],
    alpha: f64,
    memory_cap: usize,
) -> Result<(FeatureDictionary, DenseMatrix)> {
    if groups.is_empty() || groups.iter().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("no atoms to build a dictionary from".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window variance must be positive, got {alpha}"
        )));
    }
    let m = times.len();
    let cols: usize = groups.iter().map(Vec::len).sum();
    let bytes = m.saturating_mul(cols).saturating_mul(8);
    if bytes > memory_cap {
        return Err(Error::DictionaryTooLarge {
            rows: m,
            cols,
            bytes,
            cap: memory_cap,
        });
    }
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(0.0);
    let reach = 3.0 * alpha.sqrt();
    let mut atoms = Vec::with_capacity(cols);
    let mut blocks = Vec::with_capacity(groups.len());
    for g in groups {
        let start = atoms.len();
        for a in g {
            if a.tau < t0 - reach || a.tau > t1 + reach {
                return Err(Error::InvalidArgument(format!(
                    "atom at τ = {} s lies outside the signal support",
                    a.tau
                )));
            }
            atoms.push(*a);
        }
        blocks.push((start, atoms.len()));
    }
    let mut matrix = DenseMatrix::zeros(m, cols);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (j, a) in atoms.iter().enumerate() {
        let col = matrix.column_mut(j);
        evaluate_atom_into(a, times, alpha, col);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        lo = lo.min(norm);
        hi = hi.max(norm);
    }
    Ok((
        FeatureDictionary {
            atoms,
            alpha,
            times: times.to_vec(),
            blocks,
            column_norm_range: (lo, hi),
        },
        matrix,
    ))
}
