//! End-to-end 3D decomposition: ridges, concentrated sampling, dictionary,
//! noise level, BPDN and per-block reconstruction.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::features::{
    build_dictionary, sample_concentrated_3d, FeatureDictionary, DEFAULT_MEMORY_CAP,
};
use crate::noise::{estimate_noise_variance_excluding, NoiseOptions};
use crate::ridge::{detect_ridges, refine_cr_from_if, RidgeCurve, RidgeOptions};
use crate::signal::{ModeSet, Signal};
use crate::solver::{solve_bpdn, DenseMatrix, LinearOperator, SolverOptions, SparseSolution};
use crate::tfa::{chirplet_transform, default_cr_span, symmetric_cr_axis, StftGrid};

/// Default window variance for a record of `duration` seconds: a standard
/// deviation of `duration / 80`.
pub fn default_alpha(duration: f64) -> f64 {
    (duration / 80.0).powi(2)
}

/// Default sampling bandwidth `fs / 100`.
pub fn default_lambda(sample_rate: f64) -> f64 {
    sample_rate / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub k_modes: usize,
    pub n_features_per_mode: usize,
    /// Window variance in s²; `None` uses [`default_alpha`].
    pub alpha: Option<f64>,
    /// Sampling bandwidth in Hz; `None` uses [`default_lambda`].
    pub lambda: Option<f64>,
    pub max_solver_iter: usize,
    pub seed: u64,
    /// Noise standard deviation per sample; skips the estimator.
    pub sigma_override: Option<f64>,
    /// Window variance of the chirplet transform used for ridges; defaults to `alpha`.
    pub ridge_alpha: Option<f64>,
    /// Largest expected |chirp rate| in Hz/s, sizing the chirp-rate axis.
    pub max_chirp_rate: Option<f64>,
    pub n_cr_bins: usize,
    /// Smoothing window, in frames, of the IF derivative used to repair chirp rates.
    pub cr_smoothing: usize,
    /// The noise level is floored at `noise_floor · signal power`.
    pub noise_floor: f64,
    pub memory_cap_bytes: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            k_modes: 2,
            n_features_per_mode: 5000,
            alpha: None,
            lambda: None,
            max_solver_iter: 1000,
            seed: 0,
            sigma_override: None,
            ridge_alpha: None,
            max_chirp_rate: None,
            n_cr_bins: 41,
            cr_smoothing: 5,
            noise_floor: 1e-10,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }
}

impl DecompositionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k_modes == 0 {
            return bad("k_modes must be at least 1".into());
        }
        if self.n_features_per_mode == 0 {
            return bad("n_features_per_mode must be at least 1".into());
        }
        if self.max_solver_iter == 0 {
            return bad("max_solver_iter must be at least 1".into());
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("ridge_alpha", self.ridge_alpha),
            ("max_chirp_rate", self.max_chirp_rate),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma must be non-negative, got {s}"));
            }
        }
        if self.n_cr_bins == 0 {
            return bad("n_cr_bins must be at least 1".into());
        }
        Ok(())
    }

    pub fn alpha_for(&self, duration: f64) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(duration))
    }

    pub fn lambda_for(&self, sample_rate: f64) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(sample_rate))
    }
}

/// Wall time per stage in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub ridge: f64,
    pub sampling: f64,
    pub dictionary: f64,
    pub noise: f64,
    pub solver: f64,
    pub reconstruction: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.ridge + self.sampling + self.dictionary + self.noise + self.solver + self.reconstruction
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub modes: ModeSet,
    pub ridges: Vec<RidgeCurve>,
    pub atoms: FeatureDictionary,
    pub solution: SparseSolution,
    /// Noise variance used for the residual bound, after flooring.
    pub sigma2: f64,
    /// Raw estimator output, `None` when overridden.
    pub sigma2_estimated: Option<f64>,
    pub sigma_bound: f64,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

impl DecompositionResult {
    /// `x − Σₖ xₖ`.
    pub fn residual(&self, x: &Signal) -> Result<Signal> {
        let sum = self.modes.sum().ok_or(Error::InvalidArgument("no modes".into()))?;
        x.sub(&sum)
    }
}

/// Child seeds for the independent random streams of one run.
pub(crate) fn derive_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Raw estimate (`None` when overridden) and the floored variance used for the
/// residual bound. The estimator runs on a window no longer than the default
/// and skips the footprint of `ridges`.
pub(crate) fn resolve_noise(
    x: &Signal,
    alpha: f64,
    ridges: &[RidgeCurve],
    sigma_override: Option<f64>,
    floor: f64,
) -> Result<(Option<f64>, f64)> {
    if let Some(s) = sigma_override {
        return Ok((None, s * s));
    }
    let grid = StftGrid::gaussian(alpha.min(default_alpha(x.duration())), x.sample_rate())?;
    let est = estimate_noise_variance_excluding(x, &grid, ridges, &NoiseOptions::default())?;
    Ok((Some(est.sigma2), est.sigma2.max(floor * x.power())))
}

/// Reconstructs `Σ_{j∈block} c_j ψ_j` for every column block.
pub(crate) fn reconstruct_blocks(
    matrix: &DenseMatrix,
    coefficients: &[f64],
    blocks: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    blocks
        .iter()
        .map(|&(s, e)| {
            let mut c = vec![0.0; coefficients.len()];
            c[s..e].copy_from_slice(&coefficients[s..e]);
            let mut y = vec![0.0; matrix.rows()];
            matrix.apply(&c, &mut y);
            y
        })
        .collect()
}

pub fn decompose_3d(x: &Signal, cfg: &DecompositionConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    let fs = x.sample_rate();
    let m = x.len();
    let duration = x.duration();
    let alpha = cfg.alpha_for(duration);
    let lambda = cfg.lambda_for(fs);
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();

    let t0 = Instant::now();
    let ridge_alpha = cfg.ridge_alpha.unwrap_or(alpha);
    let ridge_grid = StftGrid::gaussian(ridge_alpha, fs).map_err(Error::at(Stage::Ridge))?;
    let span = default_cr_span(cfg.max_chirp_rate, fs, duration, ridge_alpha.sqrt());
    let cr_axis = symmetric_cr_axis(span, cfg.n_cr_bins);
    let tfc = chirplet_transform(x, &ridge_grid, &cr_axis).map_err(Error::at(Stage::Ridge))?;
    let cr_step = tfc.cr_step();
    let ridges: Vec<RidgeCurve> = detect_ridges(&tfc, cfg.k_modes, &RidgeOptions::default())
        .map_err(Error::at(Stage::Ridge))?
        .iter()
        .map(|r| refine_cr_from_if(r, cfg.cr_smoothing, cr_step))
        .collect();
    drop(tfc);
    timings.ridge = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let seeds = derive_seeds(cfg.seed, cfg.k_modes);
    let mut groups = Vec::with_capacity(cfg.k_modes);
    for (k, ridge) in ridges.iter().enumerate() {
        let s = sample_concentrated_3d(ridge, cfg.n_features_per_mode, lambda, duration, fs, k + 1, seeds[k])
            .map_err(Error::at(Stage::Sampling))?;
        warnings.extend(s.warning);
        groups.push(s.atoms);
    }
    timings.sampling = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let times = x.relative_times();
    let (atoms, matrix) =
        build_dictionary(&groups, &times, alpha, cfg.memory_cap_bytes).map_err(Error::at(Stage::Dictionary))?;
    timings.dictionary = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let (sigma2_estimated, sigma2) =
        resolve_noise(x, alpha, &ridges, cfg.sigma_override, cfg.noise_floor).map_err(Error::at(Stage::Noise))?;
    let sigma_bound = (m as f64).sqrt() * sigma2.sqrt();
    timings.noise = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let opts = SolverOptions {
        max_iter: cfg.max_solver_iter,
        record_trace: true,
        ..Default::default()
    };
    let solution = solve_bpdn(&matrix, x.samples(), sigma_bound, &opts).map_err(Error::at(Stage::Solver))?;
    timings.solver = t0.elapsed().as_secs_f64();
    if !solution.converged {
        warnings.push(format!(
            "solver stopped after {} iterations ({:?}) with residual {:.3e} against bound {:.3e}",
            solution.iterations, solution.exit, solution.residual_norm, sigma_bound
        ));
    }

    let t0 = Instant::now();
    let parts = reconstruct_blocks(&matrix, &solution.coefficients, &atoms.blocks);
    let modes = parts
        .into_iter()
        .map(|p| x.with_samples(p))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at(Stage::Reconstruction))?;
    let labels = (1..=cfg.k_modes).map(|k| format!("mode{k}")).collect();
    let modes = ModeSet::new(modes, labels).map_err(Error::at(Stage::Reconstruction))?;
    timings.reconstruction = t0.elapsed().as_secs_f64();

    Ok(DecompositionResult {
        modes,
        ridges,
        atoms,
        solution,
        sigma2,
        sigma2_estimated,
        sigma_bound,
        warnings,
        timings,
    })
}
