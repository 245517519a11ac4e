//! Two-dimensional SRMD: uniform `(τ, ξ)` atoms, BPDN, and DBSCAN grouping of
//! the surviving atoms in the time-frequency plane.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::features::{build_dictionary, sample_uniform_2d, FeatureDictionary, DEFAULT_MEMORY_CAP};
use crate::pipeline::{default_alpha, derive_seeds, resolve_noise};
use crate::signal::{ModeSet, Signal};
use crate::solver::{solve_bpdn, DenseMatrix, LinearOperator, SolverOptions, SparseSolution};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    /// Cluster per point, `-1` for noise.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
}

impl ClusterLabeling {
    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    /// Point indices of each cluster.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// Uniform grid of `eps`-sized cells for fixed-radius neighbor queries.
struct CellIndex {
    cells: HashMap<(i64, i64), Vec<usize>>,
    eps: f64,
}

impl CellIndex {
    fn new(points: &[[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { cells, eps }
    }

    fn key(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// Indices within `eps` of `points[i]`, itself included, ascending.
    fn neighbors(&self, points: &[[f64; 2]], i: usize) -> Vec<usize> {
        let p = points[i];
        let (cx, cy) = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(bucket.iter().copied().filter(|&j| dist2(&p, &points[j]) <= eps2));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// DBSCAN with the point itself counted in its neighborhood. Clusters are the
/// connected components of core points; a border point joins the cluster of
/// its nearest core neighbor, so the partition does not depend on visiting
/// order. Clusters are numbered by their first point in input order.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Result<ClusterLabeling> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidArgument("min_pts must be at least 1".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite point coordinate".into()));
    }
    let n = points.len();
    let index = CellIndex::new(points, eps);
    let neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| index.neighbors(points, i)).collect();
    let core: Vec<bool> = neighborhoods.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![-1i64; n];
    let mut n_clusters = 0usize;
    for start in 0..n {
        if !core[start] || labels[start] >= 0 {
            continue;
        }
        let id = n_clusters as i64;
        n_clusters += 1;
        labels[start] = id;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighborhoods[p] {
                if core[q] && labels[q] < 0 {
                    labels[q] = id;
                    stack.push(q);
                }
            }
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let nearest = neighborhoods[i]
            .iter()
            .filter(|&&j| core[j])
            .min_by(|&&a, &&b| dist2(&points[i], &points[a]).total_cmp(&dist2(&points[i], &points[b])));
        if let Some(&j) = nearest {
            labels[i] = labels[j];
        }
    }

    // renumber by first appearance so labels follow input order
    let mut remap = vec![-1i64; n_clusters];
    let mut next = 0;
    for l in labels.iter_mut().filter(|l| **l >= 0) {
        let r = &mut remap[*l as usize];
        if *r < 0 {
            *r = next;
            next += 1;
        }
        *l = *r;
    }
    Ok(ClusterLabeling { labels, n_clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrmdConfig {
    /// Total number of atoms.
    pub n_features: usize,
    pub alpha: Option<f64>,
    /// DBSCAN radius in the unit square `(τ/L, ξ/f_max)`.
    pub eps: f64,
    pub min_pts: usize,
    /// Atoms with `|c| < weight_floor · max|c|` are not clustered.
    pub weight_floor: f64,
    pub max_solver_iter: usize,
    pub seed: u64,
    pub sigma_override: Option<f64>,
    pub noise_floor: f64,
    pub memory_cap_bytes: usize,
}

impl Default for SrmdConfig {
    fn default() -> Self {
        Self {
            n_features: 10000,
            alpha: None,
            eps: 0.03,
            min_pts: 4,
            weight_floor: 1e-3,
            max_solver_iter: 1000,
            seed: 0,
            sigma_override: None,
            noise_floor: 1e-10,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }
}

impl SrmdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_features == 0 {
            return bad("n_features must be at least 1".into());
        }
        if self.max_solver_iter == 0 {
            return bad("max_solver_iter must be at least 1".into());
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("alpha must be positive, got {a}"));
            }
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return bad(format!("weight_floor must lie in [0, 1), got {}", self.weight_floor));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma must be non-negative, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SrmdResult {
    /// One mode per cluster, by decreasing energy.
    pub modes: ModeSet,
    pub atoms: FeatureDictionary,
    pub solution: SparseSolution,
    /// Dictionary columns that passed the weight floor.
    pub retained: Vec<usize>,
    /// Labels over `retained`.
    pub labeling: ClusterLabeling,
    /// Contribution of every atom not assigned to a cluster.
    pub discarded: Signal,
    pub sigma2: f64,
    pub warnings: Vec<String>,
    pub runtime_s: f64,
}

fn partial_sum(matrix: &DenseMatrix, coefficients: &[f64], columns: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; coefficients.len()];
    for &j in columns {
        c[j] = coefficients[j];
    }
    let mut y = vec![0.0; matrix.rows()];
    matrix.apply(&c, &mut y);
    y
}

pub fn srmd_decompose(x: &Signal, cfg: &SrmdConfig) -> Result<SrmdResult> {
    cfg.validate()?;
    let start = Instant::now();
    let fs = x.sample_rate();
    let duration = x.duration();
    let f_max = fs / 2.0;
    let alpha = cfg.alpha.unwrap_or_else(|| default_alpha(duration));
    let mut warnings = Vec::new();

    let seed = derive_seeds(cfg.seed, 1)[0];
    let atoms = sample_uniform_2d(cfg.n_features, duration, f_max, seed);
    let times = x.relative_times();
    let (dict, matrix) =
        build_dictionary(&[atoms], &times, alpha, cfg.memory_cap_bytes).map_err(Error::at(Stage::Dictionary))?;

    let (_, sigma2) = if x.energy() == 0.0 {
        (None, 0.0)
    } else {
        resolve_noise(x, alpha, &[], cfg.sigma_override, cfg.noise_floor).map_err(Error::at(Stage::Noise))?
    };
    let bound = (x.len() as f64 * sigma2).sqrt();
    let opts = SolverOptions {
        max_iter: cfg.max_solver_iter,
        record_trace: true,
        ..Default::default()
    };
    let solution = solve_bpdn(&matrix, x.samples(), bound, &opts).map_err(Error::at(Stage::Solver))?;
    if !solution.converged {
        warnings.push(format!(
            "solver stopped after {} iterations ({:?}) with residual {:.3e} against bound {:.3e}",
            solution.iterations, solution.exit, solution.residual_norm, bound
        ));
    }

    let c = &solution.coefficients;
    let c_max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let retained: Vec<usize> = if c_max > 0.0 {
        (0..c.len()).filter(|&j| c[j].abs() >= cfg.weight_floor * c_max).collect()
    } else {
        Vec::new()
    };
    let points: Vec<[f64; 2]> = retained
        .iter()
        .map(|&j| [dict.atoms[j].tau / duration, dict.atoms[j].xi / f_max])
        .collect();
    let labeling = dbscan(&points, cfg.eps, cfg.min_pts)?;

    let mut parts: Vec<Vec<f64>> = labeling
        .groups()
        .iter()
        .map(|g| {
            let cols: Vec<usize> = g.iter().map(|&i| retained[i]).collect();
            partial_sum(&matrix, c, &cols)
        })
        .collect();
    let mut clustered = vec![false; c.len()];
    for (i, &l) in labeling.labels.iter().enumerate() {
        clustered[retained[i]] = l >= 0;
    }
    let rest: Vec<usize> = (0..c.len()).filter(|&j| !clustered[j] && c[j] != 0.0).collect();
    let discarded = x.with_samples(partial_sum(&matrix, c, &rest))?;

    let energy = |v: &Vec<f64>| v.iter().map(|s| s * s).sum::<f64>();
    parts.sort_by(|a, b| energy(b).total_cmp(&energy(a)));
    let modes = if parts.is_empty() {
        ModeSet::empty()
    } else {
        let labels = (1..=parts.len()).map(|k| format!("cluster{k}")).collect();
        let signals = parts.into_iter().map(|p| x.with_samples(p)).collect::<Result<Vec<_>>>()?;
        ModeSet::new(signals, labels)?
    };

    Ok(SrmdResult {
        modes,
        atoms: dict,
        solution,
        retained,
        labeling,
        discarded,
        sigma2,
        warnings,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
