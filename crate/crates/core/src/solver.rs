//! Basis pursuit denoising by spectral projected gradient on LASSO
//! subproblems with Newton root finding on the Pareto curve.
//!
//! The solver only sees [`LinearOperator`]; [`DenseMatrix`] is the one
//! implementation shipped here.

use std::collections::VecDeque;
use std::io::{self, Write};

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`, overwriting `y`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x = Aᵀ y`, overwriting `x`.
    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]);
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from row-major data, the natural literal layout.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[j * rows + i] = data[i * cols + j];
            }
        }
        Ok(out)
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    actual: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.column(j), y);
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = dot(self.column(j), y);
        }
    }
}

/// Euclidean projection onto `{w : ‖w‖₁ ≤ tau}` by sorted soft thresholding.
/// Equal magnitudes keep index order in the sort.
pub fn project_l1(v: &[f64], tau: f64) -> Vec<f64> {
    let tau = tau.max(0.0);
    if norm1(v) <= tau {
        return v.to_vec();
    }
    if tau == 0.0 {
        return vec![0.0; v.len()];
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    let mut csum = 0.0;
    let mut theta = 0.0;
    for (j, &i) in order.iter().enumerate() {
        let u = v[i].abs();
        csum += u;
        let t = (csum - tau) / (j + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    let mut w: Vec<f64> = v
        .iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    let n1 = norm1(&w);
    if n1 > tau {
        let s = tau / n1;
        w.iter_mut().for_each(|x| *x *= s);
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Total inner iterations across all subproblems.
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub bp_tol: f64,
    pub ls_tol: f64,
    pub dec_tol: f64,
    pub memory: usize,
    pub step_min: f64,
    pub step_max: f64,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol_feas: 1e-4,
            tol_gap: 1e-5,
            bp_tol: 1e-6,
            ls_tol: 1e-6,
            dec_tol: 1e-3,
            memory: 10,
            step_min: 1e-10,
            step_max: 1e10,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    /// The target is inside the residual ball; zero is the answer.
    ZeroSolution,
    RootFound,
    BasisPursuit,
    /// Gradient vanished before the residual bound was reached.
    LeastSquares,
    SubproblemOptimal,
    IterationLimit,
    LineSearchFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub tau: f64,
    pub residual_norm: f64,
    pub dual_norm: f64,
    pub matvecs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// `‖Aᵀr‖∞` at the returned iterate.
    pub dual_norm: f64,
    pub tau: f64,
    pub iterations: usize,
    pub matvec_count: usize,
    pub converged: bool,
    pub exit: ExitReason,
    pub trace: Vec<TraceRow>,
    /// `(τ, ‖r‖)` at Newton updates taken from a solved subproblem.
    pub pareto: Vec<(f64, f64)>,
}

impl SparseSolution {
    pub fn l1_norm(&self) -> f64 {
        norm1(&self.coefficients)
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,tau,residual_norm,dual_norm,matvecs")?;
        for t in &self.trace {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{}",
                t.iter, t.tau, t.residual_norm, t.dual_norm, t.matvecs
            )?;
        }
        Ok(())
    }
}

struct Counted<'a, A: ?Sized> {
    op: &'a A,
    count: usize,
}

impl<A: LinearOperator + ?Sized> Counted<'_, A> {
    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        self.count += 1;
        self.op.apply(x, y);
    }

    fn apply_adjoint(&mut self, y: &[f64], x: &mut [f64]) {
        self.count += 1;
        self.op.apply_adjoint(y, x);
    }
}

enum Mode {
    Lasso,
    Bpdn { sigma: f64 },
}

/// Runs on a target scaled to unit norm; callers undo the scaling.
fn spg<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    mut tau: f64,
    x0: Vec<f64>,
    mode: Mode,
    opts: &SolverOptions,
    scale: f64,
) -> Result<SparseSolution> {
    let n = op.cols();
    let m = op.rows();
    let mut a = Counted { op, count: 0 };
    let mut x = project_l1(&x0, tau);
    let mut r = vec![0.0; m];
    let mut ax = vec![0.0; m];
    a.apply(&x, &mut ax);
    for i in 0..m {
        r[i] = b[i] - ax[i];
    }
    let mut g = vec![0.0; n];
    a.apply_adjoint(&r, &mut g);
    g.iter_mut().for_each(|v| *v = -*v);
    let mut f = 0.5 * dot(&r, &r);
    let mut f_old = f;

    let mut step = {
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
        let p = project_l1(&trial, tau);
        let dx = norm_inf(&p.iter().zip(&x).map(|(p, x)| p - x).collect::<Vec<_>>());
        if dx < 1.0 / opts.step_max {
            opts.step_max
        } else {
            (1.0 / dx).clamp(opts.step_min, opts.step_max)
        }
    };

    let mut history: VecDeque<f64> = VecDeque::with_capacity(opts.memory);
    history.push_back(f);
    let mut trace = Vec::new();
    let mut pareto = Vec::new();
    let mut iter = 0;
    let mut updated_last = false;
    let mut stalled = false;
    let mut step_max = opts.step_max;
    let mut line_errors = 10;
    let mut dx = vec![0.0; n];
    let mut adx = vec![0.0; m];
    let mut r_new = vec![0.0; m];
    let mut g_new = vec![0.0; n];

    let exit = loop {
        let r_norm = norm2(&r);
        let g_norm = norm_inf(&g);
        let gap = dot(&r, &r) - dot(&r, b) + tau * g_norm;
        let r_gap = gap.abs() / f.max(1.0);
        if opts.record_trace {
            trace.push(TraceRow {
                iter,
                tau: tau * scale,
                residual_norm: r_norm * scale,
                dual_norm: g_norm * scale,
                matvecs: a.count,
            });
        }

        if r_norm <= opts.bp_tol {
            break ExitReason::BasisPursuit;
        }
        if g_norm <= opts.ls_tol * r_norm {
            break match mode {
                Mode::Lasso => ExitReason::SubproblemOptimal,
                Mode::Bpdn { .. } => ExitReason::LeastSquares,
            };
        }
        let mut update_tau = false;
        match mode {
            Mode::Lasso => {
                if r_gap <= opts.tol_gap || stalled {
                    break ExitReason::SubproblemOptimal;
                }
            }
            Mode::Bpdn { sigma } => {
                let r_err1 = (r_norm - sigma).abs() / sigma.max(f64::MIN_POSITIVE);
                let r_err2 = (f - 0.5 * sigma * sigma).abs() / f.max(1.0);
                if r_err1 <= opts.tol_feas && (r_gap <= opts.tol_gap || stalled) {
                    pareto.push((tau * scale, r_norm * scale));
                    break ExitReason::RootFound;
                }
                let optimal = r_gap <= opts.tol_gap.max(r_err2) || stalled;
                let change = (f - f_old).abs();
                let rel1 = change <= opts.dec_tol * f;
                let rel2 = change <= 0.1 * f * (r_norm - sigma).abs();
                update_tau = (optimal
                    || (rel1 && r_norm > 2.0 * sigma)
                    || (rel2 && r_norm <= 2.0 * sigma))
                    && !updated_last;
                if update_tau {
                    let tau_old = tau;
                    if r_gap <= opts.tol_gap {
                        pareto.push((tau_old * scale, r_norm * scale));
                    }
                    tau = (tau + r_norm * (r_norm - sigma) / g_norm).max(0.0);
                    if tau < tau_old {
                        x = project_l1(&x, tau);
                        a.apply(&x, &mut ax);
                        for i in 0..m {
                            r[i] = b[i] - ax[i];
                        }
                        a.apply_adjoint(&r, &mut g);
                        g.iter_mut().for_each(|v| *v = -*v);
                        f = 0.5 * dot(&r, &r);
                    }
                    history.clear();
                    history.push_back(f);
                }
            }
        }
        updated_last = update_tau;
        if iter >= opts.max_iter {
            break ExitReason::IterationLimit;
        }
        iter += 1;
        f_old = f;

        for j in 0..n {
            dx[j] = x[j] - step * g[j];
        }
        let p = project_l1(&dx, tau);
        for j in 0..n {
            dx[j] = p[j] - x[j];
        }
        let gtd = dot(&g, &dx);
        if !(gtd < 0.0) {
            stalled = true;
            continue;
        }
        let f_max = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        a.apply(&dx, &mut adx);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..10 {
            for i in 0..m {
                r_new[i] = r[i] - alpha * adx[i];
            }
            let f_new = 0.5 * dot(&r_new, &r_new);
            if f_new <= f_max + 1e-4 * alpha * gtd {
                accepted = Some(f_new);
                break;
            }
            let q = -gtd * alpha * alpha / (2.0 * (f_new - f - alpha * gtd));
            alpha = if q.is_finite() && q >= 0.1 * alpha && q <= 0.9 * alpha {
                q
            } else {
                alpha / 2.0
            };
        }
        let mut x_new: Vec<f64>;
        let f_new = match accepted {
            Some(fv) => {
                x_new = x.iter().zip(&dx).map(|(x, d)| x + alpha * d).collect();
                fv
            }
            None => {
                let mut s = step;
                let mut found = None;
                for _ in 0..10 {
                    let trial: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - s * g).collect();
                    x_new = project_l1(&trial, tau);
                    a.apply(&x_new, &mut ax);
                    for i in 0..m {
                        r_new[i] = b[i] - ax[i];
                    }
                    let fv = 0.5 * dot(&r_new, &r_new);
                    let d: f64 = g.iter().zip(&x_new).zip(&x).map(|((g, xn), x)| g * (xn - x)).sum();
                    if fv <= f_max + 1e-4 * d {
                        found = Some((x_new, fv));
                        break;
                    }
                    s /= 2.0;
                }
                match found {
                    Some((xn, fv)) => {
                        x_new = xn;
                        fv
                    }
                    None => {
                        if line_errors == 0 {
                            break ExitReason::LineSearchFailure;
                        }
                        line_errors -= 1;
                        step_max /= 10.0;
                        step = step.min(step_max);
                        continue;
                    }
                }
            }
        };

        a.apply_adjoint(&r_new, &mut g_new);
        g_new.iter_mut().for_each(|v| *v = -*v);
        let mut sts = 0.0;
        let mut sty = 0.0;
        let mut yty = 0.0;
        for j in 0..n {
            let s = x_new[j] - x[j];
            let y = g_new[j] - g[j];
            sts += s * s;
            sty += s * y;
            yty += y * y;
        }
        step = if sty <= 0.0 {
            step_max
        } else if iter % 2 == 0 {
            (sts / sty).clamp(opts.step_min, step_max)
        } else {
            (sty / yty).clamp(opts.step_min, step_max)
        };
        if !(f_new.is_finite() && x_new.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { iteration: iter });
        }
        x = x_new;
        std::mem::swap(&mut r, &mut r_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        stalled = false;
        if history.len() == opts.memory.max(1) {
            history.pop_front();
        }
        history.push_back(f);
    };

    a.apply(&x, &mut ax);
    for i in 0..m {
        r[i] = b[i] - ax[i];
    }
    a.apply_adjoint(&r, &mut g);
    let residual = norm2(&r);
    let converged = match mode {
        Mode::Lasso => exit == ExitReason::SubproblemOptimal || exit == ExitReason::BasisPursuit,
        Mode::Bpdn { sigma } => {
            exit != ExitReason::LineSearchFailure
                && residual <= sigma * (1.0 + opts.tol_feas) + opts.bp_tol
        }
    };
    Ok(SparseSolution {
        coefficients: x.iter().map(|v| v * scale).collect(),
        residual_norm: residual * scale,
        dual_norm: norm_inf(&g) * scale,
        tau: tau * scale,
        iterations: iter,
        matvec_count: a.count,
        converged,
        exit,
        trace,
        pareto,
    })
}

fn check_dims<A: LinearOperator + ?Sized>(op: &A, b: &[f64]) -> Result<()> {
    if b.len() != op.rows() {
        return Err(Error::LengthMismatch {
            expected: op.rows(),
            actual: b.len(),
        });
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("target entry {i} is not finite")));
    }
    Ok(())
}

fn zero_solution(n: usize, b_norm: f64, dual: f64, converged: bool, exit: ExitReason) -> SparseSolution {
    SparseSolution {
        coefficients: vec![0.0; n],
        residual_norm: b_norm,
        dual_norm: dual,
        tau: 0.0,
        iterations: 0,
        matvec_count: 0,
        converged,
        exit,
        trace: Vec::new(),
        pareto: Vec::new(),
    }
}

/// `min ‖Ac − b‖₂ s.t. ‖c‖₁ ≤ tau`, warm started from `x0`.
pub fn solve_lasso<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    tau: f64,
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<SparseSolution> {
    check_dims(op, b)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be non-negative, got {tau}")));
    }
    let n = op.cols();
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: x0.len(),
            });
        }
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 || tau == 0.0 {
        return Ok(zero_solution(n, b_norm, 0.0, true, ExitReason::SubproblemOptimal));
    }
    let bs: Vec<f64> = b.iter().map(|v| v / b_norm).collect();
    let x0 = x0.map_or_else(|| vec![0.0; n], |x| x.iter().map(|v| v / b_norm).collect());
    spg(op, &bs, tau / b_norm, x0, Mode::Lasso, opts, b_norm)
}

/// `min ‖c‖₁ s.t. ‖Ac − b‖₂ ≤ sigma`.
pub fn solve_bpdn<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    sigma: f64,
    opts: &SolverOptions,
) -> Result<SparseSolution> {
    check_dims(op, b)?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "residual bound must be non-negative, got {sigma}"
        )));
    }
    let n = op.cols();
    let b_norm = norm2(b);
    if b_norm <= sigma {
        return Ok(zero_solution(n, b_norm, 0.0, true, ExitReason::ZeroSolution));
    }
    let bs: Vec<f64> = b.iter().map(|v| v / b_norm).collect();
    spg(
        op,
        &bs,
        0.0,
        vec![0.0; n],
        Mode::Bpdn {
            sigma: sigma / b_norm,
        },
        opts,
        b_norm,
    )
}
