//! Discrete optimal transport under the quadratic cost `c(x, y) = ½‖x − y‖²`.
//!
//! Two solvers are provided. [`solve_exact`] returns an optimal coupling of the unregularized
//! linear program and is meant as a small-scale oracle: equal-size uniform problems go through
//! a Hungarian assignment solver, everything else through a generic simplex LP. [`sinkhorn`]
//! solves the entropic problem
//!
//! ```text
//! π_ij = a_i b_j exp((ψ_i + φ_j − c_ij) / ε)
//! ```
//!
//! with log-stabilized scaling iterations: potentials are stored in the log domain and the
//! kernel is rebuilt (absorbing the scalings) whenever the scalings drift too far from one,
//! so small ε does not underflow.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::{Error, Result};

/// Entry cap for [`solve_exact`] (`n·m`).
pub const EXACT_SIZE_CAP: usize = 250_000;

/// Entry cap for materialized plans.
pub const PLAN_SIZE_CAP: usize = 16_000_000;

const WEIGHT_SUM_TOL: f64 = 1e-10;

/// A weighted point cloud: one point per row, nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                found: weights.len(),
            });
        }
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidParameter("measure has no atoms".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            points: points.as_standard_layout().into_owned(),
            weights,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Same support, new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), weights)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (row, w) in self.points.rows().into_iter().zip(&self.weights) {
            for (acc, v) in m.iter_mut().zip(row.iter()) {
                *acc += w * v;
            }
        }
        m
    }
}

/// A coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
}

impl TransportPlan {
    /// L1 distance between the plan's marginals and the given weights.
    pub fn marginal_error(&self, source: &[f64], target: &[f64]) -> f64 {
        let rows: f64 = self
            .coupling
            .rows()
            .into_iter()
            .zip(source)
            .map(|(r, a)| (r.sum() - a).abs())
            .sum();
        let cols: f64 = self
            .coupling
            .columns()
            .into_iter()
            .zip(target)
            .map(|(c, b)| (c.sum() - b).abs())
            .sum();
        rows + cols
    }

    /// `Σ_ij π_ij c_ij`.
    pub fn cost(&self, cost: &Array2<f64>) -> f64 {
        self.coupling.iter().zip(cost.iter()).map(|(p, c)| p * c).sum()
    }
}

/// Which additive constant was fixed on the potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// `Σ_i a_i ψ_i = 0`.
    SourceMeanZero,
}

/// Entropic dual potentials: `ψ` on the source atoms, `φ` on the target atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub epsilon: f64,
    pub normalization: Normalization,
}

/// Outcome of a Sinkhorn solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinkhornReport {
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    pub warm_start: bool,
}

/// Tolerance and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SinkhornConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

fn check_dims(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    Ok(())
}

#[inline]
fn half_sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    0.5 * x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn cost_between(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let mut c = Array2::zeros((x.nrows(), y.nrows()));
    for (i, xi) in x.rows().into_iter().enumerate() {
        for (j, yj) in y.rows().into_iter().enumerate() {
            c[[i, j]] = half_sq_dist(xi, yj);
        }
    }
    c
}

/// `c_ij = ½‖x_i − y_j‖²`.
pub fn cost_matrix(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<Array2<f64>> {
    check_dims(source, target)?;
    Ok(cost_between(source.points.view(), target.points.view()))
}

/// Optimal coupling of the unregularized problem.
pub fn solve_exact(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<TransportPlan> {
    check_dims(source, target)?;
    let (n, m) = (source.len(), target.len());
    if n * m > EXACT_SIZE_CAP {
        return Err(Error::SizeCap {
            size: n * m,
            cap: EXACT_SIZE_CAP,
        });
    }
    let total_a: f64 = source.weights.iter().sum();
    let total_b: f64 = target.weights.iter().sum();
    if (total_a - total_b).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Infeasible(format!(
            "total masses differ: {total_a} vs {total_b}"
        )));
    }
    let cost = cost_matrix(source, target)?;
    let uniform = |w: &[f64]| {
        let u = 1.0 / w.len() as f64;
        w.iter().all(|x| (x - u).abs() <= 1e-14)
    };
    if n == m && uniform(&source.weights) && uniform(&target.weights) {
        let assignment = hungarian(&cost);
        let mut coupling = Array2::zeros((n, m));
        for (i, j) in assignment.into_iter().enumerate() {
            coupling[[i, j]] = 1.0 / n as f64;
        }
        return Ok(TransportPlan { coupling });
    }
    transport_lp(&cost, &source.weights, &target.weights)
}

/// Minimum-cost perfect matching on a square cost matrix; returns the column of each row.
pub fn hungarian(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    // 1-based shortest augmenting path formulation with row/column potentials.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn transport_lp(cost: &Array2<f64>, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let (n, m) = cost.dim();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = cost
        .iter()
        .map(|&c| problem.add_var(c, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        problem.add_constraint(&row, ComparisonOp::Eq, a[i]);
    }
    // The last column constraint is implied by the others.
    for j in 0..m.saturating_sub(1) {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], 1.0)).collect();
        problem.add_constraint(&col, ComparisonOp::Eq, b[j]);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::Infeasible(e.to_string()))?;
    let mut coupling = Array2::zeros((n, m));
    for (k, var) in vars.iter().enumerate() {
        coupling[[k / m, k % m]] = solution[*var].max(0.0);
    }
    Ok(TransportPlan { coupling })
}

/// Result of the internal solver: potentials on the full supports plus the final kernel
/// restricted to the positive-weight atoms.
pub(crate) struct Solved {
    pub potentials: DualPotentials,
    pub report: SinkhornReport,
    /// Row-major kernel `a_i b_j exp((ψ_i + φ_j − c_ij)/ε)` over `rows × cols`.
    pub kernel: Vec<f64>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Entropic optimal transport between `source` and `target`.
///
/// Non-convergence is not an error: the returned report carries `converged = false` and the
/// last iterate is returned. `warm` seeds the potentials; it changes the iteration count,
/// not the fixed point.
pub fn sinkhorn(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    epsilon: f64,
    config: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<(DualPotentials, SinkhornReport)> {
    let solved = solve_entropic(source, target, epsilon, config, warm)?;
    Ok((solved.potentials, solved.report))
}

pub(crate) fn solve_entropic(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    epsilon: f64,
    config: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<Solved> {
    check_dims(source, target)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if let Some(w) = warm {
        if w.psi.len() != source.len() || w.phi.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: source.len(),
                found: w.psi.len(),
            });
        }
    }
    let rows: Vec<usize> = (0..source.len()).filter(|&i| source.weights[i] > 0.0).collect();
    let cols: Vec<usize> = (0..target.len()).filter(|&j| target.weights[j] > 0.0).collect();
    let xs = source.points.select(ndarray::Axis(0), &rows);
    let ys = target.points.select(ndarray::Axis(0), &cols);
    let cost = cost_between(xs.view(), ys.view());
    let a: Vec<f64> = rows.iter().map(|&i| source.weights[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| target.weights[j]).collect();

    let mut solver = Scaling::new(cost, a, b, epsilon, config.tol);
    let warm_start = warm.is_some();
    match warm {
        Some(w) => {
            let f: Vec<f64> = rows.iter().map(|&i| w.psi[i]).collect();
            let g: Vec<f64> = cols.iter().map(|&j| w.phi[j]).collect();
            solver.f = f;
            solver.g = g;
            if solver.f.iter().chain(&solver.g).any(|v| !v.is_finite()) {
                solver.f.iter_mut().for_each(|v| *v = 0.0);
                solver.g.iter_mut().for_each(|v| *v = 0.0);
                solver.log_sweep();
            }
            solver.finish(config.max_iter);
        }
        None => solver.run_annealed(config.max_iter),
    }
    let (converged, error) = (solver.converged, solver.error);
    let iterations = solver.iterations;

    // Extend the potentials to zero-weight atoms with the Schrödinger formula.
    let eps = epsilon;
    let mut psi = vec![0.0; source.len()];
    let mut phi = vec![0.0; target.len()];
    for (k, &i) in rows.iter().enumerate() {
        psi[i] = solver.f[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        phi[j] = solver.g[k];
    }
    if rows.len() < source.len() {
        let log_b: Vec<f64> = solver.b.iter().map(|v| v.ln()).collect();
        for i in (0..source.len()).filter(|&i| source.weights[i] == 0.0) {
            let xi = source.points.row(i);
            let terms = ys
                .rows()
                .into_iter()
                .zip(&solver.g)
                .zip(&log_b)
                .map(|((y, g), lb)| lb + (g - half_sq_dist(xi, y)) / eps);
            psi[i] = -eps * log_sum_exp(terms);
        }
    }
    if cols.len() < target.len() {
        let log_a: Vec<f64> = solver.a.iter().map(|v| v.ln()).collect();
        for j in (0..target.len()).filter(|&j| target.weights[j] == 0.0) {
            let yj = target.points.row(j);
            let terms = xs
                .rows()
                .into_iter()
                .zip(&solver.f)
                .zip(&log_a)
                .map(|((x, f), la)| la + (f - half_sq_dist(x, yj)) / eps);
            phi[j] = -eps * log_sum_exp(terms);
        }
    }
    Ok(Solved {
        potentials: DualPotentials {
            psi,
            phi,
            epsilon,
            normalization: Normalization::SourceMeanZero,
        },
        report: SinkhornReport {
            iterations,
            marginal_error: error,
            converged,
            warm_start,
        },
        kernel: solver.kernel,
        rows,
        cols,
    })
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Scalings outside `[1/BOUND, BOUND]` trigger absorption into the potentials.
const SCALING_BOUND: f64 = 1e50;
/// Kernel row or column sums below this trigger a log-domain sweep.
const KERNEL_FLOOR: f64 = 1e-250;
/// Newton polishing applies to problems with at most this many target atoms...
const NEWTON_MAX_DIM: usize = 1000;
/// ...and at most this many plan entries.
const NEWTON_MAX_SIZE: usize = 400_000;
/// Scaling iterations at the target ε before Newton takes over.
const NEWTON_TRIGGER: usize = 300;

struct Scaling {
    n: usize,
    m: usize,
    cost: Array2<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    eps: f64,
    tol: f64,
    f: Vec<f64>,
    g: Vec<f64>,
    kernel: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    row_buf: Vec<f64>,
    col_buf: Vec<f64>,
    iterations: usize,
    error: f64,
    converged: bool,
}

impl Scaling {
    fn new(cost: Array2<f64>, a: Vec<f64>, b: Vec<f64>, eps: f64, tol: f64) -> Self {
        let (n, m) = cost.dim();
        Self {
            n,
            m,
            log_a: a.iter().map(|v| v.ln()).collect(),
            log_b: b.iter().map(|v| v.ln()).collect(),
            cost,
            a,
            b,
            eps,
            tol,
            f: vec![0.0; n],
            g: vec![0.0; m],
            kernel: vec![0.0; n * m],
            u: vec![1.0; n],
            v: vec![1.0; m],
            row_buf: vec![0.0; n],
            col_buf: vec![0.0; m],
            iterations: 0,
            error: f64::INFINITY,
            converged: false,
        }
    }

    /// Cold start: geometric ε schedule from the cost scale down to the target ε.
    fn run_annealed(&mut self, max_iter: usize) {
        let target_eps = self.eps;
        let target_tol = self.tol;
        let scale = self.cost.iter().cloned().fold(0.0, f64::max);
        let mut stages = Vec::new();
        let mut e = scale;
        while e > 4.0 * target_eps {
            stages.push(e);
            e *= 0.25;
        }
        self.log_sweep();
        for stage in stages {
            self.eps = stage;
            self.tol = target_tol.max(1e-3);
            self.run(max_iter);
            if self.iterations >= max_iter {
                break;
            }
        }
        self.eps = target_eps;
        self.tol = target_tol;
        self.converged = false;
        self.finish(max_iter);
    }

    /// Scaling iterations, switching to Newton steps on the dual when a small problem
    /// stalls. Both phases stop on the same full marginal check.
    fn finish(&mut self, max_iter: usize) {
        if self.m > NEWTON_MAX_DIM || self.n * self.m > NEWTON_MAX_SIZE {
            self.run(max_iter);
            return;
        }
        self.run(max_iter.min(self.iterations + NEWTON_TRIGGER));
        if self.converged || self.iterations >= max_iter {
            return;
        }
        self.newton(max_iter);
        if !self.converged {
            self.run(max_iter);
        }
    }

    /// Damped Newton ascent on the dual. Eliminates `f` and solves the Schur system for
    /// `g` with its last entry pinned (the dual is invariant under `f + c, g - c`).
    fn newton(&mut self, max_iter: usize) {
        let (n, m) = (self.n, self.m);
        let eps = self.eps;
        let mut err = self.rebuild();
        while self.iterations < max_iter {
            self.error = err;
            if err <= self.tol {
                self.converged = true;
                return;
            }
            if !err.is_finite() || self.degenerate() {
                return;
            }
            let r: Vec<f64> = (0..n).map(|i| self.row_buf[i] - self.a[i]).collect();
            let s: Vec<f64> = (0..m).map(|j| self.col_buf[j] - self.b[j]).collect();
            let k = m - 1;
            let mut schur = DMatrix::<f64>::zeros(k, k);
            let mut rhs = DVector::<f64>::zeros(k);
            for j in 0..k {
                schur[(j, j)] = self.col_buf[j];
                rhs[j] = -eps * s[j];
            }
            for i in 0..n {
                let row = &self.kernel[i * m..(i + 1) * m];
                let inv = 1.0 / self.row_buf[i];
                for j in 0..k {
                    let pj = row[j] * inv;
                    if pj == 0.0 {
                        continue;
                    }
                    rhs[j] += eps * r[i] * pj;
                    for l in 0..=j {
                        schur[(j, l)] -= pj * row[l];
                    }
                }
            }
            for j in 0..k {
                for l in 0..j {
                    schur[(l, j)] = schur[(j, l)];
                }
            }
            // Near-permutation plans make the system nearly singular; shift the diagonal
            // until the factorization succeeds and the step reduces the marginal error.
            let scale = (0..k).map(|j| schur[(j, j)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let (f0, g0) = (self.f.clone(), self.g.clone());
            let mut accepted = false;
            let mut shift = 0.0;
            while !accepted && shift <= scale {
                let mut regularized = schur.clone();
                for j in 0..k {
                    regularized[(j, j)] += shift;
                }
                shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
                let Some(chol) = regularized.cholesky() else { continue };
                let mut dg = chol.solve(&rhs).as_slice().to_vec();
                dg.push(0.0);
                let df: Vec<f64> = (0..n)
                    .map(|i| -(eps * r[i] + dot(&self.kernel[i * m..(i + 1) * m], &dg)) / self.row_buf[i])
                    .collect();
                let mut step = 1.0;
                for _ in 0..20 {
                    for (f, (x, d)) in self.f.iter_mut().zip(f0.iter().zip(&df)) {
                        *f = x + step * d;
                    }
                    for (g, (x, d)) in self.g.iter_mut().zip(g0.iter().zip(&dg)) {
                        *g = x + step * d;
                    }
                    let trial = self.rebuild();
                    if trial.is_finite() && trial < err {
                        err = trial;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
            }
            self.iterations += 1;
            if !accepted {
                self.f = f0;
                self.g = g0;
                self.error = self.rebuild();
                return;
            }
            self.normalize();
            err = self.rebuild();
        }
        self.error = err;
        self.converged = err <= self.tol;
    }

    /// Exact block updates in the log domain: `g` then `f`.
    fn log_sweep(&mut self) {
        let eps = self.eps;
        let (n, m) = (self.n, self.m);
        let c = self.cost.as_slice().expect("standard layout");
        let mut colmax = vec![f64::NEG_INFINITY; m];
        for i in 0..n {
            let base = self.log_a[i] + self.f[i] / eps;
            let row = &c[i * m..(i + 1) * m];
            for j in 0..m {
                let t = base - row[j] / eps;
                if t > colmax[j] {
                    colmax[j] = t;
                }
            }
        }
        let mut colsum = vec![0.0; m];
        for i in 0..n {
            let base = self.log_a[i] + self.f[i] / eps;
            let row = &c[i * m..(i + 1) * m];
            for j in 0..m {
                colsum[j] += (base - row[j] / eps - colmax[j]).exp();
            }
        }
        for j in 0..m {
            self.g[j] = -eps * (colmax[j] + colsum[j].ln());
        }
        for i in 0..n {
            let row = &c[i * m..(i + 1) * m];
            let mut mx = f64::NEG_INFINITY;
            for j in 0..m {
                let t = self.log_b[j] + (self.g[j] - row[j]) / eps;
                if t > mx {
                    mx = t;
                }
            }
            let mut s = 0.0;
            for j in 0..m {
                s += (self.log_b[j] + (self.g[j] - row[j]) / eps - mx).exp();
            }
            self.f[i] = -eps * (mx + s.ln());
        }
        self.iterations += 1;
    }

    fn normalize(&mut self) {
        let shift: f64 = self.a.iter().zip(&self.f).map(|(a, f)| a * f).sum();
        self.f.iter_mut().for_each(|f| *f -= shift);
        self.g.iter_mut().for_each(|g| *g += shift);
    }

    /// Rebuilds the kernel from the potentials; returns `(row sums, col sums)` in the buffers
    /// and the full L1 marginal error.
    fn rebuild(&mut self) -> f64 {
        let eps = self.eps;
        let (n, m) = (self.n, self.m);
        let c = self.cost.as_slice().expect("standard layout");
        let gb: Vec<f64> = (0..m).map(|j| self.log_b[j] + self.g[j] / eps).collect();
        self.col_buf.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let fa = self.log_a[i] + self.f[i] / eps;
            let row = &c[i * m..(i + 1) * m];
            let krow = &mut self.kernel[i * m..(i + 1) * m];
            let mut s = 0.0;
            for j in 0..m {
                let k = (fa + gb[j] - row[j] / eps).exp();
                krow[j] = k;
                s += k;
            }
            self.row_buf[i] = s;
            for (acc, k) in self.col_buf.iter_mut().zip(krow.iter()) {
                *acc += k;
            }
        }
        let rows: f64 = self.row_buf.iter().zip(&self.a).map(|(s, a)| (s - a).abs()).sum();
        let cols: f64 = self.col_buf.iter().zip(&self.b).map(|(s, b)| (s - b).abs()).sum();
        rows + cols
    }

    fn degenerate(&self) -> bool {
        self.row_buf
            .iter()
            .chain(&self.col_buf)
            .any(|s| !(s.is_finite() && *s > KERNEL_FLOOR))
    }

    fn absorb(&mut self) {
        let eps = self.eps;
        for (f, u) in self.f.iter_mut().zip(&self.u) {
            *f += eps * u.ln();
        }
        for (g, v) in self.g.iter_mut().zip(&self.v) {
            *g += eps * v.ln();
        }
        self.u.iter_mut().for_each(|u| *u = 1.0);
        self.v.iter_mut().for_each(|v| *v = 1.0);
    }

    /// Alternates kernel-domain scaling updates with periodic absorption until the
    /// potentials pass the full marginal check on a freshly built kernel.
    fn run(&mut self, max_iter: usize) {
        let inner_target = 0.5 * self.tol;
        loop {
            let mut err = self.rebuild();
            if !err.is_finite() || self.degenerate() {
                self.log_sweep();
                self.normalize();
                err = self.rebuild();
            }
            self.error = err;
            if err <= self.tol {
                self.converged = true;
                return;
            }
            if self.iterations >= max_iter {
                self.converged = false;
                return;
            }
            let reached = self.scale_until(inner_target, max_iter);
            self.absorb();
            self.normalize();
            if !reached && self.iterations >= max_iter {
                self.error = self.rebuild();
                self.converged = self.error <= self.tol;
                return;
            }
        }
    }

    /// Kernel-domain iterations from `u = v = 1`. Returns true once the row error of the
    /// current iterate is at most `target` (columns are exact after each `v` update).
    fn scale_until(&mut self, target: f64, max_iter: usize) -> bool {
        let (n, m) = (self.n, self.m);
        loop {
            // v = b / Kᵀu
            self.col_buf.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                let ui = self.u[i];
                let krow = &self.kernel[i * m..(i + 1) * m];
                for (acc, k) in self.col_buf.iter_mut().zip(krow) {
                    *acc += ui * k;
                }
            }
            for j in 0..m {
                self.v[j] = self.b[j] / self.col_buf[j];
            }
            // row error of (u, v), then u = a / Kv
            let mut err = 0.0;
            for i in 0..n {
                let kv = dot(&self.kernel[i * m..(i + 1) * m], &self.v);
                self.row_buf[i] = kv;
                err += (self.u[i] * kv - self.a[i]).abs();
            }
            self.iterations += 1;
            if err <= target {
                return true;
            }
            if !err.is_finite() {
                return false;
            }
            for i in 0..n {
                self.u[i] = self.a[i] / self.row_buf[i];
            }
            let out_of_range = self
                .u
                .iter()
                .chain(&self.v)
                .any(|s| !(*s < SCALING_BOUND && *s > 1.0 / SCALING_BOUND));
            if out_of_range || self.iterations >= max_iter {
                return false;
            }
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let cx = x.chunks_exact(4);
    let cy = y.chunks_exact(4);
    let (rx, ry) = (cx.remainder(), cy.remainder());
    for (a, b) in cx.zip(cy) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (a, b) in rx.iter().zip(ry) {
        s += a * b;
    }
    s
}

/// Barycentric (entropic) map `x ↦ Σ_j y_j w_j(x) / Σ_j w_j(x)` with
/// `w_j(x) = ν_j exp((φ_j − ½‖x − y_j‖²)/ε)`.
pub fn entropic_map(potentials: &DualPotentials, target: &DiscreteMeasure, x: &[f64]) -> Vec<f64> {
    let eps = potentials.epsilon;
    let d = target.dim();
    let logits: Vec<f64> = target
        .points
        .rows()
        .into_iter()
        .zip(&potentials.phi)
        .zip(&target.weights)
        .map(|((y, phi), w)| {
            if *w > 0.0 {
                let c = 0.5
                    * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                w.ln() + (phi - c) / eps
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; d];
    let mut total = 0.0;
    for (y, l) in target.points.rows().into_iter().zip(&logits) {
        if *l == f64::NEG_INFINITY {
            continue;
        }
        let w = (l - max).exp();
        total += w;
        for (o, v) in out.iter_mut().zip(y.iter()) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Materializes `π_ij = a_i b_j exp((ψ_i + φ_j − c_ij)/ε)`.
pub fn plan_from_potentials(
    potentials: &DualPotentials,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<TransportPlan> {
    check_dims(source, target)?;
    let (n, m) = (source.len(), target.len());
    if n * m > PLAN_SIZE_CAP {
        return Err(Error::SizeCap {
            size: n * m,
            cap: PLAN_SIZE_CAP,
        });
    }
    if potentials.psi.len() != n || potentials.phi.len() != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: potentials.psi.len(),
        });
    }
    let eps = potentials.epsilon;
    let cost = cost_matrix(source, target)?;
    let mut coupling = Array2::zeros((n, m));
    for i in 0..n {
        let a = source.weights[i];
        if a == 0.0 {
            continue;
        }
        for j in 0..m {
            let b = target.weights[j];
            if b == 0.0 {
                continue;
            }
            coupling[[i, j]] =
                a * b * ((potentials.psi[i] + potentials.phi[j] - cost[[i, j]]) / eps).exp();
        }
    }
    Ok(TransportPlan { coupling })
}
