//! Samplers and Monte Carlo experiment drivers.
//!
//! Distribution specifications are generic over their scalar type so that experiment
//! configurations can leave a parameter symbolic (for example a covariance entry named
//! `beta`) and resolve it per sweep value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::contribution::CurveKind;
use crate::linalg::cholesky;
use crate::quantile::Sample;
use crate::rng::{derive_seed, stream_rng, streams};
use crate::sdtest::{Decision, Statistic, TestConfig, TwoSampleFit};
use crate::{parallel, Error, Result};

/// Size of the batch used to estimate the mean for centering.
pub const CENTERING_DRAWS: usize = 50_000;

/// A number, or the name of a sweep parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Value(f64),
    Param(String),
}

impl Scalar {
    fn resolve(&self, params: &BTreeMap<String, f64>) -> Result<f64> {
        match self {
            Scalar::Value(v) => Ok(*v),
            Scalar::Param(name) => params
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("unbound parameter '{name}'"))),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Value(v)
    }
}

/// Distribution of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec<T = f64> {
    Multinormal {
        mean: Vec<T>,
        cov: Vec<Vec<T>>,
    },
    /// Azzalini skew-t with location `xi`, scale matrix `sigma`, shape `alpha`, `nu` degrees
    /// of freedom; `center` subtracts a Monte Carlo estimate of the mean.
    SkewT {
        xi: Vec<T>,
        sigma: Vec<Vec<T>>,
        alpha: Vec<T>,
        nu: T,
        #[serde(default)]
        center: bool,
    },
    GaussMixture {
        weights: Vec<T>,
        means: Vec<Vec<T>>,
        covs: Vec<Vec<Vec<T>>>,
    },
    /// Normal marginals joined by a Clayton copula.
    ClaytonNormal {
        means: Vec<T>,
        sds: Vec<T>,
        theta: T,
    },
    /// `(tZ₁, Z₂)` when `Z₁ > 0`, else `(Z₁, Z₂)`, with `Z ~ N(0, I₂)`.
    Stretched {
        t: T,
    },
    /// Planar counterclockwise rotation of another law.
    Rotated {
        inner: Box<DistributionSpec<T>>,
        angle_deg: T,
    },
    /// Scalar multiple of another law.
    Scaled {
        inner: Box<DistributionSpec<T>>,
        factor: T,
    },
}

fn map_vec(v: &[Scalar], p: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    v.iter().map(|s| s.resolve(p)).collect()
}

fn map_mat(m: &[Vec<Scalar>], p: &BTreeMap<String, f64>) -> Result<Vec<Vec<f64>>> {
    m.iter().map(|r| map_vec(r, p)).collect()
}

impl DistributionSpec<Scalar> {
    /// Substitutes sweep parameters.
    pub fn resolve(&self, p: &BTreeMap<String, f64>) -> Result<DistributionSpec<f64>> {
        use DistributionSpec as D;
        Ok(match self {
            D::Multinormal { mean, cov } => D::Multinormal {
                mean: map_vec(mean, p)?,
                cov: map_mat(cov, p)?,
            },
            D::SkewT {
                xi,
                sigma,
                alpha,
                nu,
                center,
            } => D::SkewT {
                xi: map_vec(xi, p)?,
                sigma: map_mat(sigma, p)?,
                alpha: map_vec(alpha, p)?,
                nu: nu.resolve(p)?,
                center: *center,
            },
            D::GaussMixture {
                weights,
                means,
                covs,
            } => D::GaussMixture {
                weights: map_vec(weights, p)?,
                means: map_mat(means, p)?,
                covs: covs.iter().map(|c| map_mat(c, p)).collect::<Result<_>>()?,
            },
            D::ClaytonNormal { means, sds, theta } => D::ClaytonNormal {
                means: map_vec(means, p)?,
                sds: map_vec(sds, p)?,
                theta: theta.resolve(p)?,
            },
            D::Stretched { t } => D::Stretched { t: t.resolve(p)? },
            D::Rotated { inner, angle_deg } => D::Rotated {
                inner: Box::new(inner.resolve(p)?),
                angle_deg: angle_deg.resolve(p)?,
            },
            D::Scaled { inner, factor } => D::Scaled {
                inner: Box::new(inner.resolve(p)?),
                factor: factor.resolve(p)?,
            },
        })
    }
}

impl DistributionSpec<f64> {
    pub fn standard_normal(d: usize) -> Self {
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        DistributionSpec::Multinormal {
            mean: vec![0.0; d],
            cov,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Multinormal { mean, .. } => mean.len(),
            DistributionSpec::SkewT { xi, .. } => xi.len(),
            DistributionSpec::GaussMixture { means, .. } => means.first().map_or(0, |m| m.len()),
            DistributionSpec::ClaytonNormal { means, .. } => means.len(),
            DistributionSpec::Stretched { .. } | DistributionSpec::Rotated { .. } => 2,
            DistributionSpec::Scaled { inner, .. } => inner.dim(),
        }
    }
}

/// Draws `n` observations; deterministic per `seed`.
pub fn sample(spec: &DistributionSpec<f64>, n: usize, seed: u64) -> Result<Sample> {
    let rows = draw(spec, n, seed)?;
    Sample::new(rows)
}

fn draw(spec: &DistributionSpec<f64>, n: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = stream_rng(seed, streams::SAMPLE_X, 0);
    match spec {
        DistributionSpec::Multinormal { mean, cov } => {
            check_len(mean.len(), cov.len())?;
            let l = cholesky(cov)?;
            Ok(normal_rows(mean, &l, n, &mut rng))
        }
        DistributionSpec::SkewT {
            xi,
            sigma,
            alpha,
            nu,
            center,
        } => {
            let st = SkewT::new(xi, sigma, alpha, *nu)?;
            let mut out = st.draw(n, &mut rng);
            if *center {
                if !(*nu > 2.0) {
                    return Err(Error::InvalidParameter(
                        "centering a skew-t needs nu > 2".into(),
                    ));
                }
                let mut crng = stream_rng(seed, streams::CENTERING, 0);
                let batch = st.draw(CENTERING_DRAWS, &mut crng);
                let mean = batch.mean_axis(ndarray::Axis(0)).expect("nonempty batch");
                out -= &mean;
            }
            Ok(out)
        }
        DistributionSpec::GaussMixture {
            weights,
            means,
            covs,
        } => {
            if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
                return Err(Error::InvalidParameter(
                    "mixture needs matching weights, means and covariances".into(),
                ));
            }
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter("mixture weights must sum to 1".into()));
            }
            let d = means[0].len();
            let factors = covs
                .iter()
                .zip(means)
                .map(|(c, m)| {
                    check_len(d, m.len())?;
                    check_len(d, c.len())?;
                    cholesky(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = WeightedIndex::new(weights)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut lrng = stream_rng(seed, streams::LABELS, 0);
            let mut out = Array2::zeros((n, d));
            for i in 0..n {
                let k = if weights.len() == 1 { 0 } else { labels.sample(&mut lrng) };
                let z: DVector<f64> =
                    DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let x = &factors[k] * z;
                for c in 0..d {
                    out[[i, c]] = means[k][c] + x[c];
                }
            }
            Ok(out)
        }
        DistributionSpec::ClaytonNormal { means, sds, theta } => {
            check_len(means.len(), sds.len())?;
            if !(*theta > 0.0) {
                return Err(Error::InvalidParameter("Clayton theta must be positive".into()));
            }
            if sds.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParameter("standard deviations must be positive".into()));
            }
            let u = clayton_uniforms(means.len(), *theta, n, &mut rng)?;
            let std = Normal::new(0.0, 1.0).expect("standard normal");
            Ok(Array2::from_shape_fn(u.dim(), |(i, c)| {
                means[c] + sds[c] * std.inverse_cdf(u[[i, c]])
            }))
        }
        DistributionSpec::Stretched { t } => {
            let mut out = Array2::zeros((n, 2));
            for i in 0..n {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                out[[i, 0]] = if z1 > 0.0 { t * z1 } else { z1 };
                out[[i, 1]] = z2;
            }
            Ok(out)
        }
        DistributionSpec::Rotated { inner, angle_deg } => {
            let base = draw(inner, n, seed)?;
            if base.ncols() != 2 {
                return Err(Error::Unsupported("angle rotations are planar".into()));
            }
            let r = Rotation::planar(*angle_deg);
            Ok(r.apply(&base))
        }
        DistributionSpec::Scaled { inner, factor } => Ok(draw(inner, n, seed)? * *factor),
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn normal_rows(mean: &[f64], l: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = mean.len();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let x = l * z;
        for c in 0..d {
            out[[i, c]] = mean[c] + x[c];
        }
    }
    out
}

/// Marshall–Olkin frailty construction: `V ~ Gamma(1/θ)`, `U_k = (1 + E_k/V)^{−1/θ}`.
fn clayton_uniforms(d: usize, theta: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let gamma = Gamma::new(1.0 / theta, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let v: f64 = gamma.sample(rng);
        for c in 0..d {
            let e: f64 = Exp1.sample(rng);
            let u = (1.0 + e / v).powf(-1.0 / theta);
            // Keep the normal quantile finite.
            out[[i, c]] = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        }
    }
    Ok(out)
}

struct SkewT {
    xi: Vec<f64>,
    omega: Vec<f64>,
    /// Cholesky factor of the joint correlation of `(X₀, X)`.
    joint: DMatrix<f64>,
    nu: f64,
}

impl SkewT {
    fn new(xi: &[f64], sigma: &[Vec<f64>], alpha: &[f64], nu: f64) -> Result<Self> {
        let d = xi.len();
        check_len(d, sigma.len())?;
        check_len(d, alpha.len())?;
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter("nu must be positive".into()));
        }
        cholesky(sigma)?;
        let omega: Vec<f64> = (0..d).map(|i| sigma[i][i].sqrt()).collect();
        let corr = DMatrix::from_fn(d, d, |i, j| sigma[i][j] / (omega[i] * omega[j]));
        let a = DVector::from_column_slice(alpha);
        let ca = &corr * &a;
        let denom = (1.0 + a.dot(&ca)).sqrt();
        let delta = ca / denom;
        let mut joint = vec![vec![0.0; d + 1]; d + 1];
        joint[0][0] = 1.0;
        for i in 0..d {
            joint[0][i + 1] = delta[i];
            joint[i + 1][0] = delta[i];
            for j in 0..d {
                joint[i + 1][j + 1] = corr[(i, j)];
            }
        }
        Ok(Self {
            xi: xi.to_vec(),
            omega,
            joint: cholesky(&joint)?,
            nu,
        })
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let d = self.xi.len();
        let chi = ChiSquared::new(self.nu).expect("validated nu");
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let z: DVector<f64> = DVector::from_fn(d + 1, |_, _| StandardNormal.sample(rng));
            let x = &self.joint * z;
            let sign = if x[0] > 0.0 { 1.0 } else { -1.0 };
            let w: f64 = chi.sample(rng);
            let scale = (w / self.nu).sqrt();
            for c in 0..d {
                out[[i, c]] = self.xi[c] + self.omega[c] * sign * x[c + 1] / scale;
            }
        }
        out
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: Vec<Vec<f64>>,
}

impl Rotation {
    /// Checks orthogonality and unit determinant to `1e-10`.
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter("rotation must be square".into()));
        }
        let m = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
        let gram = m.transpose() * &m;
        if (gram - DMatrix::identity(d, d)).abs().max() > 1e-10 {
            return Err(Error::InvalidParameter("rotation is not orthogonal".into()));
        }
        if (m.determinant() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter("rotation must have determinant 1".into()));
        }
        Ok(Self { matrix })
    }

    /// Counterclockwise planar rotation by `angle_deg` degrees.
    pub fn planar(angle_deg: f64) -> Self {
        let t = angle_deg.to_radians();
        // Exact values for quarter turns.
        let (s, c) = match angle_deg.rem_euclid(360.0) {
            a if a == 0.0 => (0.0, 1.0),
            a if a == 90.0 => (1.0, 0.0),
            a if a == 180.0 => (0.0, -1.0),
            a if a == 270.0 => (-1.0, 0.0),
            _ => t.sin_cos(),
        };
        Self {
            matrix: vec![vec![c, -s], vec![s, c]],
        }
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    fn apply(&self, rows: &Array2<f64>) -> Array2<f64> {
        let d = self.matrix.len();
        Array2::from_shape_fn(rows.dim(), |(i, r)| {
            (0..d).map(|c| self.matrix[r][c] * rows[[i, c]]).sum()
        })
    }
}

/// Left-multiplies every observation by the rotation.
pub fn rotate_sample(sample: &Sample, rotation: &Rotation) -> Result<Sample> {
    if rotation.matrix.len() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: rotation.matrix.len(),
        });
    }
    let rows = rotation.apply(sample.observations());
    match sample.weights() {
        Some(w) => Sample::with_weights(rows, w.to_vec()),
        None => Sample::new(rows),
    }
}

/// Built-in laws addressable by name: `normal-pair`, `clayton-pair`, `stretched-<t>`,
/// `normal-<d>`.
pub fn named_distribution(name: &str) -> Option<DistributionSpec<f64>> {
    match name {
        "normal-pair" => Some(DistributionSpec::Multinormal {
            mean: vec![50.0, 60.0],
            cov: vec![vec![100.0, 50.0], vec![50.0, 100.0]],
        }),
        "clayton-pair" => Some(DistributionSpec::ClaytonNormal {
            means: vec![58.0, 58.0],
            sds: vec![10.0, 10.0],
            theta: 2.0,
        }),
        _ => {
            if let Some(t) = name.strip_prefix("stretched-") {
                return t.parse().ok().map(|t| DistributionSpec::Stretched { t });
            }
            let d: usize = name.strip_prefix("normal-")?.parse().ok()?;
            (d > 0).then(|| DistributionSpec::standard_normal(d))
        }
    }
}

/// Variance of the first coordinate of the half-stretched normal `(tZ₁, Z₂)` law.
pub fn stretched_first_variance(t: f64) -> f64 {
    (t * t + 1.0) / 2.0 - (t - 1.0).powi(2) / (2.0 * PI)
}

/// Sweep over one named parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

/// Scale overrides applied by `--full`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleOverride {
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub bootstrap: Option<usize>,
    pub reps: Option<usize>,
}

/// A Monte Carlo experiment: two laws, sizes, test grid and replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub x: DistributionSpec<Scalar>,
    pub y: DistributionSpec<Scalar>,
    pub n1: usize,
    pub n2: usize,
    pub reps: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_orders")]
    pub orders: Vec<u8>,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<String>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub full: ScaleOverride,
}

fn default_bootstrap() -> usize {
    200
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_orders() -> Vec<u8> {
    vec![1]
}
fn default_statistics() -> Vec<String> {
    vec!["S".into(), "I".into()]
}
fn default_taus() -> Vec<f64> {
    vec![1.0, 2.0, f64::INFINITY]
}
fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_nu() -> f64 {
    0.001
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 || self.reps == 0 || self.bootstrap < 2 {
            return Err(Error::InvalidParameter(
                "sizes must be >= 2, reps >= 1, bootstrap >= 2".into(),
            ));
        }
        if self.orders.is_empty() || self.orders.iter().any(|o| *o != 1 && *o != 2) {
            return Err(Error::InvalidParameter("orders must be 1 or 2".into()));
        }
        for s in &self.statistics {
            s.parse::<Statistic>()?;
        }
        if self.taus.is_empty() || self.alphas.is_empty() || self.statistics.is_empty() {
            return Err(Error::InvalidParameter("empty test grid".into()));
        }
        for params in self.parameter_sets() {
            let x = self.x.resolve(&params)?;
            let y = self.y.resolve(&params)?;
            if x.dim() != y.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x.dim(),
                    found: y.dim(),
                });
            }
        }
        Ok(())
    }

    /// Applies the `--full` overrides.
    pub fn at_full_scale(&self) -> Self {
        let mut s = self.clone();
        s.n1 = self.full.n1.unwrap_or(s.n1);
        s.n2 = self.full.n2.unwrap_or(s.n2);
        s.bootstrap = self.full.bootstrap.unwrap_or(s.bootstrap);
        s.reps = self.full.reps.unwrap_or(s.reps);
        s
    }

    fn parameter_sets(&self) -> Vec<BTreeMap<String, f64>> {
        match &self.sweep {
            Some(sw) => sw
                .values
                .iter()
                .map(|v| BTreeMap::from([(sw.name.clone(), *v)]))
                .collect(),
            None => vec![BTreeMap::new()],
        }
    }

    fn decisions(&self) -> Vec<Decision> {
        let mut out = Vec::new();
        for &o in &self.orders {
            let order = if o == 1 { CurveKind::First } else { CurveKind::Second };
            for s in &self.statistics {
                let statistic: Statistic = s.parse().expect("validated");
                for &tau in &self.taus {
                    for &alpha in &self.alphas {
                        out.push(Decision {
                            order,
                            statistic,
                            alpha,
                            tau,
                            nu: self.nu,
                            eta: self.eta,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One cell of a rejection-rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionCell {
    pub sweep_value: Option<f64>,
    pub order: u8,
    pub statistic: Statistic,
    pub tau: f64,
    pub alpha: f64,
    pub rejections: usize,
    /// Replications that produced a decision.
    pub completed: usize,
    /// Replications where the contact set was empty.
    pub infeasible: usize,
    /// Replications that failed (bootstrap survival floor, non-convergence).
    pub failed: usize,
}

impl RejectionCell {
    pub fn rate(&self) -> f64 {
        if self.completed == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.completed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionTable {
    pub name: String,
    pub sweep_name: Option<String>,
    pub cells: Vec<RejectionCell>,
}

/// Outcome of one replication for one decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RepOutcome {
    Reject(bool),
    Infeasible,
    Failed,
}

/// Seed of the samples of replication `rep` at sweep position `k`.
pub fn replication_seed(master: u64, sweep_index: usize, rep: usize) -> u64 {
    derive_seed(master, sweep_index as u64, rep as u64)
}

/// Runs every replication at every sweep value; each replication draws both samples,
/// bootstraps once and evaluates every (order, statistic, τ, α) combination on the same draws.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RejectionTable> {
    spec.validate()?;
    let decisions = spec.decisions();
    let mut cells = Vec::new();
    for (k, params) in spec.parameter_sets().iter().enumerate() {
        let x_spec = spec.x.resolve(params)?;
        let y_spec = spec.y.resolve(params)?;
        let outcomes: Vec<Vec<RepOutcome>> = parallel::pool().install(|| {
            (0..spec.reps)
                .into_par_iter()
                .map(|rep| replicate(spec, &x_spec, &y_spec, &decisions, k, rep))
                .collect()
        });
        for (d, decision) in decisions.iter().enumerate() {
            let mut cell = RejectionCell {
                sweep_value: spec.sweep.as_ref().map(|s| s.values[k]),
                order: if decision.order == CurveKind::First { 1 } else { 2 },
                statistic: decision.statistic,
                tau: decision.tau,
                alpha: decision.alpha,
                rejections: 0,
                completed: 0,
                infeasible: 0,
                failed: 0,
            };
            for rep in &outcomes {
                match rep[d] {
                    RepOutcome::Reject(r) => {
                        cell.completed += 1;
                        cell.rejections += usize::from(r);
                    }
                    RepOutcome::Infeasible => cell.infeasible += 1,
                    RepOutcome::Failed => cell.failed += 1,
                }
            }
            cells.push(cell);
        }
    }
    Ok(RejectionTable {
        name: spec.name.clone(),
        sweep_name: spec.sweep.as_ref().map(|s| s.name.clone()),
        cells,
    })
}

fn replicate(
    spec: &ExperimentSpec,
    x_spec: &DistributionSpec<f64>,
    y_spec: &DistributionSpec<f64>,
    decisions: &[Decision],
    sweep_index: usize,
    rep: usize,
) -> Vec<RepOutcome> {
    let seed = replication_seed(spec.seed, sweep_index, rep);
    let run = || -> Result<Vec<RepOutcome>> {
        let x = sample(x_spec, spec.n1, derive_seed(seed, streams::SAMPLE_X, 0))?;
        let y = sample(y_spec, spec.n2, derive_seed(seed, streams::SAMPLE_Y, 0))?;
        let config = TestConfig {
            bootstrap: spec.bootstrap,
            epsilon: spec.epsilon,
            nu: spec.nu,
            eta: spec.eta,
            seed,
            ..TestConfig::default()
        };
        let fit = TwoSampleFit::new(&x, &y, &config)?;
        let draws = fit.bootstrap(seed, spec.bootstrap)?;
        Ok(decisions
            .iter()
            .map(|d| match fit.evaluate(&draws, d) {
                Ok(r) => RepOutcome::Reject(r.reject),
                Err(Error::EmptyContactSet) => RepOutcome::Infeasible,
                Err(_) => RepOutcome::Failed,
            })
            .collect())
    };
    run().unwrap_or_else(|_| vec![RepOutcome::Failed; decisions.len()])
}

fn fmt_tau(t: f64) -> String {
    if t.is_infinite() { "inf".into() } else { format!("{t}") }
}

impl RejectionTable {
    /// Long-format CSV: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let sweep = self.sweep_name.clone().unwrap_or_else(|| "sweep".into());
        let _ = writeln!(
            s,
            "{sweep},order,statistic,tau,alpha,rate,rejections,completed,infeasible,failed"
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.sweep_value.map_or(String::new(), |v| format!("{v}")),
                c.order,
                c.statistic,
                fmt_tau(c.tau),
                c.alpha,
                if c.completed == 0 { "NA".into() } else { format!("{:.4}", c.rate()) },
                c.rejections,
                c.completed,
                c.infeasible,
                c.failed
            );
        }
        s
    }

    /// Aligned text table: rows (order, statistic, τ), columns (α, sweep value).
    pub fn to_text(&self) -> String {
        let mut cols: Vec<(f64, Option<f64>)> = Vec::new();
        let mut rows: Vec<(u8, Statistic, f64)> = Vec::new();
        for c in &self.cells {
            let col = (c.alpha, c.sweep_value);
            if !cols.iter().any(|x| x.0 == col.0 && x.1 == col.1) {
                cols.push(col);
            }
            let row = (c.order, c.statistic, c.tau);
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
        cols.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.unwrap_or(0.0).total_cmp(&b.1.unwrap_or(0.0)))
        });
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.name);
        let _ = write!(s, "{:<18}", "alpha");
        for (a, _) in &cols {
            let _ = write!(s, "{a:>8}");
        }
        let _ = writeln!(s);
        let sweep = self.sweep_name.clone().unwrap_or_else(|| "-".into());
        let _ = write!(s, "{:<18}", sweep);
        for (_, v) in &cols {
            let _ = write!(s, "{:>8}", v.map_or("-".to_string(), |v| format!("{v}")));
        }
        let _ = writeln!(s);
        for (order, stat, tau) in rows {
            let _ = write!(s, "{:<18}", format!("H{order} {stat} tau={}", fmt_tau(tau)));
            for (a, v) in &cols {
                let cell = self.cells.iter().find(|c| {
                    c.order == order
                        && c.statistic == stat
                        && c.tau == tau
                        && c.alpha == *a
                        && c.sweep_value == *v
                });
                let txt = match cell {
                    Some(c) if c.completed > 0 => format!("{:.3}", c.rate()),
                    _ => "NA".into(),
                };
                let _ = write!(s, "{txt:>8}");
            }
            let _ = writeln!(s);
        }
        s
    }
}

/// Experiment configurations shipped with the crate, by name.
pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Names of the shipped configurations.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

const BUNDLED: &[(&str, &str)] = &[
    ("rotated_first_desk", include_str!("../../../configs/rotated_first_desk.toml")),
    ("rotated_second_desk", include_str!("../../../configs/rotated_second_desk.toml")),
    ("skewt_desk", include_str!("../../../configs/skewt_desk.toml")),
    ("mixture_desk", include_str!("../../../configs/mixture_desk.toml")),
    ("power_desk", include_str!("../../../configs/power_desk.toml")),
    ("normal3d_desk", include_str!("../../../configs/normal3d_desk.toml")),
    ("stretched_desk", include_str!("../../../configs/stretched_desk.toml")),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(s: &Sample) -> [[f64; 2]; 2] {
        let m = s.mean();
        let n = s.len() as f64;
        let mut c = [[0.0; 2]; 2];
        for r in s.observations().rows() {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (r[i] - m[i]) * (r[j] - m[j]) / (n - 1.0);
                }
            }
        }
        c
    }

    #[test]
    fn multinormal_covariance() {
        let s = sample(&DistributionSpec::standard_normal(2), 100_000, 3).unwrap();
        let c = cov(&s);
        assert!((c[0][0] - 1.0).abs() < 0.03);
        assert!((c[1][1] - 1.0).abs() < 0.03);
        assert!(c[0][1].abs() < 0.03);
    }

    #[test]
    fn single_component_mixture_matches_multinormal() {
        let mean = vec![1.0, -2.0];
        let cv = vec![vec![2.0, 0.3], vec![0.3, 1.0]];
        let a = sample(
            &DistributionSpec::Multinormal {
                mean: mean.clone(),
                cov: cv.clone(),
            },
            500,
            9,
        )
        .unwrap();
        let b = sample(
            &DistributionSpec::GaussMixture {
                weights: vec![1.0],
                means: vec![mean],
                covs: vec![cv],
            },
            500,
            9,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stretched_with_unit_t_is_standard_normal_draws() {
        let a = sample(&DistributionSpec::Stretched { t: 1.0 }, 300, 5).unwrap();
        let mut rng = stream_rng(5, streams::SAMPLE_X, 0);
        for r in a.observations().rows() {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            assert_eq!((r[0], r[1]), (z1, z2));
        }
    }

    #[test]
    fn stretched_variance_formula() {
        assert!((stretched_first_variance(2.9) - 4.13).abs() < 0.01);
        assert!((stretched_first_variance(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotations() {
        let s = Sample::new(ndarray::array![[1.0, 0.0], [0.5, 2.0]]).unwrap();
        let q = rotate_sample(&s, &Rotation::planar(90.0)).unwrap();
        assert_eq!(q.observations().row(0).to_vec(), vec![0.0, 1.0]);
        let id = rotate_sample(&s, &Rotation::planar(0.0)).unwrap();
        assert_eq!(id, s);
        let twice = rotate_sample(&q, &Rotation::planar(90.0)).unwrap();
        let half = rotate_sample(&s, &Rotation::planar(180.0)).unwrap();
        for (a, b) in twice.observations().iter().zip(half.observations().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(Rotation::new(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).is_err());
        assert!(Rotation::new(vec![vec![2.0, 0.0], vec![0.0, 0.5]]).is_err());
        let r = Rotation::new(Rotation::planar(33.0).matrix().to_vec()).unwrap();
        assert_eq!(r, Rotation::planar(33.0));
    }

    #[test]
    fn invalid_specs() {
        let bad_cov = DistributionSpec::Multinormal {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(sample(&bad_cov, 10, 0).is_err());
        let bad_theta = DistributionSpec::ClaytonNormal {
            means: vec![0.0, 0.0],
            sds: vec![1.0, 1.0],
            theta: -1.0,
        };
        assert!(sample(&bad_theta, 10, 0).is_err());
        let bad_weights = DistributionSpec::GaussMixture {
            weights: vec![0.3, 0.3],
            means: vec![vec![0.0], vec![0.0]],
            covs: vec![vec![vec![1.0]], vec![vec![1.0]]],
        };
        assert!(sample(&bad_weights, 10, 0).is_err());
    }

    #[test]
    fn bundled_configs_parse() {
        for name in bundled_names() {
            let spec = ExperimentSpec::from_toml(bundled_config(name).unwrap())
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(spec.name, name);
        }
    }

    #[test]
    fn parameter_substitution() {
        let text = r#"
            name = "t"
            n1 = 10
            n2 = 10
            reps = 1
            [x]
            kind = "multinormal"
            mean = [0, 0]
            cov = [[4, 1], [1, "beta"]]
            [y]
            kind = "rotated"
            angle_deg = 90
            inner = { kind = "multinormal", mean = [0, 0], cov = [[4, 1], [1, "beta"]] }
            [sweep]
            name = "beta"
            values = [2, 3]
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        let x = spec.x.resolve(&BTreeMap::from([("beta".to_string(), 3.0)])).unwrap();
        assert_eq!(
            x,
            DistributionSpec::Multinormal {
                mean: vec![0.0, 0.0],
                cov: vec![vec![4.0, 1.0], vec![1.0, 3.0]]
            }
        );
        assert!(spec.x.resolve(&BTreeMap::new()).is_err());
    }
}
