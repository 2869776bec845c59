//! Two-sample multivariate stochastic dominance tests.
//!
//! `run_test(x, y, config)` tests `H₀: X ⪰ Y` at the configured order. Both samples are
//! mapped through entropic quantile maps fitted on a common ball grid; the difference process
//! `T̂(p) = M̂_Y(p) − M̂_X(p)` (or its second-order analogue) is positive where `Y` beats `X`,
//! so large values of `√r_N·F(T̂)` with `F ∈ {S, I}` speak against the null.
//!
//! Critical values come from a multinomial-weight bootstrap: each replication reweights the
//! atoms of both samples, refits both maps warm-started from the base potentials, and yields
//! `√r_N (T̂ᴮ − T̂)`. Per-level bootstrap variances (floored at `ν`) define the contact set
//! `{p : |√r_N T̂(p)| ≤ τ √V̂(p)}`, and the derivative statistic restricted to that set gives
//! the bootstrap law whose upper `α` quantile is the critical value.

mod baseline;

pub use baseline::{baseline_cdf_test, BaselineResult};

use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::Serialize;

use crate::ballgrid::{build_grid, default_shape, BallGrid};
use crate::contribution::{
    first_order_from_values, second_order_from_values, ContributionCurve, CurveKind,
    CurveProvenance, RhoFn,
};
use crate::quantile::{entropic_images, grid_measure, Sample, DEFAULT_EPSILON};
use crate::rng::{stream_rng, streams};
use crate::transport::{DiscreteMeasure, DualPotentials, SinkhornConfig};
use crate::{parallel, Error, Result};

/// Dominance order tested.
pub type Order = CurveKind;

/// Functional applied to the difference process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Statistic {
    /// Supremum.
    S,
    /// Integral of the positive part.
    I,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::S => write!(f, "S"),
            Statistic::I => write!(f, "I"),
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" | "s" | "sup" => Ok(Statistic::S),
            "I" | "i" | "int" | "integral" => Ok(Statistic::I),
            other => Err(Error::Parse(format!("unknown statistic '{other}'"))),
        }
    }
}

/// Minimum fraction of bootstrap replications that must converge.
pub const MIN_SURVIVAL: f64 = 0.95;

/// Test configuration. Defaults: first order, statistic `S`, `α = 0.05`, `τ = 2`,
/// `ν = 0.001`, `B = 200`, `ε = 0.2`, shell-radius levels, one-shell bandwidth, `η = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestConfig {
    pub order: Order,
    pub statistic: Statistic,
    pub alpha: f64,
    /// Contact-set threshold; `f64::INFINITY` uses every level.
    pub tau: f64,
    /// Variance floor.
    pub nu: f64,
    pub bootstrap: usize,
    pub epsilon: f64,
    /// Band half-width; `None` means one shell spacing.
    pub bandwidth: Option<f64>,
    /// Evaluation levels; `None` means the shell radii.
    pub levels: Option<Vec<f64>>,
    /// Floor on the critical value.
    pub eta: f64,
    pub seed: u64,
    pub rho: RhoFn,
    /// Grid shell and direction counts; `None` derives them from the smaller sample size.
    pub grid_shape: Option<(usize, usize)>,
    pub sinkhorn: SinkhornConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            order: CurveKind::First,
            statistic: Statistic::S,
            alpha: 0.05,
            tau: 2.0,
            nu: 0.001,
            bootstrap: 200,
            epsilon: DEFAULT_EPSILON,
            bandwidth: None,
            levels: None,
            eta: 0.0,
            seed: 0,
            rho: RhoFn::Norm,
            grid_shape: None,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive or infinite, got {}", self.tau));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if self.bootstrap < 2 {
            return bad(format!("need at least 2 bootstrap draws, got {}", self.bootstrap));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("bandwidth must lie in (0, 1), got {b}"));
            }
        }
        if let Some(levels) = &self.levels {
            if levels.is_empty()
                || levels.iter().any(|p| !(*p > 0.0 && *p <= 1.0))
                || levels.windows(2).any(|w| !(w[1] > w[0]))
            {
                return bad("levels must be strictly increasing in (0, 1]".into());
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be nonnegative, got {}", self.eta));
        }
        if let Some((n_r, n_s)) = self.grid_shape {
            if n_r == 0 || n_s == 0 {
                return bad("grid shape counts must be positive".into());
            }
        }
        Ok(())
    }

    /// The grid used for samples of sizes `n1`, `n2` in dimension `d`.
    pub fn grid(&self, d: usize, n1: usize, n2: usize) -> Result<BallGrid> {
        match self.grid_shape {
            Some((n_r, n_s)) => build_grid(d, n_r, n_s, false),
            None => {
                let (n_r, n_s, origin) = default_shape(n1.min(n2));
                build_grid(d, n_r, n_s, origin)
            }
        }
    }
}

/// Difference process `T̂ = curve2 − curve1` on common levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TProcess {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub r_n: f64,
    pub lambda_hat: f64,
}

/// `T̂ = curve2 − curve1`, with `curve1` from `X` (size `n1`) and `curve2` from `Y`.
pub fn t_process(
    curve1: &ContributionCurve,
    curve2: &ContributionCurve,
    n1: usize,
    n2: usize,
) -> Result<TProcess> {
    if curve1.kind != curve2.kind {
        return Err(Error::IncompatibleCurves("different orders".into()));
    }
    if curve1.levels != curve2.levels {
        return Err(Error::IncompatibleCurves("different level sets".into()));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("sample sizes must be positive".into()));
    }
    let values = curve2.values.iter().zip(&curve1.values).map(|(b, a)| b - a).collect();
    Ok(TProcess {
        levels: curve1.levels.clone(),
        values,
        r_n: rate(n1, n2),
        lambda_hat: n1 as f64 / (n1 + n2) as f64,
    })
}

/// `N₁N₂/(N₁+N₂)`.
pub fn rate(n1: usize, n2: usize) -> f64 {
    (n1 as f64 * n2 as f64) / (n1 + n2) as f64
}

/// Discrete supremum.
#[allow(non_snake_case)]
pub fn statistic_S(h: &[f64]) -> f64 {
    h.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Trapezoidal integral of `max(h, 0)` over `[levels[0], levels[last]]`; segments where `h`
/// changes sign are split at the linear-interpolation root.
#[allow(non_snake_case)]
pub fn statistic_I(h: &[f64], levels: &[f64]) -> f64 {
    (0..h.len().saturating_sub(1))
        .map(|k| positive_trapezoid(h[k], h[k + 1], levels[k + 1] - levels[k]))
        .sum()
}

fn positive_trapezoid(h0: f64, h1: f64, width: f64) -> f64 {
    if h0 >= 0.0 && h1 >= 0.0 {
        0.5 * (h0 + h1) * width
    } else if h0 <= 0.0 && h1 <= 0.0 {
        0.0
    } else {
        let pos = h0.max(h1);
        let frac = pos / (h0 - h1).abs();
        0.5 * pos * frac * width
    }
}

/// Levels kept by the contact-set rule and the variances that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactSet {
    pub levels: Vec<f64>,
    /// Membership flag for each evaluation level.
    pub mask: Vec<bool>,
    pub tau: f64,
    pub variances: Vec<f64>,
}

impl ContactSet {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// All levels, as used when `τ = ∞`.
    pub fn full(levels: &[f64], variances: Vec<f64>) -> Self {
        Self {
            levels: levels.to_vec(),
            mask: vec![true; levels.len()],
            tau: f64::INFINITY,
            variances,
        }
    }
}

/// `max(sample variance of the draws at each level, ν)`; `draws[b][k]` is
/// `√r_N (T̂ᴮ(p_k) − T̂(p_k))`.
pub fn variance_estimate(draws: &[Vec<f64>], nu: f64) -> Vec<f64> {
    let b = draws.len();
    let k = draws.first().map_or(0, |d| d.len());
    (0..k)
        .map(|l| {
            if b < 2 {
                return nu;
            }
            let mean = draws.iter().map(|d| d[l]).sum::<f64>() / b as f64;
            let var =
                draws.iter().map(|d| (d[l] - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
            var.max(nu)
        })
        .collect()
}

/// `{p : |√r_N T̂(p)| ≤ τ √V̂(p)}`.
pub fn contact_set(tproc: &TProcess, variances: &[f64], tau: f64) -> ContactSet {
    let scale = tproc.r_n.sqrt();
    let mask: Vec<bool> = tproc
        .values
        .iter()
        .zip(variances)
        .map(|(t, v)| tau.is_infinite() || (scale * t).abs() <= tau * v.sqrt())
        .collect();
    ContactSet {
        levels: tproc
            .levels
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(p, _)| *p)
            .collect(),
        mask,
        tau,
        variances: variances.to_vec(),
    }
}

/// `Ŝ′ = max` of `h` over the contact set, or `Î′ =` trapezoid of `max(h, 0)` over pairs of
/// consecutive levels that both belong to the contact set.
pub fn derivative_statistic(
    statistic: Statistic,
    contact: &ContactSet,
    h: &[f64],
    levels: &[f64],
) -> Result<f64> {
    match statistic {
        Statistic::S => {
            let v = h
                .iter()
                .zip(&contact.mask)
                .filter(|(_, m)| **m)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if v == f64::NEG_INFINITY {
                Err(Error::EmptyContactSet)
            } else {
                Ok(v)
            }
        }
        Statistic::I => Ok((0..h.len().saturating_sub(1))
            .filter(|&k| contact.mask[k] && contact.mask[k + 1])
            .map(|k| positive_trapezoid(h[k], h[k + 1], levels[k + 1] - levels[k]))
            .sum()),
    }
}

fn apply_statistic(statistic: Statistic, h: &[f64], levels: &[f64]) -> f64 {
    match statistic {
        Statistic::S => statistic_S(h),
        Statistic::I => statistic_I(h, levels),
    }
}

/// One fitted sample: target measure, base potentials and base `ρ` values.
#[derive(Debug, Clone)]
struct FittedSide {
    target: DiscreteMeasure,
    potentials: DualPotentials,
    rho_values: Vec<f64>,
}

/// The base problem shared by all bootstrap replications.
#[derive(Debug, Clone)]
pub struct TwoSampleFit {
    pub grid: BallGrid,
    source: DiscreteMeasure,
    x: FittedSide,
    y: FittedSide,
    pub epsilon: f64,
    pub bandwidth: f64,
    pub rho: RhoFn,
    pub sinkhorn: SinkhornConfig,
    /// Levels requested by the caller.
    pub requested_levels: Vec<f64>,
    /// First-order levels with nonempty bands (common to both samples).
    pub first_levels: Vec<f64>,
    pub curve_x: [ContributionCurve; 2],
    pub curve_y: [ContributionCurve; 2],
    pub n1: usize,
    pub n2: usize,
}

fn kind_index(order: Order) -> usize {
    match order {
        CurveKind::First => 0,
        CurveKind::Second => 1,
    }
}

impl TwoSampleFit {
    /// Fits both base maps on the configured grid.
    pub fn new(x: &Sample, y: &Sample, config: &TestConfig) -> Result<Self> {
        config.validate()?;
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        let grid = config.grid(x.dim(), x.len(), y.len())?;
        let source = grid_measure(&grid)?;
        let bandwidth = config.bandwidth.unwrap_or_else(|| grid.shell_spacing());
        let requested_levels = config.levels.clone().unwrap_or_else(|| grid.radii().to_vec());
        let fit_side = |s: &Sample| -> Result<FittedSide> {
            let target = s.to_measure()?;
            let (images, potentials, _) =
                entropic_images(&source, &target, config.epsilon, &config.sinkhorn, None)?;
            let rho_values = rho_of_rows(&images, &config.rho);
            Ok(FittedSide {
                target,
                potentials,
                rho_values,
            })
        };
        let fx = fit_side(x)?;
        let fy = fit_side(y)?;
        let (first_levels, _, _) =
            first_order_from_values(&grid, &fx.rho_values, &requested_levels, bandwidth);
        if first_levels.is_empty() && config.order == CurveKind::First {
            return Err(Error::EmptyCurve);
        }
        let mut fit = Self {
            grid,
            source,
            epsilon: config.epsilon,
            bandwidth,
            rho: config.rho.clone(),
            sinkhorn: config.sinkhorn,
            requested_levels,
            first_levels,
            curve_x: [placeholder(CurveKind::First), placeholder(CurveKind::Second)],
            curve_y: [placeholder(CurveKind::First), placeholder(CurveKind::Second)],
            n1: x.len(),
            n2: y.len(),
            x: fx,
            y: fy,
        };
        fit.curve_x = fit.curves(&fit.x.rho_values, x.len());
        fit.curve_y = fit.curves(&fit.y.rho_values, y.len());
        Ok(fit)
    }

    fn curves(&self, rho_values: &[f64], n: usize) -> [ContributionCurve; 2] {
        let (levels, values, dropped) =
            first_order_from_values(&self.grid, rho_values, &self.requested_levels, self.bandwidth);
        let prov = |bw| CurveProvenance {
            epsilon: self.epsilon,
            bandwidth: bw,
            sample_size: n,
            rho: self.rho.tag(),
        };
        [
            ContributionCurve {
                levels,
                values,
                kind: CurveKind::First,
                dropped,
                provenance: prov(Some(self.bandwidth)),
            },
            ContributionCurve {
                levels: self.requested_levels.clone(),
                values: second_order_from_values(&self.grid, rho_values, &self.requested_levels),
                kind: CurveKind::Second,
                dropped: Vec::new(),
                provenance: prov(None),
            },
        ]
    }

    pub fn levels(&self, order: Order) -> &[f64] {
        match order {
            CurveKind::First => &self.first_levels,
            CurveKind::Second => &self.requested_levels,
        }
    }

    /// Base difference process.
    pub fn t_hat(&self, order: Order) -> TProcess {
        let k = kind_index(order);
        t_process(&self.curve_x[k], &self.curve_y[k], self.n1, self.n2)
            .expect("curves share the grid")
    }

    fn values_for(&self, rho_values: &[f64], order: Order) -> Vec<f64> {
        match order {
            CurveKind::First => {
                first_order_from_values(&self.grid, rho_values, &self.first_levels, self.bandwidth).1
            }
            CurveKind::Second => {
                second_order_from_values(&self.grid, rho_values, &self.requested_levels)
            }
        }
    }

    fn refit(&self, side: &FittedSide, counts: &[u32]) -> Result<Vec<f64>> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let target = side.target.reweighted(weights)?;
        let (images, _, _) = entropic_images(
            &self.source,
            &target,
            self.epsilon,
            &self.sinkhorn,
            Some(&side.potentials),
        )?;
        Ok(rho_of_rows(&images, &self.rho))
    }

    /// Difference processes of both orders for given multinomial counts. Returns
    /// `Ok(None)` when a refit fails to converge.
    pub fn process_with_counts(
        &self,
        counts_x: &[u32],
        counts_y: &[u32],
    ) -> Result<Option<[TProcess; 2]>> {
        if counts_x.len() != self.x.target.len() || counts_y.len() != self.y.target.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.target.len(),
                found: counts_x.len(),
            });
        }
        let rx = match self.refit(&self.x, counts_x) {
            Ok(v) => v,
            Err(Error::NotConverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ry = match self.refit(&self.y, counts_y) {
            Ok(v) => v,
            Err(Error::NotConverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let make = |order: Order| {
            let vx = self.values_for(&rx, order);
            let vy = self.values_for(&ry, order);
            TProcess {
                levels: self.levels(order).to_vec(),
                values: vy.iter().zip(&vx).map(|(b, a)| b - a).collect(),
                r_n: rate(self.n1, self.n2),
                lambda_hat: self.n1 as f64 / (self.n1 + self.n2) as f64,
            }
        };
        Ok(Some([make(CurveKind::First), make(CurveKind::Second)]))
    }

    /// Multinomial counts of replication `rep` (X counts first, then Y, from one stream).
    pub fn bootstrap_counts(&self, seed: u64, rep: usize) -> (Vec<u32>, Vec<u32>) {
        let mut rng = stream_rng(seed, streams::BOOTSTRAP, rep as u64);
        let cx = multinomial_counts(self.x.target.weights(), &mut rng);
        let cy = multinomial_counts(self.y.target.weights(), &mut rng);
        (cx, cy)
    }

    /// Bootstrap difference processes of replication `rep`.
    pub fn bootstrap_process(&self, seed: u64, rep: usize) -> Result<Option<[TProcess; 2]>> {
        let (cx, cy) = self.bootstrap_counts(seed, rep);
        self.process_with_counts(&cx, &cy)
    }

    /// Runs `b` replications in parallel and collects scaled deviations for both orders.
    pub fn bootstrap(&self, seed: u64, b: usize) -> Result<BootstrapDraws> {
        let outcomes: Vec<Result<Option<[TProcess; 2]>>> = parallel::pool().install(|| {
            (0..b)
                .into_par_iter()
                .map(|rep| self.bootstrap_process(seed, rep))
                .collect()
        });
        let scale = rate(self.n1, self.n2).sqrt();
        let base = [self.t_hat(CurveKind::First), self.t_hat(CurveKind::Second)];
        let mut deviations: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut failed = 0;
        for outcome in outcomes {
            match outcome? {
                Some(procs) => {
                    for k in 0..2 {
                        deviations[k].push(
                            procs[k]
                                .values
                                .iter()
                                .zip(&base[k].values)
                                .map(|(tb, t)| scale * (tb - t))
                                .collect(),
                        );
                    }
                }
                None => failed += 1,
            }
        }
        let survived = b - failed;
        if (survived as f64) < MIN_SURVIVAL * b as f64 {
            return Err(Error::BootstrapFailures {
                survived,
                requested: b,
            });
        }
        Ok(BootstrapDraws {
            deviations,
            requested: b,
            failed,
        })
    }

    /// Test decision from precomputed bootstrap draws.
    pub fn evaluate(&self, draws: &BootstrapDraws, spec: &Decision) -> Result<TestResult> {
        let k = kind_index(spec.order);
        let tproc = self.t_hat(spec.order);
        let levels = tproc.levels.clone();
        let devs = &draws.deviations[k];
        let variances = variance_estimate(devs, spec.nu);
        let contact = contact_set(&tproc, &variances, spec.tau);
        let scale = tproc.r_n.sqrt();
        let scaled: Vec<f64> = tproc.values.iter().map(|v| scale * v).collect();
        let statistic_value = apply_statistic(spec.statistic, &scaled, &levels);
        let mut boot = devs
            .iter()
            .map(|h| derivative_statistic(spec.statistic, &contact, h, &levels))
            .collect::<Result<Vec<f64>>>()?;
        boot.sort_by(f64::total_cmp);
        let critical_value = upper_quantile(&boot, spec.alpha);
        let threshold = critical_value.max(spec.eta);
        let exceed = boot.iter().filter(|&&v| v >= statistic_value).count();
        let b = boot.len();
        Ok(TestResult {
            order: spec.order,
            statistic: spec.statistic,
            n1: self.n1,
            n2: self.n2,
            epsilon: self.epsilon,
            bandwidth: self.bandwidth,
            tau: spec.tau,
            alpha: spec.alpha,
            nu: spec.nu,
            eta: spec.eta,
            bootstrap: draws.requested,
            failed_reps: draws.failed,
            statistic_value,
            critical_value,
            p_value: (1 + exceed) as f64 / (b + 1) as f64,
            p_value_raw: exceed as f64 / b as f64,
            reject: statistic_value > threshold,
            contact,
            draws: DrawSummary::from_sorted(&boot),
            t_process: tproc,
            curve_x: self.curve_x[k].clone(),
            curve_y: self.curve_y[k].clone(),
            seed: 0,
        })
    }
}

fn placeholder(kind: CurveKind) -> ContributionCurve {
    ContributionCurve {
        levels: Vec::new(),
        values: Vec::new(),
        kind,
        dropped: Vec::new(),
        provenance: CurveProvenance {
            epsilon: 0.0,
            bandwidth: None,
            sample_size: 0,
            rho: String::new(),
        },
    }
}

fn rho_of_rows(images: &Array2<f64>, rho: &RhoFn) -> Vec<f64> {
    images
        .rows()
        .into_iter()
        .map(|r| rho.eval(r.as_slice().expect("standard layout")))
        .collect()
}

/// Counts of `n = weights.len()` draws with the given cell probabilities.
fn multinomial_counts<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<u32> {
    let n = weights.len();
    let mut counts = vec![0u32; n];
    let u = 1.0 / n as f64;
    if weights.iter().all(|&w| w == u) {
        for _ in 0..n {
            counts[rng.gen_range(0..n)] += 1;
        }
    } else {
        let dist = WeightedIndex::new(weights).expect("validated weights");
        for _ in 0..n {
            counts[dist.sample(rng)] += 1;
        }
    }
    counts
}

/// `⌈B(1 − α)⌉`-th smallest of the sorted draws.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let k = ((b as f64) * (1.0 - alpha)).ceil() as usize;
    sorted[k.clamp(1, b) - 1]
}

/// Scaled bootstrap deviations `√r_N (T̂ᴮ − T̂)` for both orders.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    /// `deviations[order][rep][level]`.
    pub deviations: [Vec<Vec<f64>>; 2],
    pub requested: usize,
    pub failed: usize,
}

/// The decision-stage settings, separable from the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub order: Order,
    pub statistic: Statistic,
    pub alpha: f64,
    pub tau: f64,
    pub nu: f64,
    pub eta: f64,
}

impl From<&TestConfig> for Decision {
    fn from(c: &TestConfig) -> Self {
        Self {
            order: c.order,
            statistic: c.statistic,
            alpha: c.alpha,
            tau: c.tau,
            nu: c.nu,
            eta: c.eta,
        }
    }
}

/// Summary of the bootstrap law of the derivative statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl DrawSummary {
    fn from_sorted(s: &[f64]) -> Self {
        let n = s.len();
        let mean = s.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Self {
            count: n,
            mean,
            sd,
            min: s[0],
            median,
            max: s[n - 1],
        }
    }
}

/// Outcome of a dominance test of `H₀: X ⪰ Y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub order: Order,
    pub statistic: Statistic,
    pub n1: usize,
    pub n2: usize,
    pub epsilon: f64,
    pub bandwidth: f64,
    pub tau: f64,
    pub alpha: f64,
    pub nu: f64,
    pub eta: f64,
    pub bootstrap: usize,
    pub failed_reps: usize,
    /// `√r_N · F(T̂)`.
    pub statistic_value: f64,
    /// Bootstrap critical value before the `η` floor.
    pub critical_value: f64,
    /// `(1 + #{draws ≥ statistic}) / (B' + 1)`.
    pub p_value: f64,
    /// `#{draws ≥ statistic} / B'`.
    pub p_value_raw: f64,
    pub reject: bool,
    pub contact: ContactSet,
    pub draws: DrawSummary,
    pub t_process: TProcess,
    pub curve_x: ContributionCurve,
    pub curve_y: ContributionCurve,
    pub seed: u64,
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

impl TestResult {
    /// Key/value report, one `key = value` pair per line.
    pub fn report(&self) -> String {
        let order = match self.order {
            CurveKind::First => 1,
            CurveKind::Second => 2,
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("hypothesis", format!("X dominates Y at order {order}"));
        kv("order", order.to_string());
        kv("statistic", self.statistic.to_string());
        kv("N1", self.n1.to_string());
        kv("N2", self.n2.to_string());
        kv("epsilon", fmt_num(self.epsilon));
        kv("b", fmt_num(self.bandwidth));
        kv("tau", fmt_num(self.tau));
        kv("alpha", fmt_num(self.alpha));
        kv("nu", fmt_num(self.nu));
        kv("eta", fmt_num(self.eta));
        kv("B", self.bootstrap.to_string());
        kv("seed", self.seed.to_string());
        kv("statistic_value", fmt_num(self.statistic_value));
        kv("critical_value", fmt_num(self.critical_value));
        kv("p_value", fmt_num(self.p_value));
        kv("p_value_raw", fmt_num(self.p_value_raw));
        kv("reject", self.reject.to_string());
        let levels: Vec<String> = self.contact.levels.iter().map(|p| fmt_num(*p)).collect();
        kv("contact_levels", format!("[{}]", levels.join(", ")));
        kv("failed_reps", self.failed_reps.to_string());
        s
    }
}

/// Full pipeline for `H₀: X ⪰ Y`.
pub fn run_test(x: &Sample, y: &Sample, config: &TestConfig) -> Result<TestResult> {
    let fit = TwoSampleFit::new(x, y, config)?;
    let draws = fit.bootstrap(config.seed, config.bootstrap)?;
    let mut result = fit.evaluate(&draws, &Decision::from(config))?;
    result.seed = config.seed;
    Ok(result)
}

/// Bootstrap difference process of replication `rep_index` for a fresh base fit.
pub fn bootstrap_process(
    x: &Sample,
    y: &Sample,
    config: &TestConfig,
    rep_index: usize,
) -> Result<Option<TProcess>> {
    let fit = TwoSampleFit::new(x, y, config)?;
    Ok(fit
        .bootstrap_process(config.seed, rep_index)?
        .map(|[a, b]| if config.order == CurveKind::First { a } else { b }))
}
