//! Contribution curves.
//!
//! For a loss/benefit function `ρ` the first-order curve averages `ρ` over the images of a
//! radial band of grid points (a discrete quantile contour), and the second-order curve sums
//! `ρ/n` over the images of all grid points inside a ball (a discrete quantile region):
//!
//! ```text
//! M̂(p) = mean { ρ(Q̂(g_i)) : p − b < ‖g_i‖ ≤ p + b }
//! 𝕄̂(p) = (1/n) Σ_{‖g_i‖ ≤ p} ρ(Q̂(g_i))
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::erf::erf;

use crate::quantile::QuantileMap;
use crate::{Error, Result};

/// Radially monotone, nonnegative function of a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RhoFn {
    Norm,
    SquaredNorm,
    CappedNorm(f64),
    /// Piecewise-linear profile of the norm through `(radius, value)` knots; constant
    /// beyond the last knot.
    Radial(RadialProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialProfile {
    /// Knots must start at radius 0, increase strictly, and carry nondecreasing
    /// nonnegative values.
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.is_empty() {
            return Err(Error::InvalidParameter("profile needs matching, nonempty knots".into()));
        }
        if radii[0] != 0.0 {
            return Err(Error::InvalidParameter("profile must start at radius 0".into()));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("profile radii must increase".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "profile values must be nonnegative and nondecreasing".into(),
            ));
        }
        Ok(Self { radii, values })
    }

    fn eval(&self, r: f64) -> f64 {
        let k = self.radii.partition_point(|&x| x <= r);
        if k >= self.radii.len() {
            return *self.values.last().unwrap();
        }
        let (r0, r1) = (self.radii[k - 1], self.radii[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }
}

impl RhoFn {
    pub fn capped(cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidParameter(format!("cap must be positive, got {cap}")));
        }
        Ok(Self::CappedNorm(cap))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        match self {
            RhoFn::Norm => sq.sqrt(),
            RhoFn::SquaredNorm => sq,
            RhoFn::CappedNorm(c) => sq.sqrt().min(*c),
            RhoFn::Radial(p) => p.eval(sq.sqrt()),
        }
    }

    /// Short tag used in reports.
    pub fn tag(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RhoFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoFn::Norm => write!(f, "norm"),
            RhoFn::SquaredNorm => write!(f, "sqnorm"),
            RhoFn::CappedNorm(c) => write!(f, "capped({c})"),
            RhoFn::Radial(p) => {
                write!(f, "radial(")?;
                for (k, (r, v)) in p.radii.iter().zip(&p.values).enumerate() {
                    if k > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{r}:{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for RhoFn {
    type Err = Error;

    /// Accepts `norm`, `sqnorm`, `capped(c)` and `radial(r0:v0;r1:v1;...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "norm" => return Ok(RhoFn::Norm),
            "sqnorm" => return Ok(RhoFn::SquaredNorm),
            _ => {}
        }
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
        };
        if let Some(arg) = inner("capped") {
            let c: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad cap in '{s}'")))?;
            return RhoFn::capped(c);
        }
        if let Some(arg) = inner("radial") {
            let mut radii = Vec::new();
            let mut values = Vec::new();
            for knot in arg.split(';') {
                let (r, v) = knot
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad knot '{knot}'")))?;
                radii.push(r.trim().parse().map_err(|_| Error::Parse(format!("bad radius '{r}'")))?);
                values.push(v.trim().parse().map_err(|_| Error::Parse(format!("bad value '{v}'")))?);
            }
            return Ok(RhoFn::Radial(RadialProfile::new(radii, values)?));
        }
        Err(Error::Parse(format!("unknown rho '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    First,
    Second,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::First => write!(f, "first"),
            CurveKind::Second => write!(f, "second"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveProvenance {
    pub epsilon: f64,
    pub bandwidth: Option<f64>,
    pub sample_size: usize,
    pub rho: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionCurve {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
    /// Requested levels that produced no value.
    pub dropped: Vec<f64>,
    pub provenance: CurveProvenance,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::InvalidParameter("levels must lie in (0, 1]".into()));
    }
    if levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Default bandwidth: one shell spacing.
pub fn default_bandwidth(qmap: &QuantileMap) -> f64 {
    qmap.grid.shell_spacing()
}

/// Default levels: the shell radii.
pub fn default_levels(qmap: &QuantileMap) -> Vec<f64> {
    qmap.grid.radii().to_vec()
}

/// `ρ` evaluated at every image.
pub fn rho_values(qmap: &QuantileMap, rho: &RhoFn) -> Vec<f64> {
    qmap.images
        .rows()
        .into_iter()
        .map(|r| rho.eval(r.as_slice().expect("standard layout")))
        .collect()
}

/// Band averages of `ρ(image)`.
pub fn first_order_curve(
    qmap: &QuantileMap,
    rho: &RhoFn,
    levels: &[f64],
    b: f64,
) -> Result<ContributionCurve> {
    check_levels(levels)?;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must lie in (0, 1), got {b}")));
    }
    let values = rho_values(qmap, rho);
    let (kept, vals, dropped) = first_order_from_values(&qmap.grid, &values, levels, b);
    if kept.is_empty() {
        return Err(Error::EmptyCurve);
    }
    Ok(ContributionCurve {
        levels: kept,
        values: vals,
        kind: CurveKind::First,
        dropped,
        provenance: CurveProvenance {
            epsilon: qmap.epsilon,
            bandwidth: Some(b),
            sample_size: qmap.sample_size,
            rho: rho.tag(),
        },
    })
}

pub(crate) fn first_order_from_values(
    grid: &crate::ballgrid::BallGrid,
    rho_values: &[f64],
    levels: &[f64],
    b: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut kept = Vec::new();
    let mut vals = Vec::new();
    let mut dropped = Vec::new();
    for &p in levels {
        let band = grid.shell_band(p, b);
        if band.is_empty() {
            dropped.push(p);
            continue;
        }
        let s: f64 = band.iter().map(|&i| rho_values[i]).sum();
        kept.push(p);
        vals.push(s / band.len() as f64);
    }
    (kept, vals, dropped)
}

/// Prefix sums of `ρ(image)/n` over balls.
pub fn second_order_curve(
    qmap: &QuantileMap,
    rho: &RhoFn,
    levels: &[f64],
) -> Result<ContributionCurve> {
    check_levels(levels)?;
    let values = rho_values(qmap, rho);
    Ok(ContributionCurve {
        levels: levels.to_vec(),
        values: second_order_from_values(&qmap.grid, &values, levels),
        kind: CurveKind::Second,
        dropped: Vec::new(),
        provenance: CurveProvenance {
            epsilon: qmap.epsilon,
            bandwidth: None,
            sample_size: qmap.sample_size,
            rho: rho.tag(),
        },
    })
}

pub(crate) fn second_order_from_values(
    grid: &crate::ballgrid::BallGrid,
    rho_values: &[f64],
    levels: &[f64],
) -> Vec<f64> {
    // Sort point indices by radius once, then sweep the levels.
    let n = grid.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| grid.point_radius(i).total_cmp(&grid.point_radius(j)));
    let mut out = Vec::with_capacity(levels.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &p in levels {
        while k < n && grid.point_radius(order[k]) <= p + 1e-12 {
            acc += rho_values[order[k]];
            k += 1;
        }
        out.push(acc / n as f64);
    }
    out
}

/// Radial law of the reference distribution that the quantile levels are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReferenceLaw {
    /// Uniform direction times uniform radius (the law the ball grid discretizes): the
    /// region of level `p` carries mass `p`.
    SphericalUniform,
    /// Uniform on the disk by area: the region of level `p` carries mass `p²`.
    DiskArea,
}

/// Closed-form curves of `N(0, σ²I₂)` with `ρ = ‖·‖`, measured against the area-uniform
/// disk: `M(p) = σ√(−2 ln(1 − p²))` and `𝕄(p) = σ∫₀^{r(p)/σ} t² e^{−t²/2} dt`.
///
/// The ball grid discretizes the spherical uniform law instead; for curves that estimators
/// fitted on a grid converge to, use [`analytic_normal_curve_for`] with
/// [`ReferenceLaw::SphericalUniform`].
pub fn analytic_normal_curve(sigma: f64, levels: &[f64], kind: CurveKind) -> Result<ContributionCurve> {
    analytic_normal_curve_for(ReferenceLaw::DiskArea, sigma, levels, kind)
}

/// Closed-form curves of `N(0, σ²I₂)` with `ρ = ‖·‖` against the given reference law.
///
/// The quantile radius at level `p` is `r(p) = σ√(−2 ln(1 − m(p)))` with `m(p)` the reference
/// mass of the level-`p` ball. First-order level 1 is infinite and is dropped.
pub fn analytic_normal_curve_for(
    law: ReferenceLaw,
    sigma: f64,
    levels: &[f64],
    kind: CurveKind,
) -> Result<ContributionCurve> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    check_levels(levels)?;
    let mass = |p: f64| match law {
        ReferenceLaw::SphericalUniform => p,
        ReferenceLaw::DiskArea => p * p,
    };
    let mut kept = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for &p in levels {
        let m = mass(p);
        let radius = sigma * (-2.0 * (-m).ln_1p()).sqrt();
        match kind {
            CurveKind::First => {
                if radius.is_finite() {
                    kept.push(p);
                    values.push(radius);
                } else {
                    dropped.push(p);
                }
            }
            CurveKind::Second => {
                kept.push(p);
                values.push(sigma * truncated_rayleigh_moment(radius / sigma));
            }
        }
    }
    Ok(ContributionCurve {
        levels: kept,
        values,
        kind,
        dropped,
        provenance: CurveProvenance {
            epsilon: 0.0,
            bandwidth: None,
            sample_size: 0,
            rho: RhoFn::Norm.tag(),
        },
    })
}

/// `∫₀^a t² e^{−t²/2} dt = √(π/2)·erf(a/√2) − a e^{−a²/2}`.
fn truncated_rayleigh_moment(a: f64) -> f64 {
    if a.is_infinite() {
        return (PI / 2.0).sqrt();
    }
    (PI / 2.0).sqrt() * erf(a / 2f64.sqrt()) - a * (-a * a / 2.0).exp()
}
