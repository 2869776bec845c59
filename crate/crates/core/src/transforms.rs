//! Preprocessing for data whose natural order is componentwise rather than center-outward.
//!
//! - [`apply_map`] sends each coordinate through a strictly increasing map into `[0, ∞)`.
//! - [`symmetrize`] reflects nonnegative data through every coordinate hyperplane.
//! - [`mix_background`] replaces a fraction of the observations with background draws, for
//!   distributions whose density vanishes inside the support.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::Serialize;

use crate::quantile::Sample;
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonotoneFamily {
    /// `exp(at + b)`
    Exponential,
    /// `max(0, at + b)`
    ShiftedRelu,
    /// `a⁻¹ log(1 + exp(at + b))`
    Softplus,
    /// `1 / (1 + exp(−(at + b)))`
    Logistic,
    /// `π⁻¹ arctan(at + b) + 1`
    Arctangent,
}

impl MonotoneFamily {
    fn name(self) -> &'static str {
        match self {
            MonotoneFamily::Exponential => "exp",
            MonotoneFamily::ShiftedRelu => "relu",
            MonotoneFamily::Softplus => "softplus",
            MonotoneFamily::Logistic => "logistic",
            MonotoneFamily::Arctangent => "arctan",
        }
    }
}

/// `t ↦ f(a t + b)` with `a > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentMap {
    pub family: MonotoneFamily,
    pub a: f64,
    pub b: f64,
}

impl ComponentMap {
    pub fn new(family: MonotoneFamily, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need a > 0 and finite b, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { family, a, b })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let z = self.a * t + self.b;
        match self.family {
            MonotoneFamily::Exponential => z.exp(),
            MonotoneFamily::ShiftedRelu => z.max(0.0),
            MonotoneFamily::Softplus => {
                // log(1 + e^z) without overflow.
                let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                sp / self.a
            }
            MonotoneFamily::Logistic => 1.0 / (1.0 + (-z).exp()),
            MonotoneFamily::Arctangent => z.atan() / PI + 1.0,
        }
    }
}

impl fmt::Display for ComponentMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(a={},b={})", self.family.name(), self.a, self.b)
    }
}

impl FromStr for ComponentMap {
    type Err = Error;

    /// `name(a=..,b=..)`, both arguments optional (defaults `a = 1`, `b = 0`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((n, rest)) => (
                n.trim(),
                rest.strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("missing ')' in '{s}'")))?,
            ),
            None => (s, ""),
        };
        let family = match name {
            "exp" | "exponential" => MonotoneFamily::Exponential,
            "relu" | "shifted-relu" => MonotoneFamily::ShiftedRelu,
            "softplus" => MonotoneFamily::Softplus,
            "logistic" | "sigmoid" => MonotoneFamily::Logistic,
            "arctan" | "arctangent" => MonotoneFamily::Arctangent,
            other => return Err(Error::Parse(format!("unknown monotone map '{other}'"))),
        };
        let (mut a, mut b) = (1.0, 0.0);
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{part}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number in '{part}'")))?;
            match k.trim() {
                "a" => a = v,
                "b" => b = v,
                other => return Err(Error::Parse(format!("unknown argument '{other}'"))),
            }
        }
        ComponentMap::new(family, a, b)
    }
}

/// One component map per coordinate, or a single map applied to all coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneMap {
    pub components: Vec<ComponentMap>,
}

impl MonotoneMap {
    pub fn uniform(component: ComponentMap) -> Self {
        Self {
            components: vec![component],
        }
    }

    fn component(&self, k: usize) -> &ComponentMap {
        if self.components.len() == 1 {
            &self.components[0]
        } else {
            &self.components[k]
        }
    }
}

impl FromStr for MonotoneMap {
    type Err = Error;

    /// `;`-separated component maps, e.g. `softplus(a=1,b=0);exp(a=0.5,b=0)`.
    fn from_str(s: &str) -> Result<Self> {
        let components = s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ComponentMap>>>()?;
        if components.is_empty() {
            return Err(Error::Parse("empty map specification".into()));
        }
        Ok(Self { components })
    }
}

/// Applies the map coordinatewise. Returns warnings for coordinates that the shifted ReLU
/// sends entirely to zero.
pub fn apply_map(map: &MonotoneMap, sample: &Sample) -> Result<(Sample, Vec<String>)> {
    let d = sample.dim();
    if map.components.len() != 1 && map.components.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: map.components.len(),
        });
    }
    let mut obs = sample.observations().clone();
    for (k, mut col) in obs.columns_mut().into_iter().enumerate() {
        let c = map.component(k);
        col.mapv_inplace(|t| c.eval(t));
    }
    let mut warnings = Vec::new();
    for (k, col) in obs.columns().into_iter().enumerate() {
        if map.component(k).family == MonotoneFamily::ShiftedRelu && col.iter().all(|v| *v == 0.0) {
            warnings.push(format!("coordinate {k} is identically zero after relu"));
        }
    }
    let out = match sample.weights() {
        Some(w) => Sample::with_weights(obs, w.to_vec())?,
        None => Sample::new(obs)?,
    };
    Ok((out, warnings))
}

/// Largest dimension with deterministic sign augmentation.
pub const FULL_SYMMETRIZATION_MAX_DIM: usize = 4;

/// Reflects a nonnegative sample through the coordinate hyperplanes.
///
/// For `d ≤ 4` every observation appears under all `2^d` sign patterns with weight
/// `w_i / 2^d`. For larger `d` each observation gets one uniformly random sign pattern drawn
/// from `seed`.
pub fn symmetrize(sample: &Sample, seed: u64) -> Result<Sample> {
    let obs = sample.observations();
    if obs.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition(
            "symmetrization needs nonnegative coordinates".into(),
        ));
    }
    let (n, d) = obs.dim();
    let w = sample.effective_weights();
    if d <= FULL_SYMMETRIZATION_MAX_DIM {
        let patterns = 1usize << d;
        let mut out = Array2::zeros((n * patterns, d));
        let mut weights = Vec::with_capacity(n * patterns);
        for i in 0..n {
            for s in 0..patterns {
                let r = i * patterns + s;
                for k in 0..d {
                    let sign = if s >> k & 1 == 1 { -1.0 } else { 1.0 };
                    out[[r, k]] = sign * obs[[i, k]];
                }
                weights.push(w[i] / patterns as f64);
            }
        }
        Sample::with_weights(out, weights)
    } else {
        let mut rng = stream_rng(seed, streams::SIGNS, 0);
        let mut out = obs.clone();
        for mut row in out.rows_mut() {
            for v in row.iter_mut() {
                if rng.gen::<bool>() {
                    *v = -*v;
                }
            }
        }
        match sample.weights() {
            Some(w) => Sample::with_weights(out, w.to_vec()),
            None => Sample::new(out),
        }
    }
}

/// Background sampler for [`mix_background`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Background {
    /// Uniform on the sample's bounding box, each side inflated by the given fraction.
    InflatedBox(f64),
    /// Uniform on an explicit box `[lo_k, hi_k]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Default for Background {
    fn default() -> Self {
        Background::InflatedBox(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSpec {
    pub eta: f64,
    pub background: Background,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(Self {
            eta,
            background: Background::default(),
            seed,
        })
    }
}

/// Number of replaced observations, `⌈ηN⌉`.
pub fn replaced_count(eta: f64, n: usize) -> usize {
    // Guard against ηN landing a hair above an integer.
    let x = eta * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 { r as usize } else { x.ceil() as usize }.min(n)
}

/// Replaces `⌈ηN⌉` uniformly chosen observations with background draws. Returns the mixed
/// sample and the sorted replaced indices.
pub fn mix_background(sample: &Sample, spec: &MixtureSpec) -> Result<(Sample, Vec<usize>)> {
    if !(0.0..=1.0).contains(&spec.eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {}", spec.eta)));
    }
    let obs = sample.observations();
    let (n, d) = obs.dim();
    let (lo, hi) = match &spec.background {
        Background::InflatedBox(frac) => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for row in obs.rows() {
                for k in 0..d {
                    lo[k] = lo[k].min(row[k]);
                    hi[k] = hi[k].max(row[k]);
                }
            }
            for k in 0..d {
                let pad = 0.5 * frac * (hi[k] - lo[k]);
                lo[k] -= pad;
                hi[k] += pad;
            }
            (lo, hi)
        }
        Background::Box { lo, hi } => {
            if lo.len() != d || hi.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: lo.len(),
                });
            }
            (lo.clone(), hi.clone())
        }
    };
    let k = replaced_count(spec.eta, n);
    let mut rng = stream_rng(spec.seed, streams::BACKGROUND, 0);
    let mut idx = sample_indices(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    let mut out = obs.clone();
    for &i in &idx {
        for c in 0..d {
            out[[i, c]] = if hi[c] > lo[c] { rng.gen_range(lo[c]..hi[c]) } else { lo[c] };
        }
    }
    let mixed = match sample.weights() {
        Some(w) => Sample::with_weights(out, w.to_vec())?,
        None => Sample::new(out)?,
    };
    Ok((mixed, idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn family_formulas() {
        let sp: ComponentMap = "softplus(a=1,b=0)".parse().unwrap();
        assert!((sp.eval(0.0) - 2f64.ln()).abs() < 1e-15);
        let relu: ComponentMap = "relu(a=1,b=0)".parse().unwrap();
        assert_eq!(relu.eval(-3.0), 0.0);
        let at: ComponentMap = "arctan(a=1,b=0)".parse().unwrap();
        assert_eq!(at.eval(0.0), 1.0);
        let lg: ComponentMap = "logistic".parse().unwrap();
        assert_eq!(lg.eval(0.0), 0.5);
        let ex: ComponentMap = "exp(a=2,b=1)".parse().unwrap();
        assert!((ex.eval(0.5) - 2f64.exp()).abs() < 1e-12);
        let big = ComponentMap::new(MonotoneFamily::Softplus, 2.0, 0.0).unwrap();
        assert!((big.eval(500.0) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn parse_errors() {
        assert!("nope(a=1)".parse::<ComponentMap>().is_err());
        assert!("exp(a=-1)".parse::<ComponentMap>().is_err());
        assert!("exp(c=1)".parse::<ComponentMap>().is_err());
        assert!("exp(a=1".parse::<ComponentMap>().is_err());
        assert!("".parse::<MonotoneMap>().is_err());
    }

    #[test]
    fn display_round_trip() {
        let m: ComponentMap = "softplus(a=2,b=-1)".parse().unwrap();
        assert_eq!(m.to_string().parse::<ComponentMap>().unwrap(), m);
    }

    #[test]
    fn relu_warning() {
        let s = Sample::new(array![[-1.0, 2.0], [-2.0, 3.0]]).unwrap();
        let (_, w) = apply_map(&"relu".parse().unwrap(), &s).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn symmetrize_small_cases() {
        let s = Sample::with_weights(array![[2.0], [2.0]], vec![1.0, 1.0]).unwrap();
        let sym = symmetrize(&s, 0).unwrap();
        assert_eq!(sym.len(), 4);
        let pts: Vec<f64> = sym.observations().iter().cloned().collect();
        assert_eq!(pts, vec![2.0, -2.0, 2.0, -2.0]);

        let s2 = Sample::new(array![[1.0, 3.0], [0.5, 0.5]]).unwrap();
        let sym2 = symmetrize(&s2, 0).unwrap();
        assert_eq!(sym2.len(), 8);
        assert!(sym2.weights().unwrap().iter().all(|w| (w - 0.125).abs() < 1e-15));
        let first: Vec<Vec<f64>> = (0..4).map(|r| sym2.observations().row(r).to_vec()).collect();
        assert_eq!(first, vec![vec![1.0, 3.0], vec![-1.0, 3.0], vec![1.0, -3.0], vec![-1.0, -3.0]]);
        assert!(sym2.mean().iter().all(|m| m.abs() < 1e-12));

        assert!(symmetrize(&Sample::new(array![[-1.0], [1.0]]).unwrap(), 0).is_err());
    }

    #[test]
    fn symmetrize_high_dimension_flips_signs() {
        let s = Sample::new(Array2::from_elem((50, 6), 1.0)).unwrap();
        let out = symmetrize(&s, 3).unwrap();
        assert_eq!(out.len(), 50);
        assert!(out.observations().iter().all(|v| v.abs() == 1.0));
        assert!(out.observations().iter().any(|v| *v < 0.0));
    }

    #[test]
    fn mixing_counts() {
        let s = Sample::new(Array2::from_shape_fn((1000, 2), |(i, j)| (i + j) as f64)).unwrap();
        let (same, idx) = mix_background(&s, &MixtureSpec::new(0.0, 1).unwrap()).unwrap();
        assert_eq!(same, s);
        assert!(idx.is_empty());
        let (_, idx) = mix_background(&s, &MixtureSpec::new(0.1, 1).unwrap()).unwrap();
        assert_eq!(idx.len(), 100);
        let (all, idx) = mix_background(&s, &MixtureSpec::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(idx.len(), 1000);
        assert_ne!(all, s);
        assert_eq!(replaced_count(0.3, 10), 3);
        assert_eq!(replaced_count(0.31, 10), 4);
    }
}
