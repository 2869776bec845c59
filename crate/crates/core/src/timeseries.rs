//! Vector autoregressions fitted by least squares, AIC order selection and residual splits.

use nalgebra::DMatrix;
use ndarray::{s, Array2};

use crate::quantile::Sample;
use crate::{Error, Result};

/// A fitted VAR(p) with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct VarFit {
    pub order: usize,
    /// `Φ₁..Φ_p`, each `d × d`; row `i` holds the coefficients of equation `i`.
    pub coefficients: Vec<Array2<f64>>,
    pub intercept: Vec<f64>,
    /// `(T − p) × d`, in time order.
    pub residuals: Array2<f64>,
    pub aic: f64,
}

impl VarFit {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }
}

fn regressors(series: &Array2<f64>, p: usize, start: usize) -> DMatrix<f64> {
    let (t, d) = series.dim();
    let rows = t - start;
    DMatrix::from_fn(rows, 1 + d * p, |r, c| {
        if c == 0 {
            return 1.0;
        }
        let lag = (c - 1) / d + 1;
        let k = (c - 1) % d;
        series[[start + r - lag, k]]
    })
}

/// Fits a VAR(p) using observations from `start` on as responses (`start ≥ p`).
fn fit_from(series: &Array2<f64>, p: usize, start: usize) -> Result<VarFit> {
    let (t, d) = series.dim();
    if p == 0 || d == 0 {
        return Err(Error::InvalidParameter("order and dimension must be positive".into()));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("series contains non-finite values".into()));
    }
    let effective = t.saturating_sub(start);
    if t <= d * p + d + 1 || effective <= d * p + 1 {
        return Err(Error::InvalidParameter(format!(
            "series of length {t} too short for a VAR({p}) in dimension {d}"
        )));
    }
    let x = regressors(series, p, start);
    let y = DMatrix::from_fn(effective, d, |r, c| series[[start + r, c]]);
    let xtx = x.transpose() * &x;
    let chol = xtx.cholesky().ok_or_else(|| Error::Singular("lagged regressor matrix".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let coefficients = (0..p)
        .map(|l| Array2::from_shape_fn((d, d), |(i, k)| beta[(1 + l * d + k, i)]))
        .collect();
    let intercept = (0..d).map(|i| beta[(0, i)]).collect();
    let sigma = resid.transpose() * &resid / effective as f64;
    let det = sigma.determinant();
    if !(det > 0.0) {
        return Err(Error::Singular("least-squares normal equations".into()));
    }
    let aic = det.ln() + 2.0 * (d * d * p + d) as f64 / effective as f64;
    Ok(VarFit {
        order: p,
        coefficients,
        intercept,
        residuals: Array2::from_shape_fn((effective, d), |(r, c)| resid[(r, c)]),
        aic,
    })
}

/// Equation-by-equation least squares with intercept on `p` lags of a `T × d` series.
pub fn fit_var(series: &Array2<f64>, p: usize) -> Result<VarFit> {
    fit_from(series, p, p)
}

/// AIC-minimizing order in `1..=p_max`; every candidate is fitted on the same responses
/// (the last `T − p_max` observations). Ties go to the smaller order.
pub fn select_order(series: &Array2<f64>, p_max: usize) -> Result<usize> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    let mut best = (1, f64::INFINITY);
    for p in 1..=p_max {
        let aic = fit_from(series, p, p_max)?.aic;
        if aic < best.1 {
            best = (p, aic);
        }
    }
    Ok(best.0)
}

/// Where the observation at the break index goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BreakSide {
    #[default]
    Before,
    After,
}

/// Residual blocks on either side of a break.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSplit {
    pub before: Array2<f64>,
    pub after: Array2<f64>,
}

impl ResidualSplit {
    pub fn sizes(&self) -> (usize, usize) {
        (self.before.nrows(), self.after.nrows())
    }

    /// Both blocks as samples; fails when either has fewer than two rows.
    pub fn to_samples(&self) -> Result<(Sample, Sample)> {
        Ok((Sample::new(self.before.clone())?, Sample::new(self.after.clone())?))
    }
}

/// Splits residuals before row `break_index`; with `window`, keeps the last `window` rows
/// before and the first `window` rows after (or fewer when unavailable).
pub fn split_residuals(
    fit: &VarFit,
    break_index: usize,
    window: Option<usize>,
) -> Result<ResidualSplit> {
    split_residuals_at(fit, break_index, window, BreakSide::After)
}

/// As [`split_residuals`], with the row at the break placed on `side`.
pub fn split_residuals_at(
    fit: &VarFit,
    break_index: usize,
    window: Option<usize>,
    side: BreakSide,
) -> Result<ResidualSplit> {
    let n = fit.residuals.nrows();
    let cut = match side {
        BreakSide::After => break_index,
        BreakSide::Before => break_index + 1,
    };
    if break_index == 0 || cut == 0 || cut >= n {
        return Err(Error::InvalidParameter(format!(
            "break index {break_index} outside the {n} residuals"
        )));
    }
    let (mut lo, mut hi) = (0, n);
    if let Some(w) = window {
        if w == 0 {
            return Err(Error::InvalidParameter("window must be positive".into()));
        }
        lo = cut.saturating_sub(w);
        hi = (cut + w).min(n);
    }
    Ok(ResidualSplit {
        before: fit.residuals.slice(s![lo..cut, ..]).to_owned(),
        after: fit.residuals.slice(s![cut..hi, ..]).to_owned(),
    })
}
