//! Empirical (entropic) center-outward quantile maps.
//!
//! A map is fitted by transporting the uniform measure on a [`BallGrid`] onto the sample and
//! taking barycentric projections: the image of grid point `g_i` is the conditional mean of
//! the sample under the coupling given `g_i`. With `ε > 0` the coupling is the entropic one;
//! with `ε = 0` it is an exact optimal plan (oracle sizes only).

use ndarray::{Array2, Axis};

use crate::ballgrid::BallGrid;
use crate::transport::{
    self, solve_entropic, DiscreteMeasure, DualPotentials, SinkhornConfig, SinkhornReport,
};
use crate::{Error, Result};

/// Default regularization.
pub const DEFAULT_EPSILON: f64 = 0.2;

/// Observations, one per row, with optional nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    observations: Array2<f64>,
    weights: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(observations: Array2<f64>) -> Result<Self> {
        if observations.nrows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a sample needs at least 2 observations, got {}",
                observations.nrows()
            )));
        }
        if observations.ncols() == 0 {
            return Err(Error::InvalidParameter("a sample needs at least one column".into()));
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sample contains non-finite values".into()));
        }
        Ok(Self {
            observations: observations.as_standard_layout().into_owned(),
            weights: None,
        })
    }

    /// Weighted sample; weights are rescaled to sum to one.
    pub fn with_weights(observations: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(observations)?;
        if weights.len() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        s.weights = Some(weights.iter().map(|w| w / total).collect());
        Ok(s)
    }

    pub fn observations(&self) -> &Array2<f64> {
        &self.observations
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.observations.ncols()
    }

    /// Weights actually used: the stored ones, else `1/N`.
    pub fn effective_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.observations.clone(), self.effective_weights())
    }

    /// Weighted mean.
    pub fn mean(&self) -> Vec<f64> {
        let w = self.effective_weights();
        let mut m = vec![0.0; self.dim()];
        for (row, wi) in self.observations.rows().into_iter().zip(&w) {
            for (acc, v) in m.iter_mut().zip(row.iter()) {
                *acc += wi * v;
            }
        }
        m
    }

    /// Copy with `shift` subtracted from every observation.
    pub fn centered_at(&self, shift: &[f64]) -> Self {
        let mut obs = self.observations.clone();
        for mut row in obs.rows_mut() {
            for (v, s) in row.iter_mut().zip(shift) {
                *v -= s;
            }
        }
        Self {
            observations: obs,
            weights: self.weights.clone(),
        }
    }
}

/// Fitted map: the barycentric image of each grid point.
#[derive(Debug, Clone)]
pub struct QuantileMap {
    pub grid: BallGrid,
    /// One image per grid point, in grid order.
    pub images: Array2<f64>,
    pub epsilon: f64,
    pub sample_size: usize,
    /// Sinkhorn diagnostics (absent for the exact path).
    pub report: Option<SinkhornReport>,
    /// Entropic potentials (absent for the exact path).
    pub potentials: Option<DualPotentials>,
}

impl QuantileMap {
    /// Images of the points in the radial band `(p − b, p + b]`.
    pub fn contour_points(&self, p: f64, b: f64) -> Array2<f64> {
        self.images.select(Axis(0), &self.grid.shell_band(p, b))
    }

    /// Images of the points with radius `≤ p`.
    pub fn region_points(&self, p: f64) -> Array2<f64> {
        self.images.select(Axis(0), &self.grid.ball_prefix(p))
    }
}

/// Fits the map with default Sinkhorn settings; `epsilon = 0` selects the exact plan.
pub fn fit_quantile_map(sample: &Sample, grid: &BallGrid, epsilon: f64) -> Result<QuantileMap> {
    fit_quantile_map_with(sample, grid, epsilon, &SinkhornConfig::default(), None)
}

/// Fits the map with explicit solver settings and an optional warm start.
pub fn fit_quantile_map_with(
    sample: &Sample,
    grid: &BallGrid,
    epsilon: f64,
    config: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<QuantileMap> {
    let target = sample.to_measure()?;
    fit_to_measure(&target, grid, epsilon, config, warm)
}

pub(crate) fn grid_measure(grid: &BallGrid) -> Result<DiscreteMeasure> {
    DiscreteMeasure::uniform(grid.points().clone())
}

pub(crate) fn fit_to_measure(
    target: &DiscreteMeasure,
    grid: &BallGrid,
    epsilon: f64,
    config: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<QuantileMap> {
    if grid.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: target.dim(),
        });
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    let source = grid_measure(grid)?;
    if epsilon == 0.0 {
        let plan = transport::solve_exact(&source, target)?;
        let n = source.len() as f64;
        let images = plan.coupling.dot(target.points()) * n;
        return Ok(QuantileMap {
            grid: grid.clone(),
            images,
            epsilon,
            sample_size: target.len(),
            report: None,
            potentials: None,
        });
    }
    let (images, potentials, report) = entropic_images(&source, target, epsilon, config, warm)?;
    Ok(QuantileMap {
        grid: grid.clone(),
        images,
        epsilon,
        sample_size: target.len(),
        report: Some(report),
        potentials: Some(potentials),
    })
}

/// Entropic barycentric images of every source atom. Fails on non-convergence.
pub(crate) fn entropic_images(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    epsilon: f64,
    config: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<(Array2<f64>, DualPotentials, SinkhornReport)> {
    let solved = solve_entropic(source, target, epsilon, config, warm)?;
    if !solved.report.converged {
        return Err(Error::NotConverged {
            iterations: solved.report.iterations,
            error: solved.report.marginal_error,
        });
    }
    let d = target.dim();
    let m = solved.cols.len();
    let ys = target.points();
    let mut images = Array2::zeros((source.len(), d));
    for (k, &i) in solved.rows.iter().enumerate() {
        let krow = &solved.kernel[k * m..(k + 1) * m];
        let total: f64 = krow.iter().sum();
        let mut acc = vec![0.0; d];
        for (kij, &j) in krow.iter().zip(&solved.cols) {
            let y = ys.row(j);
            for (a, v) in acc.iter_mut().zip(y.iter()) {
                *a += kij * v;
            }
        }
        for (c, a) in acc.into_iter().enumerate() {
            images[[i, c]] = a / total;
        }
    }
    // Zero-weight grid atoms do not occur for uniform grids; map them through the potentials.
    if solved.rows.len() < source.len() {
        for i in 0..source.len() {
            if source.weights()[i] == 0.0 {
                let x = source.points().row(i).to_vec();
                let img = transport::entropic_map(&solved.potentials, target, &x);
                for (c, v) in img.into_iter().enumerate() {
                    images[[i, c]] = v;
                }
            }
        }
    }
    Ok((images, solved.potentials, solved.report))
}
