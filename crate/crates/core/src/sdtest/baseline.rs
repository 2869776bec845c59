//! Grid-CDF permutation test for bivariate dominance.
//!
//! Empirical distribution functions are compared on a `G × G` grid of pooled marginal
//! quantiles. First order compares `F(z) = P(X ≤ z)`; second order compares the integrated
//! distribution function `D(z) = E Π_k (z_k − X_k)₊`. Under `H₀: X ⪰ Y` both differences
//! `F_X − F_Y` and `D_X − D_Y` are nonpositive, so the statistic is `√r_N` times the largest
//! difference, and the p-value comes from label permutations of the pooled sample.

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{rate, Order};
use crate::contribution::CurveKind;
use crate::quantile::Sample;
use crate::rng::{stream_rng, streams};
use crate::{parallel, Error, Result};
use rayon::prelude::*;

/// Quantile levels per axis.
pub const BASELINE_GRID: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn grid_points(pooled: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let axis = |k: usize| {
        let mut v: Vec<f64> = pooled.iter().map(|p| p[k]).collect();
        v.sort_by(f64::total_cmp);
        (1..=BASELINE_GRID)
            .map(|i| quantile_sorted(&v, i as f64 / (BASELINE_GRID + 1) as f64))
            .collect::<Vec<_>>()
    };
    let (a, b) = (axis(0), axis(1));
    a.iter().flat_map(|&u| b.iter().map(move |&v| [u, v])).collect()
}

fn functional(points: &[[f64; 2]], z: &[f64; 2], order: Order) -> f64 {
    let s: f64 = match order {
        CurveKind::First => points
            .iter()
            .filter(|p| p[0] <= z[0] && p[1] <= z[1])
            .count() as f64,
        CurveKind::Second => points
            .iter()
            .map(|p| (z[0] - p[0]).max(0.0) * (z[1] - p[1]).max(0.0))
            .sum(),
    };
    s / points.len() as f64
}

fn statistic(x: &[[f64; 2]], y: &[[f64; 2]], grid: &[[f64; 2]], order: Order) -> f64 {
    let scale = rate(x.len(), y.len()).sqrt();
    grid.iter()
        .map(|z| functional(x, z, order) - functional(y, z, order))
        .fold(f64::NEG_INFINITY, f64::max)
        * scale
}

/// Permutation test of `H₀: X ⪰ Y` on a pooled-quantile grid. Bivariate only.
pub fn baseline_cdf_test(
    x: &Sample,
    y: &Sample,
    order: Order,
    permutations: usize,
    seed: u64,
) -> Result<BaselineResult> {
    if x.dim() != 2 || y.dim() != 2 {
        return Err(Error::Unsupported(
            "the grid-CDF baseline handles bivariate samples only".into(),
        ));
    }
    if permutations == 0 {
        return Err(Error::InvalidParameter("need at least one permutation".into()));
    }
    let rows = |s: &Sample| -> Vec<[f64; 2]> {
        s.observations().rows().into_iter().map(|r| [r[0], r[1]]).collect()
    };
    let (xs, ys) = (rows(x), rows(y));
    let pooled: Vec<[f64; 2]> = xs.iter().chain(&ys).copied().collect();
    let grid = grid_points(&pooled);
    let observed = statistic(&xs, &ys, &grid, order);
    let n1 = xs.len();
    let exceed: usize = parallel::pool().install(|| {
        (0..permutations)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream_rng(seed, streams::PERMUTATION, k as u64);
                let mut perm = pooled.clone();
                perm.shuffle(&mut rng);
                let s = statistic(&perm[..n1], &perm[n1..], &grid, order);
                usize::from(s >= observed)
            })
            .sum()
    });
    Ok(BaselineResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        permutations,
    })
}
