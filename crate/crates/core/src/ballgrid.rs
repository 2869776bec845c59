//! Regular grid on the closed unit ball discretizing the spherical uniform law.
//!
//! Points are `radius × direction` for `n_r` shells at radii `j/(n_r+1)` and `n_s` unit
//! directions, optionally plus the origin. Points are stored shell by shell (inner shell
//! first, directions in order within a shell); the origin, when present, comes last.

use std::f64::consts::PI;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

/// Seed of the direction stream for `d ≥ 4`.
pub const DIRECTION_SEED: u64 = 0x5eed_d1ec;

/// Radial slack used in band and prefix membership tests.
const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BallGrid {
    dim: usize,
    n_r: usize,
    n_s: usize,
    with_origin: bool,
    points: Array2<f64>,
    radii: Vec<f64>,
    directions: Array2<f64>,
    /// Exact radius of each point (a shell radius, or 0 for the origin).
    point_radius: Vec<f64>,
}

/// Builds the grid with `n_r` shells, `n_s` directions and an optional origin.
pub fn build_grid(d: usize, n_r: usize, n_s: usize, with_origin: bool) -> Result<BallGrid> {
    if d == 0 || n_r == 0 || n_s == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid needs d, n_r, n_s >= 1 (got {d}, {n_r}, {n_s})"
        )));
    }
    let directions = directions(d, n_s);
    let radii: Vec<f64> = (1..=n_r).map(|j| j as f64 / (n_r + 1) as f64).collect();
    let n = n_r * n_s + usize::from(with_origin);
    let mut points = Array2::zeros((n, d));
    let mut point_radius = Vec::with_capacity(n);
    for (j, r) in radii.iter().enumerate() {
        for k in 0..n_s {
            let mut row = points.row_mut(j * n_s + k);
            row.assign(&(&directions.row(k) * *r));
            point_radius.push(*r);
        }
    }
    if with_origin {
        point_radius.push(0.0);
    }
    Ok(BallGrid {
        dim: d,
        n_r,
        n_s,
        with_origin,
        points,
        radii,
        directions,
        point_radius,
    })
}

/// Default shape for a sample of size `n`: `n_r = ⌊√n⌋`, `n_s = ⌊n/n_r⌋` and an origin
/// whenever `n_r·n_s < n`. The grid then has `min(n, n_r·n_s + 1)` points.
pub fn default_shape(n: usize) -> (usize, usize, bool) {
    let n = n.max(1);
    let n_r = ((n as f64).sqrt().floor() as usize).max(1);
    let n_s = (n / n_r).max(1);
    (n_r, n_s, n_r * n_s < n)
}

fn directions(d: usize, n_s: usize) -> Array2<f64> {
    let mut dirs = Array2::zeros((n_s, d));
    match d {
        1 => {
            for k in 0..n_s {
                dirs[[k, 0]] = if k % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        2 => {
            for k in 0..n_s {
                let theta = 2.0 * PI * k as f64 / n_s as f64;
                dirs[[k, 0]] = theta.cos();
                dirs[[k, 1]] = theta.sin();
            }
        }
        3 => {
            // Fibonacci lattice.
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..n_s {
                let z = 1.0 - (2 * k + 1) as f64 / n_s as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * k as f64;
                dirs[[k, 0]] = rho * phi.cos();
                dirs[[k, 1]] = rho * phi.sin();
                dirs[[k, 2]] = z;
            }
        }
        _ => {
            // Normalized Gaussian draws in antithetic pairs so the directions balance.
            let mut rng = stream_rng(DIRECTION_SEED, streams::GRID, d as u64);
            let mut k = 0;
            while k < n_s {
                let v: Vec<f64> = loop {
                    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        break v.iter().map(|x| x / norm).collect();
                    }
                };
                for (c, x) in v.iter().enumerate() {
                    dirs[[k, c]] = *x;
                }
                if k + 1 < n_s {
                    for (c, x) in v.iter().enumerate() {
                        dirs[[k + 1, c]] = -*x;
                    }
                }
                k += 2;
            }
        }
    }
    dirs
}

impl BallGrid {
    /// Grid with the default shape for `n` observations in dimension `d`.
    pub fn for_sample_size(d: usize, n: usize) -> Result<Self> {
        let (n_r, n_s, origin) = default_shape(n);
        build_grid(d, n_r, n_s, origin)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_0(&self) -> usize {
        usize::from(self.with_origin)
    }

    pub fn has_origin(&self) -> bool {
        self.with_origin
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.point_radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_radius.is_empty()
    }

    /// One point per row.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Shell radii `j/(n_r+1)`, `j = 1..n_r`.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// One unit direction per row.
    pub fn directions(&self) -> &Array2<f64> {
        &self.directions
    }

    /// Exact radius of point `i`.
    pub fn point_radius(&self, i: usize) -> f64 {
        self.point_radius[i]
    }

    /// Index of the point on shell `j` (0-based) and direction `k`.
    pub fn index(&self, shell: usize, direction: usize) -> usize {
        shell * self.n_s + direction
    }

    /// Spacing between consecutive shells, `1/(n_r+1)`.
    pub fn shell_spacing(&self) -> f64 {
        1.0 / (self.n_r + 1) as f64
    }

    /// Indices with `p − b < ‖g_i‖ ≤ p + b`. The origin never belongs to a band.
    pub fn shell_band(&self, p: f64, b: f64) -> Vec<usize> {
        let lo = p - b;
        let hi = p + b;
        (0..self.len())
            .filter(|&i| {
                let r = self.point_radius[i];
                r > 0.0 && r > lo + RADIUS_SLACK && r <= hi + RADIUS_SLACK
            })
            .collect()
    }

    /// Indices with `‖g_i‖ ≤ p`.
    pub fn ball_prefix(&self, p: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.point_radius[i] <= p + RADIUS_SLACK)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_planar_grid() {
        let g = build_grid(2, 2, 4, false).unwrap();
        assert_eq!(g.len(), 8);
        let expect = [
            (1.0 / 3.0, 0.0),
            (0.0, 1.0 / 3.0),
            (-1.0 / 3.0, 0.0),
            (0.0, -1.0 / 3.0),
        ];
        for (k, (x, y)) in expect.iter().enumerate() {
            assert!((g.points()[[k, 0]] - x).abs() < 1e-15);
            assert!((g.points()[[k, 1]] - y).abs() < 1e-15);
            assert!((g.points()[[k + 4, 0]] - 2.0 * x).abs() < 1e-15);
            assert!((g.points()[[k + 4, 1]] - 2.0 * y).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_with_origin() {
        let g = build_grid(2, 1, 1, true).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.points().row(0).to_vec(), vec![0.5, 0.0]);
        assert_eq!(g.points().row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn fibonacci_sphere_is_balanced() {
        let g = build_grid(3, 3, 100, false).unwrap();
        assert_eq!(g.len(), 300);
        let mean = g.points().mean_axis(ndarray::Axis(0)).unwrap();
        assert!(mean.dot(&mean).sqrt() <= 0.02);
    }

    #[test]
    fn directions_have_unit_norm() {
        for d in 1..=6 {
            let g = build_grid(d, 1, 65, false).unwrap();
            for row in g.directions().rows() {
                assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
            }
            if d >= 2 {
                let mean = g.points().mean_axis(ndarray::Axis(0)).unwrap();
                assert!(mean.dot(&mean).sqrt() <= 0.02, "d = {d}");
            }
        }
    }

    #[test]
    fn bands_and_prefixes() {
        let g = build_grid(2, 2, 4, false).unwrap();
        assert_eq!(g.shell_band(1.0 / 3.0, 0.1), vec![0, 1, 2, 3]);
        assert_eq!(g.shell_band(0.5, 0.5).len(), 8);
        assert_eq!(g.ball_prefix(0.4), vec![0, 1, 2, 3]);

        let g9 = build_grid(2, 9, 8, false).unwrap();
        let band = g9.shell_band(0.5, 0.06);
        assert_eq!(band.len(), 8);
        assert!(band.iter().all(|&i| (g9.point_radius(i) - 0.5).abs() < 1e-15));
        // Radii ≤ 0.55 are 0.1..0.5, five shells of eight.
        assert_eq!(g9.ball_prefix(0.55).len(), 40);

        let go = build_grid(2, 2, 4, true).unwrap();
        assert_eq!(go.ball_prefix(1.0).len(), 9);
    }

    #[test]
    fn band_excludes_lower_endpoint() {
        let g = build_grid(2, 3, 2, false).unwrap();
        // Radii 0.25, 0.5, 0.75; band (0.25, 0.75] holds the outer two shells.
        assert_eq!(g.shell_band(0.5, 0.25), vec![2, 3, 4, 5]);
    }

    #[test]
    fn default_shape_sizes() {
        assert_eq!(default_shape(400), (20, 20, false));
        assert_eq!(default_shape(2000), (44, 45, true));
        assert_eq!(default_shape(1200), (34, 35, true));
        let g = BallGrid::for_sample_size(2, 10).unwrap();
        assert_eq!((g.n_r(), g.n_s(), g.n_0()), (3, 3, 1));
        assert_eq!(g.len(), 10);
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(build_grid(0, 1, 1, false).is_err());
        assert!(build_grid(2, 0, 1, false).is_err());
        assert!(build_grid(2, 1, 0, false).is_err());
    }
}
