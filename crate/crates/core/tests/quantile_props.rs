use msd::ballgrid::{build_grid, BallGrid};
use msd::quantile::{fit_quantile_map, QuantileMap, Sample};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_sample(n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sample::new(Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng))).unwrap()
}

fn rotate(rows: &Array2<f64>, angle: f64) -> Array2<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    let mut out = rows.clone();
    for mut r in out.rows_mut() {
        let (x, y) = (r[0], r[1]);
        r[0] = c * x - s * y;
        r[1] = s * x + c * y;
    }
    out
}

fn sup_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

fn worst_ray_violation(map: &QuantileMap) -> f64 {
    let g = &map.grid;
    let mut worst = f64::INFINITY;
    for k in 0..g.n_s() {
        let u = g.directions().row(k);
        for j1 in 0..g.n_r() {
            for j2 in j1 + 1..g.n_r() {
                let a = map.images.row(g.index(j1, k));
                let b = map.images.row(g.index(j2, k));
                let inner = (b[0] - a[0]) * u[0] + (b[1] - a[1]) * u[1];
                worst = worst.min(inner);
            }
        }
    }
    worst
}

#[test]
fn images_are_monotone_along_rays() {
    for seed in 0..3 {
        let x = normal_sample(500, seed);
        let grid = BallGrid::for_sample_size(2, 500).unwrap();
        for eps in [0.05, 0.2] {
            let map = fit_quantile_map(&x, &grid, eps).unwrap();
            let worst = worst_ray_violation(&map);
            assert!(worst >= -0.05, "seed {seed} eps {eps}: {worst}");
        }
    }
}

#[test]
fn entropic_images_approach_exact_images() {
    let x = normal_sample(200, 11);
    let grid = build_grid(2, 10, 20, false).unwrap();
    let exact = fit_quantile_map(&x, &grid, 0.0).unwrap();
    let dist: Vec<f64> = [0.5, 0.2, 0.05]
        .iter()
        .map(|&e| sup_distance(&fit_quantile_map(&x, &grid, e).unwrap().images, &exact.images))
        .collect();
    assert!(dist[1] <= dist[0] + 1e-3, "{dist:?}");
    assert!(dist[2] <= dist[1] + 1e-3, "{dist:?}");
}

// A rotation by a multiple of 2π/n_s maps the planar grid onto itself, so the fitted map
// commutes with it.
#[test]
fn rotation_equivariance() {
    let n_s = 10;
    let grid = build_grid(2, 10, n_s, false).unwrap();
    let x = normal_sample(100, 5);
    for k in [1usize, 3, 7] {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / n_s as f64;
        let rx = Sample::new(rotate(x.observations(), angle)).unwrap();
        for (eps, tol) in [(0.0, 1e-6), (0.2, 0.05)] {
            let base = fit_quantile_map(&x, &grid, eps).unwrap();
            let turned = fit_quantile_map(&rx, &grid, eps).unwrap();
            // image of the grid point rotated by `angle` on the same shell
            let mut expect = Array2::zeros(base.images.raw_dim());
            for j in 0..grid.n_r() {
                for d in 0..n_s {
                    let src = grid.index(j, d);
                    let dst = grid.index(j, (d + k) % n_s);
                    expect.row_mut(dst).assign(&rotate(&base.images.select(ndarray::Axis(0), &[src]), angle).row(0));
                }
            }
            let err = sup_distance(&turned.images, &expect);
            assert!(err <= tol, "k {k} eps {eps}: {err:e}");
        }
    }
}

fn kolmogorov_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

// The analytic center-outward map of N(0, I₂) toward the spherical uniform law sends x to
// radius 1 − exp(−‖x‖²/2), which must be uniform on [0, 1).
#[test]
fn analytic_radial_parts_are_uniform() {
    let x = normal_sample(2000, 3);
    let radial: Vec<f64> = x
        .observations()
        .rows()
        .into_iter()
        .map(|r| 1.0 - (-(r[0] * r[0] + r[1] * r[1]) / 2.0).exp())
        .collect();
    let ks = kolmogorov_uniform(radial);
    assert!(ks <= 0.05, "Kolmogorov distance {ks}");
}
