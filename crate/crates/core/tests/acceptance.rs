//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL ...` line to stderr
//! (bypassing the test harness capture) and then asserts.
//!
//! Run with `cargo test --release -p msd --test acceptance`. Criteria 5 to 7 run Monte Carlo
//! experiments at desk scale and take several minutes each on one core.

use std::io::Write as _;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use msd::ballgrid::build_grid;
use msd::contribution::{
    analytic_normal_curve_for, default_bandwidth, first_order_curve, second_order_curve,
    CurveKind, ReferenceLaw, RhoFn,
};
use msd::quantile::{fit_quantile_map, QuantileMap, Sample};
use msd::rng::derive_seed;
use msd::sdtest::{
    derivative_statistic, statistic_I, statistic_S, ContactSet, Decision, Statistic, TestConfig,
    TwoSampleFit,
};
use msd::simulate::{bundled_config, run_experiment, sample, DistributionSpec, ExperimentSpec, Sweep};
use msd::timeseries::{fit_var, select_order};
use msd::transport::{
    cost_matrix, plan_from_potentials, sinkhorn, solve_exact, DiscreteMeasure, SinkhornConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Tolerances and budgets, as stated by the acceptance criteria.
mod tol {
    pub const C1_EPSILON: f64 = 1e-3;
    pub const C1_PLAN: f64 = 1e-2;
    pub const C1_REL_COST: f64 = 0.01;
    pub const C1_SECONDS: f64 = 10.0;
    pub const C2_MARGINAL: f64 = 1e-8;
    pub const C3_FIRST: f64 = 0.15;
    pub const C3_SECOND_AT_ONE: f64 = 0.1;
    pub const C3_SECONDS: f64 = 60.0;
    pub const C4_VIOLATION_FRACTION: f64 = 0.01;
    pub const C4_SLACK: f64 = 0.05;
    pub const C5_RATE: (f64, f64) = (0.03, 0.20);
    pub const C6_GAP: f64 = 0.2;
    pub const C7_P: f64 = 0.1;
    pub const C7_KEEP_SHARE: f64 = 0.8;
    pub const C7_REJECT_SHARE: f64 = 0.5;
    pub const C9_INTEGRAL: f64 = 1e-3;
    pub const C10_SELECT_SHARE: f64 = 0.95;
    pub const C10_COEF: f64 = 0.05;
}

/// Serializes the criteria so that runtime budgets are measured without interference.
fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn normal_sample(n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sample::new(Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng))).unwrap()
}

#[test]
fn criterion_01_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst_plan, mut worst_cost, mut converged) = (0.0f64, 0.0f64, 0);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=20);
        let mut pts = || Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
        let a = DiscreteMeasure::uniform(pts()).unwrap();
        let b = DiscreteMeasure::uniform(pts()).unwrap();
        let exact = solve_exact(&a, &b).unwrap();
        let (pot, rep) = sinkhorn(&a, &b, tol::C1_EPSILON, &SinkhornConfig::default(), None).unwrap();
        converged += usize::from(rep.converged);
        let plan = plan_from_potentials(&pot, &a, &b).unwrap();
        let c = cost_matrix(&a, &b).unwrap();
        let gap = plan
            .coupling
            .iter()
            .zip(exact.coupling.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        worst_plan = worst_plan.max(gap);
        let ce = exact.cost(&c);
        worst_cost = worst_cost.max((plan.cost(&c) - ce).abs() / ce);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_plan <= tol::C1_PLAN && worst_cost <= tol::C1_REL_COST && secs < tol::C1_SECONDS;
    report(
        1,
        pass,
        &format!(
            "converged {converged}/50, max plan gap {worst_plan:.3e} (<= {:e}), max relative cost gap {worst_cost:.3e} (<= {}), {secs:.2}s (< {}s)",
            tol::C1_PLAN,
            tol::C1_REL_COST,
            tol::C1_SECONDS
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_marginal_feasibility() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut runs, mut converged, mut worst) = (0, 0, 0.0f64);
    for eps in [0.01, 0.05, 0.2, 1.0] {
        for _ in 0..100 {
            let n = rng.gen_range(2..=30);
            let m = rng.gen_range(2..=30);
            let mut measure = |k: usize| {
                let pts = Array2::from_shape_fn((k, 2), |_| rng.gen_range(-1.0..1.0));
                let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                DiscreteMeasure::new(pts, w.into_iter().map(|v| v / s).collect()).unwrap()
            };
            let (a, b) = (measure(n), measure(m));
            let (pot, rep) = sinkhorn(&a, &b, eps, &SinkhornConfig::default(), None).unwrap();
            runs += 1;
            if rep.converged {
                converged += 1;
                let plan = plan_from_potentials(&pot, &a, &b).unwrap();
                worst = worst.max(plan.marginal_error(a.weights(), b.weights()));
            }
        }
    }
    let pass = worst <= tol::C2_MARGINAL;
    report(
        2,
        pass,
        &format!("{converged}/{runs} runs converged, max L1 marginal violation {worst:.3e} (<= {:e})", tol::C2_MARGINAL),
    );
    assert!(pass);
}

/// The N = 2000 fit shared by criteria 3 and 4.
fn oracle_fit() -> &'static (QuantileMap, Duration) {
    static FIT: OnceLock<(QuantileMap, Duration)> = OnceLock::new();
    FIT.get_or_init(|| {
        let start = Instant::now();
        let x = normal_sample(2000, 2000);
        let grid = build_grid(2, 40, 50, false).unwrap();
        let map = fit_quantile_map(&x, &grid, 0.05).unwrap();
        (map, start.elapsed())
    })
}

#[test]
fn criterion_03_analytic_quantile_oracle() {
    let _g = serial();
    let start = Instant::now();
    let (map, _) = oracle_fit();
    let levels: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let first = first_order_curve(map, &RhoFn::Norm, &levels, default_bandwidth(map)).unwrap();
    let second = second_order_curve(map, &RhoFn::Norm, &[1.0]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let sup_against = |law| {
        let truth = analytic_normal_curve_for(law, 1.0, &first.levels, CurveKind::First).unwrap();
        first.values.iter().zip(&truth.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    // the stated closed form √(−2 ln(1 − p²))
    let err_first = sup_against(ReferenceLaw::DiskArea);
    let err_spherical = sup_against(ReferenceLaw::SphericalUniform);
    let err_second = (second.values[0] - (std::f64::consts::PI / 2.0).sqrt()).abs();
    let pass = first.levels.len() == 9
        && err_first <= tol::C3_FIRST
        && err_second <= tol::C3_SECOND_AT_ONE
        && secs < tol::C3_SECONDS;
    report(
        3,
        pass,
        &format!(
            "max |M(p) - sqrt(-2 ln(1-p^2))| = {err_first:.4} (<= {}), |MM(1) - sqrt(pi/2)| = {err_second:.4} (<= {}), {secs:.1}s (< {}s); against the spherical-uniform law sqrt(-2 ln(1-p)) the first-order error is {err_spherical:.4}",
            tol::C3_FIRST,
            tol::C3_SECOND_AT_ONE,
            tol::C3_SECONDS
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_nestedness() {
    let _g = serial();
    let (map, _) = oracle_fit();
    let g = &map.grid;
    let (mut pairs, mut violations) = (0usize, 0usize);
    for k in 0..g.n_s() {
        let u = g.directions().row(k);
        for j1 in 0..g.n_r() {
            let a = map.images.row(g.index(j1, k));
            for j2 in j1 + 1..g.n_r() {
                let b = map.images.row(g.index(j2, k));
                let inner = (b[0] - a[0]) * u[0] + (b[1] - a[1]) * u[1];
                pairs += 1;
                violations += usize::from(inner < -tol::C4_SLACK);
            }
        }
    }
    let share = violations as f64 / pairs as f64;
    let pass = share <= tol::C4_VIOLATION_FRACTION;
    report(
        4,
        pass,
        &format!("{violations}/{pairs} same-ray pairs below -{} ({share:.4} <= {})", tol::C4_SLACK, tol::C4_VIOLATION_FRACTION),
    );
    assert!(pass);
}

fn desk_experiment(config: &str, sweep: Vec<f64>, order: u8, statistic: &str, tau: f64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::from_toml(bundled_config(config).unwrap()).unwrap();
    let name = spec.sweep.as_ref().unwrap().name.clone();
    spec.sweep = Some(Sweep { name, values: sweep });
    spec.orders = vec![order];
    spec.statistics = vec![statistic.into()];
    spec.taus = vec![tau];
    spec.alphas = vec![0.1];
    spec.n1 = 400;
    spec.n2 = 400;
    spec.bootstrap = 200;
    spec.reps = 100;
    spec
}

#[test]
fn criterion_05_size_at_desk_scale() {
    let _g = serial();
    let start = Instant::now();
    let spec = desk_experiment("rotated_first_desk", vec![4.0], 1, "S", f64::INFINITY);
    let table = run_experiment(&spec).unwrap();
    let cell = &table.cells[0];
    let rate = cell.rate();
    let pass = rate >= tol::C5_RATE.0 && rate <= tol::C5_RATE.1;
    report(
        5,
        pass,
        &format!(
            "rejection rate {rate:.3} in [{}, {}] ({} of {} completed, {} failed, {} infeasible; reference 0.11), {:.0}s",
            tol::C5_RATE.0,
            tol::C5_RATE.1,
            cell.rejections,
            cell.completed,
            cell.failed,
            cell.infeasible,
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_power_ordering() {
    let _g = serial();
    let start = Instant::now();
    let spec = desk_experiment("mixture_desk", vec![1.0, 3.0], 2, "I", 2.0);
    let table = run_experiment(&spec).unwrap();
    let (low, high) = (table.cells[0].rate(), table.cells[1].rate());
    let pass = high - low >= tol::C6_GAP;
    report(
        6,
        pass,
        &format!(
            "rejection at beta=3 {high:.3} minus beta=1 {low:.3} = {:.3} (>= {}), {:.0}s",
            high - low,
            tol::C6_GAP,
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

/// p-values of H0: X_t dominates N(0, diag(4, 1)) at first order, for τ = 2 and τ = ∞.
fn stretched_p_values(t: f64, seed: u64) -> (f64, f64) {
    let x = sample(&DistributionSpec::Stretched { t }, 400, derive_seed(seed, 1, 0)).unwrap();
    let y_spec = DistributionSpec::Multinormal {
        mean: vec![0.0, 0.0],
        cov: vec![vec![4.0, 0.0], vec![0.0, 1.0]],
    };
    let y = sample(&y_spec, 400, derive_seed(seed, 2, 0)).unwrap();
    let config = TestConfig {
        order: CurveKind::First,
        statistic: Statistic::S,
        alpha: tol::C7_P,
        tau: 2.0,
        bootstrap: 200,
        seed,
        ..TestConfig::default()
    };
    let fit = TwoSampleFit::new(&x, &y, &config).unwrap();
    let draws = fit.bootstrap(seed, 200).unwrap();
    let mut decision = Decision::from(&config);
    let p2 = fit.evaluate(&draws, &decision).map(|r| r.p_value).unwrap_or(f64::NAN);
    decision.tau = f64::INFINITY;
    let pinf = fit.evaluate(&draws, &decision).unwrap().p_value;
    (p2, pinf)
}

#[test]
fn criterion_07_dominance_direction() {
    let _g = serial();
    let start = Instant::now();
    let keep: Vec<(f64, f64)> = (0..20).map(|s| stretched_p_values(3.0, s)).collect();
    let flip: Vec<(f64, f64)> = (0..20).map(|s| stretched_p_values(2.8, 100 + s)).collect();
    // an empty contact set (NaN) counts as no rejection
    let share = |v: &[(f64, f64)], f: &dyn Fn(f64) -> bool| {
        v.iter().filter(|p| f(p.0)).count() as f64 / v.len() as f64
    };
    let keep_share = share(&keep, &|p| !(p <= tol::C7_P));
    let flip_share = share(&flip, &|p| p <= tol::C7_P);
    let inf_keep = keep.iter().filter(|p| p.1 > tol::C7_P).count();
    let inf_flip = flip.iter().filter(|p| p.1 <= tol::C7_P).count();
    let pass = keep_share >= tol::C7_KEEP_SHARE && flip_share >= tol::C7_REJECT_SHARE;
    report(
        7,
        pass,
        &format!(
            "H0: X_t dominates Y, tau=2: t=3 p > {p} in {keep_share:.2} of seeds (>= {}), t=2.8 p <= {p} in {flip_share:.2} (>= {}); tau=inf: {inf_keep}/20 and {inf_flip}/20, {:.0}s",
            tol::C7_KEEP_SHARE,
            tol::C7_REJECT_SHARE,
            start.elapsed().as_secs_f64(),
            p = tol::C7_P,
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_bootstrap_degenerate_cases() {
    let _g = serial();
    let x = normal_sample(150, 8);
    let y = normal_sample(150, 9);
    let config = TestConfig { bootstrap: 50, ..TestConfig::default() };
    let fit = TwoSampleFit::new(&x, &y, &config).unwrap();

    let ones = vec![1u32; 150];
    let procs = fit.process_with_counts(&ones, &ones).unwrap().unwrap();
    let unit_exact = procs[0] == fit.t_hat(CurveKind::First) && procs[1] == fit.t_hat(CurveKind::Second);

    let same = TwoSampleFit::new(&x, &x, &config).unwrap();
    let same_draws = same.bootstrap(3, 50).unwrap();
    let mut never_rejects = true;
    for order in [CurveKind::First, CurveKind::Second] {
        for statistic in [Statistic::S, Statistic::I] {
            for tau in [1.0, 2.0, f64::INFINITY] {
                let d = Decision { order, statistic, alpha: 0.1, tau, nu: 0.001, eta: 1e-6 };
                if let Ok(r) = same.evaluate(&same_draws, &d) {
                    never_rejects &= !r.reject && r.statistic_value == 0.0;
                }
            }
        }
    }

    let draws = fit.bootstrap(5, 50).unwrap();
    let mut same_values = true;
    for (k, order) in [CurveKind::First, CurveKind::Second].into_iter().enumerate() {
        let levels = fit.levels(order).to_vec();
        let full = ContactSet::full(&levels, vec![1.0; levels.len()]);
        for h in &draws.deviations[k] {
            same_values &= derivative_statistic(Statistic::S, &full, h, &levels).unwrap() == statistic_S(h);
            same_values &= derivative_statistic(Statistic::I, &full, h, &levels).unwrap() == statistic_I(h, &levels);
        }
    }
    let pass = unit_exact && never_rejects && same_values;
    report(
        8,
        pass,
        &format!("unit weights reproduce T exactly: {unit_exact}; identical samples never reject with eta > 0: {never_rejects}; tau=inf derivative equals plain statistic on every draw: {same_values}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_statistic_functionals() {
    let _g = serial();
    let tenths: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let mut ok = Vec::new();
    ok.push(statistic_S(&tenths) == 1.0);
    ok.push(statistic_S(&[-0.3; 10]) == -0.3);
    ok.push(statistic_S(&[-1.0, 0.2, -0.5]) == 0.2);
    ok.push(statistic_I(&[-0.2, -1.0, 0.0, -3.0], &[0.2, 0.4, 0.6, 0.8]) == 0.0);
    // h ≡ 1 integrates over [first level, 1]
    ok.push((statistic_I(&[1.0; 10], &tenths) - 0.9).abs() < 1e-12);
    let dense: Vec<f64> = (1..=200).map(|k| k as f64 / 200.0).collect();
    let h: Vec<f64> = dense.iter().map(|p| p - 0.5).collect();
    let err = (statistic_I(&h, &dense) - 0.125).abs();
    let exact = ok.iter().all(|b| *b);
    let pass = exact && err <= tol::C9_INTEGRAL;
    report(
        9,
        pass,
        &format!("{}/{} unit examples exact; trapezoid error for p - 1/2 at 200 levels {err:.2e} (<= {:e})", ok.iter().filter(|b| **b).count(), ok.len(), tol::C9_INTEGRAL),
    );
    assert!(pass);
}

/// Bivariate VAR(2) with strong lags.
const VAR_A1: [[f64; 2]; 2] = [[0.5, 0.1], [0.0, 0.4]];
const VAR_A2: [[f64; 2]; 2] = [[-0.3, 0.0], [0.1, -0.25]];

fn simulate_var2(t: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = 200;
    let mut y = Array2::<f64>::zeros((t + burn, 2));
    for s in 2..t + burn {
        for i in 0..2 {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[[s, i]] = (0..2)
                .map(|j| VAR_A1[i][j] * y[[s - 1, j]] + VAR_A2[i][j] * y[[s - 2, j]])
                .sum::<f64>()
                + e;
        }
    }
    y.slice(ndarray::s![burn.., ..]).to_owned()
}

#[test]
fn criterion_10_var_recovery() {
    let _g = serial();
    let (mut selected, mut worst) = (0, 0.0f64);
    for seed in 0..40 {
        let y = simulate_var2(5000, seed);
        selected += usize::from(select_order(&y, 4).unwrap() == 2);
        let fit = fit_var(&y, 2).unwrap();
        for (lag, truth) in [VAR_A1, VAR_A2].iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max((fit.coefficients[lag][[i, j]] - truth[i][j]).abs());
                }
            }
        }
    }
    let share = selected as f64 / 40.0;
    let pass = share >= tol::C10_SELECT_SHARE && worst <= tol::C10_COEF;
    report(
        10,
        pass,
        &format!("AIC picks p=2 in {selected}/40 seeds ({share:.3} >= {}), max coefficient error {worst:.4} (<= {})", tol::C10_SELECT_SHARE, tol::C10_COEF),
    );
    assert!(pass);
}

#[test]
fn criterion_11_full_scale_configs_exist() {
    let _g = serial();
    let mut ok = true;
    let mut names = Vec::new();
    for name in msd::simulate::bundled_names() {
        let spec = ExperimentSpec::from_toml(bundled_config(name).unwrap()).unwrap();
        let full = spec.at_full_scale();
        ok &= full.n1 > spec.n1 && full.reps >= spec.reps && full.bootstrap >= spec.bootstrap;
        names.push(name);
    }
    report(
        11,
        ok,
        &format!("not an automated gate; full-scale overrides present for {} bundled configs ({})", names.len(), names.join(", ")),
    );
    assert!(ok);
}
