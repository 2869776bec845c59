use std::fmt;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use msd::contribution::{first_order_curve, second_order_curve, CurveKind, RhoFn};
use msd::io::{self, curve_csv, map_csv, matrix_csv, sample_csv};
use msd::quantile::{fit_quantile_map, Sample};
use msd::sdtest::{run_test, Statistic, TestConfig, TestResult};
use msd::simulate::{
    bundled_config, bundled_names, named_distribution, run_experiment, sample, DistributionSpec,
    ExperimentSpec,
};
use msd::timeseries::{fit_var, select_order, split_residuals};
use msd::transforms::{apply_map, mix_background, symmetrize, MixtureSpec, MonotoneMap};
use msd::{BallGrid, Error};

use crate::manifest::RunManifest;
use crate::{CurvesArgs, FitArgs, SimulateArgs, TestArgs, TransformArgs, VarArgs};

/// Error with a message class: file-not-found, io, parse, dimension, config or runtime.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.class, self.message)
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        class: "config",
        message: message.into(),
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => "file-not-found",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
            Error::DimensionMismatch { .. } => "dimension",
            Error::InvalidParameter(_)
            | Error::InvalidWeights(_)
            | Error::Precondition(_)
            | Error::Unsupported(_)
            | Error::SizeCap { .. } => "config",
            _ => "runtime",
        };
        CliError {
            class,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reads a file, recording its digest.
fn read_input(path: &Path, manifest: &mut RunManifest) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;
    manifest.add_input(path, &bytes);
    String::from_utf8(bytes).map_err(|_| CliError {
        class: "parse",
        message: format!("{} is not UTF-8 text", path.display()),
    })
}

fn read_sample(path: &Path, weighted: bool, manifest: &mut RunManifest) -> CliResult<Sample> {
    let text = read_input(path, manifest)?;
    io::parse_sample(&text, weighted).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn parse_tau(s: &str) -> CliResult<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse()
            .map_err(|_| config_error(format!("tau must be a number or 'inf', got '{s}'"))),
    }
}

fn parse_levels(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| config_error(format!("bad level '{p}'")))
        })
        .collect()
}

fn order_kind(order: u8) -> CliResult<CurveKind> {
    match order {
        1 => Ok(CurveKind::First),
        2 => Ok(CurveKind::Second),
        o => Err(config_error(format!("order must be 1 or 2, got {o}"))),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("default".into(), |v| v.to_string())
}

fn record_fit(m: &mut RunManifest, fit: &FitArgs, rho: &RhoFn) {
    m.set("epsilon", fit.epsilon);
    m.set("bandwidth", fmt_opt(fit.bandwidth));
    m.set(
        "grid",
        match (fit.nr, fit.ns) {
            (Some(r), Some(s)) => format!("{r}x{s}"),
            _ => "default".into(),
        },
    );
    m.set("rho", rho);
    m.set("levels", fit.levels.clone().unwrap_or_else(|| "default".into()));
    m.set("weighted", fit.weighted);
}

fn elapsed(start: Instant) {
    eprintln!("elapsed: {:.2} s", start.elapsed().as_secs_f64());
}

pub fn test(a: &TestArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    let mut m = RunManifest::new("test", a.seed);
    let x = read_sample(&a.x, a.fit.weighted, &mut m)?;
    let y = read_sample(&a.y, a.fit.weighted, &mut m)?;
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        }
        .into());
    }
    let rho: RhoFn = a.fit.rho.parse()?;
    let config = TestConfig {
        order: order_kind(a.order)?,
        statistic: a.stat.parse::<Statistic>()?,
        alpha: a.alpha,
        tau: parse_tau(&a.tau)?,
        nu: a.nu,
        bootstrap: a.bootstrap,
        epsilon: a.fit.epsilon,
        bandwidth: a.fit.bandwidth,
        levels: a.fit.levels.as_deref().map(parse_levels).transpose()?,
        eta: a.eta_floor,
        seed: a.seed,
        rho: rho.clone(),
        grid_shape: a.fit.nr.zip(a.fit.ns),
        ..TestConfig::default()
    };
    config.validate()?;
    m.set("order", a.order);
    m.set("stat", config.statistic);
    m.set("alpha", config.alpha);
    m.set("tau", &a.tau);
    m.set("nu", config.nu);
    m.set("eta_floor", config.eta);
    m.set("bootstrap", config.bootstrap);
    record_fit(&mut m, &a.fit, &rho);
    m.set("sinkhorn_tol", config.sinkhorn.tol);
    m.set("sinkhorn_max_iter", config.sinkhorn.max_iter);

    let report_path = a.out.join("report.txt");
    match run_test(&x, &y, &config) {
        Ok(result) => {
            let report = format!("{}{}", m.render(), result.report());
            write(&report_path, &report)?;
            write(&a.out.join("curve_x.csv"), &curve_csv(&result.curve_x))?;
            write(&a.out.join("curve_y.csv"), &curve_csv(&result.curve_y))?;
            write(&a.out.join("tprocess.csv"), &tprocess_csv(&result))?;
            print!("{}", result.report());
            elapsed(start);
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::EmptyContactSet) => {
            let report = format!("{}status = infeasible\nreason = empty contact set\n", m.render());
            write(&report_path, &report)?;
            eprintln!("infeasible: the estimated contact set is empty");
            elapsed(start);
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn tprocess_csv(r: &TestResult) -> String {
    let scale = r.t_process.r_n.sqrt();
    let mut s = String::from("p,t_hat,scaled,variance,contact\n");
    for (i, p) in r.t_process.levels.iter().enumerate() {
        let v = r.t_process.values[i];
        s += &format!(
            "{p:?},{v:?},{:?},{:?},{}\n",
            scale * v,
            r.contact.variances[i],
            u8::from(r.contact.mask[i])
        );
    }
    s
}

pub fn curves(a: &CurvesArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    let mut m = RunManifest::new("curves", 0);
    let s = read_sample(&a.sample, a.fit.weighted, &mut m)?;
    let rho: RhoFn = a.fit.rho.parse()?;
    record_fit(&mut m, &a.fit, &rho);
    let grid = match (a.fit.nr, a.fit.ns) {
        (Some(r), Some(n)) => msd::ballgrid::build_grid(s.dim(), r, n, false)?,
        _ => BallGrid::for_sample_size(s.dim(), s.len())?,
    };
    let qmap = fit_quantile_map(&s, &grid, a.fit.epsilon)?;
    let levels = match &a.fit.levels {
        Some(l) => parse_levels(l)?,
        None => grid.radii().to_vec(),
    };
    let b = a.fit.bandwidth.unwrap_or_else(|| grid.shell_spacing());
    let first = first_order_curve(&qmap, &rho, &levels, b)?;
    let second = second_order_curve(&qmap, &rho, &levels)?;
    write(&a.out.join("curve_first.csv"), &curve_csv(&first))?;
    write(&a.out.join("curve_second.csv"), &curve_csv(&second))?;
    write(&a.out.join("map.csv"), &map_csv(&qmap))?;
    let mut report = m.render();
    report += &format!("N = {}\ngrid_points = {}\nb = {b}\n", s.len(), grid.len());
    if let Some(r) = &qmap.report {
        report += &format!(
            "sinkhorn_iterations = {}\nsinkhorn_marginal_error = {:e}\n",
            r.iterations, r.marginal_error
        );
    }
    if !first.dropped.is_empty() {
        report += &format!("dropped_levels = {:?}\n", first.dropped);
    }
    write(&a.out.join("report.txt"), &report)?;
    print!("{report}");
    elapsed(start);
    Ok(ExitCode::SUCCESS)
}

fn load_distribution(name: &str, m: &mut RunManifest) -> CliResult<DistributionSpec> {
    if let Some(spec) = named_distribution(name) {
        return Ok(spec);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(config_error(format!(
            "'{name}' is neither a named law nor a distribution file"
        )));
    }
    let text = read_input(path, m)?;
    toml::from_str(&text).map_err(|e| CliError {
        class: "parse",
        message: format!("{name}: {e}"),
    })
}

pub fn simulate(a: &SimulateArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    if a.list {
        println!("bundled configs: {}", bundled_names().join(", "));
        println!("named laws: normal-pair, clayton-pair, stretched-<t>, normal-<d>");
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(draw) = &a.draw {
        let seed = a.seed.unwrap_or(0);
        let mut m = RunManifest::new("simulate", seed);
        let spec = load_distribution(draw, &mut m)?;
        let s = sample(&spec, a.n, seed)?;
        write(&a.out, &sample_csv(&s))?;
        eprintln!("wrote {} draws of '{draw}' to {}", a.n, a.out.display());
        return Ok(ExitCode::SUCCESS);
    }
    let name = a.config.as_deref().expect("clap requires a config");
    let mut m = RunManifest::new("simulate", 0);
    let text = if Path::new(name).exists() {
        read_input(Path::new(name), &mut m)?
    } else if let Some(t) = bundled_config(name) {
        m.set("bundled", name);
        t.to_string()
    } else {
        return Err(config_error(format!(
            "'{name}' is neither a config file nor a bundled config ({})",
            bundled_names().join(", ")
        )));
    };
    let mut spec = ExperimentSpec::from_toml(&text)?;
    if a.full {
        spec = spec.at_full_scale();
    }
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(b) = a.bootstrap {
        spec.bootstrap = b;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    m.seed = spec.seed;
    m.set("full", a.full);
    m.set("n1", spec.n1);
    m.set("n2", spec.n2);
    m.set("reps", spec.reps);
    m.set("bootstrap", spec.bootstrap);
    m.set("epsilon", spec.epsilon);
    m.set("nu", spec.nu);
    m.set("eta_floor", spec.eta);
    let table = run_experiment(&spec)?;
    let text = table.to_text();
    write(&a.out.join(format!("{}.csv", spec.name)), &table.to_csv())?;
    write(
        &a.out.join(format!("{}.txt", spec.name)),
        &format!("{}{text}", m.render()),
    )?;
    print!("{text}");
    elapsed(start);
    Ok(ExitCode::SUCCESS)
}

pub fn var_residuals(a: &VarArgs) -> CliResult<ExitCode> {
    let mut m = RunManifest::new("var-residuals", 0);
    let text = read_input(&a.series, &mut m)?;
    let series = io::parse_series(&text)?;
    let date = NaiveDate::parse_from_str(&a.break_date, "%Y-%m-%d")
        .map_err(|_| config_error(format!("bad break date '{}'", a.break_date)))?;
    if series.dates.is_none() {
        return Err(config_error("the series has no date column"));
    }
    let row = series
        .position(date)
        .ok_or_else(|| config_error(format!("break date {date} is not in the series")))?;
    let p = select_order(&series.values, a.p_max)?;
    let fit = fit_var(&series.values, p)?;
    // Residual r corresponds to series row r + p.
    let cut = if a.break_after { row } else { row + 1 };
    if cut <= p {
        return Err(config_error(format!(
            "break date {date} leaves no residuals before the break after {p} lags"
        )));
    }
    let split = split_residuals(&fit, cut - p, a.window)?;
    m.set("break", date);
    m.set("break_side", if a.break_after { "after" } else { "before" });
    m.set("p_max", a.p_max);
    m.set("window", a.window.map_or("none".into(), |w| w.to_string()));
    write(&a.out.join("residuals_before.csv"), &matrix_csv(&split.before, "x"))?;
    write(&a.out.join("residuals_after.csv"), &matrix_csv(&split.after, "x"))?;
    let mut summary = m.render();
    summary += &format!("selected_order = {p}\naic = {}\n", fit.aic);
    summary += &format!("intercept = {:?}\n", fit.intercept);
    for (l, phi) in fit.coefficients.iter().enumerate() {
        let rows: Vec<String> = phi.rows().into_iter().map(|r| format!("{:?}", r.to_vec())).collect();
        summary += &format!("phi{} = [{}]\n", l + 1, rows.join(", "));
    }
    let (nb, na) = split.sizes();
    summary += &format!("residuals_before = {nb}\nresiduals_after = {na}\n");
    write(&a.out.join("fit_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn parse_mix(spec: &str) -> Option<CliResult<f64>> {
    let inner = spec.strip_prefix("mix(")?.strip_suffix(')')?;
    let value = inner.trim().strip_prefix("eta")?.trim_start().strip_prefix('=')?;
    Some(
        value
            .trim()
            .parse()
            .map_err(|_| CliError {
                class: "parse",
                message: format!("bad eta in '{spec}'"),
            }),
    )
}

pub fn transform(a: &TransformArgs) -> CliResult<ExitCode> {
    let mut m = RunManifest::new("transform", a.seed);
    let s = read_sample(&a.sample, a.weighted, &mut m)?;
    let spec = a.spec.trim();
    let out = if spec == "symmetrize" {
        symmetrize(&s, a.seed)?
    } else if let Some(eta) = parse_mix(spec) {
        let (mixed, replaced) = mix_background(&s, &MixtureSpec::new(eta?, a.seed)?)?;
        eprintln!("replaced {} of {} observations", replaced.len(), s.len());
        mixed
    } else {
        let map: MonotoneMap = spec.parse()?;
        let (mapped, warnings) = apply_map(&map, &s)?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        mapped
    };
    write(&a.out, &sample_csv(&out))?;
    Ok(ExitCode::SUCCESS)
}
