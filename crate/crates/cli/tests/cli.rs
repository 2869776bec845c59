use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msd"))
        .args(args)
        .env("MSD_WORKERS", "1")
        .output()
        .expect("run msd")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn draw(dir: &Path, law: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let out = dir.join(format!("{law}-{seed}.csv"));
    let o = msd(&["simulate", "--draw", law, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn report_value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .to_string()
}

#[test]
fn same_file_twice_gives_zero_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let x = draw(dir.path(), "normal-2", 120, 1);
    let out = dir.path().join("run");
    let o = msd(&["test", p(&x), p(&x), "--bootstrap", "30", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(report_value(&report, "statistic_value"), "0");
    assert_eq!(report_value(&report, "reject"), "false");
    assert!(report.contains("manifest.input"));
    assert!(out.join("curve_x.csv").exists() && out.join("curve_y.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let x = draw(dir.path(), "normal-2", 100, 1);
    let y = draw(dir.path(), "normal-2", 100, 2);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = msd(&["test", p(&x), p(&y), "--bootstrap", "25", "--seed", "9", "--order", "2", "--stat", "I", "--out", p(&out)]);
        assert!(o.status.success());
        (
            fs::read(out.join("report.txt")).unwrap(),
            fs::read(out.join("curve_y.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn missing_file_is_exit_1() {
    let o = msd(&["test", "/nonexistent/a.csv", "/nonexistent/b.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[file-not-found]"));
}

#[test]
fn dimension_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let x = draw(dir.path(), "normal-2", 50, 1);
    let y = draw(dir.path(), "normal-3", 50, 1);
    let o = msd(&["test", p(&x), p(&y), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[dimension]"));
}

#[test]
fn curves_and_capped_rho() {
    let dir = tempfile::tempdir().unwrap();
    let x = draw(dir.path(), "normal-2", 300, 4);
    let out = dir.path().join("c");
    let o = msd(&["curves", p(&x), "--rho", "capped(0.01)", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("curve_first.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|v| (v - 0.01).abs() < 1e-3), "{values:?}");
    assert!(out.join("curve_second.csv").exists() && out.join("map.csv").exists());
}

#[test]
fn empty_input_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("empty.csv");
    fs::write(&f, "").unwrap();
    let o = msd(&["curves", p(&f), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[parse]"));
}

#[test]
fn simulate_single_rep_and_unknown_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(
        &cfg,
        r#"
name = "tiny"
n1 = 60
n2 = 60
reps = 1
bootstrap = 20
statistics = ["S"]
taus = [inf]
alphas = [0.1]
[x]
kind = "multinormal"
mean = [0, 0]
cov = [[1, 0], [0, 1]]
[y]
kind = "multinormal"
mean = [0, 0]
cov = [[1, 0], [0, 1]]
"#,
    )
    .unwrap();
    let o = msd(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("tiny.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let rate = row.split(',').nth(5).unwrap();
    assert!(rate == "0.0000" || rate == "1.0000", "{row}");

    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replacen("multinormal", "lognormal", 1)).unwrap();
    let o = msd(&["simulate", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bundled_configs_are_listed() {
    let o = msd(&["simulate", "--list"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("rotated_first_desk"));
}

#[test]
fn transforms() {
    let dir = tempfile::tempdir().unwrap();
    let zeros = dir.path().join("zeros.csv");
    fs::write(&zeros, "0,0\n0,0\n0,0\n").unwrap();
    let out = dir.path().join("sp.csv");
    let o = msd(&["transform", p(&zeros), "--spec", "softplus(a=1,b=0)", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ln2 = format!("{:?}", std::f64::consts::LN_2);
    for l in fs::read_to_string(&out).unwrap().lines().skip(1) {
        assert_eq!(l, format!("{ln2},{ln2}"));
    }

    let pos = dir.path().join("pos.csv");
    fs::write(&pos, "x1,x2\n1.0,2.0\n0.5,3.0\n").unwrap();
    let sym = dir.path().join("sym.csv");
    assert!(msd(&["transform", p(&pos), "--spec", "symmetrize", "--out", p(&sym)]).status.success());
    let text = fs::read_to_string(&sym).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,weight");
    assert_eq!(text.lines().count(), 1 + 8);

    let mixed = dir.path().join("mix.csv");
    assert!(msd(&["transform", p(&pos), "--spec", "mix(eta=0)", "--out", p(&mixed)]).status.success());
    assert_eq!(fs::read_to_string(&mixed).unwrap(), fs::read_to_string(&pos).unwrap());

    let o = msd(&["transform", p(&pos), "--spec", "cubic(a=1)", "--out", p(&mixed)]);
    assert_eq!(o.status.code(), Some(1));
}

fn var2_csv(path: &Path, t: usize, seed: u64) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (a1, a2) = ([[0.5, 0.1], [0.0, 0.4]], [[-0.3, 0.0], [0.1, -0.25]]);
    let mut y = vec![[0.0; 2]; t + 50];
    for s in 2..y.len() {
        for i in 0..2 {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[s][i] = (0..2).map(|k| a1[i][k] * y[s - 1][k] + a2[i][k] * y[s - 2][k]).sum::<f64>() + e;
        }
    }
    let start = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut text = String::from("date,a,b\n");
    for (k, row) in y[50..].iter().enumerate() {
        let d = start + chrono::Duration::days(k as i64);
        text += &format!("{d},{},{}\n", row[0], row[1]);
    }
    fs::write(path, text).unwrap();
}

#[test]
fn var_residuals_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    var2_csv(&series, 3000, 11);
    let out = dir.path().join("v");
    let o = msd(&["var-residuals", p(&series), "--break", "2019-01-01", "--window", "1200", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("fit_summary.txt")).unwrap();
    assert_eq!(report_value(&summary, "selected_order"), "2");
    for f in ["residuals_before.csv", "residuals_after.csv"] {
        let rows = fs::read_to_string(out.join(f)).unwrap().lines().count() - 1;
        assert_eq!(rows, 1200, "{f}");
    }
    let o = msd(&["var-residuals", p(&series), "--break", "2015-01-01", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = msd(&["var-residuals", p(&series), "--break", "1999-01-01", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_contact_set_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let x = draw(dir.path(), "normal-2", 150, 1);
    let big = dir.path().join("big.csv");
    let o = msd(&["transform", p(&x), "--spec", "exp(a=1,b=2)", "--out", p(&big)]);
    assert!(o.status.success());
    let out = dir.path().join("r");
    let o = msd(&["test", p(&x), p(&big), "--tau", "0.000001", "--bootstrap", "20", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("status = infeasible"));
}
