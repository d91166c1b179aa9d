use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcpolicy_cli::config::{to_toml, LoadedConfig};
use tcpolicy_cli::output::{emit_csv, read_csv, Cell, Table};
use tcpolicy_core::fixtures;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tcpolicy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcpolicy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    tcpolicy(&args)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const MINIMAL: &str = "\
[model]
horizon = 1.0

[market]
r = 0.05
mu = 0.07
sigma = 0.2

[mortality]
lambda0 = 0.02

[discount]
family = \"exponential\"
rho = 0.1

[preferences]
gamma = -1.0

[insurance]
payout = \"constant\"
l = 50.0

[grid]
n = 50
";

#[test]
fn config_round_trip_preserves_the_model() {
    for name in ["tapered.toml", "hump.toml", "insured.toml", "stationary.toml"] {
        let loaded = LoadedConfig::read(&configs().join(name)).unwrap();
        let text = to_toml(&loaded.config);
        let again = LoadedConfig::parse(&text).unwrap();
        assert_eq!(again.config, loaded.config, "{name}");
        assert_eq!(again.model().unwrap(), loaded.model().unwrap(), "{name}");
    }
}

#[test]
fn shipped_configs_match_fixtures() {
    let read = |name: &str| LoadedConfig::read(&configs().join(name)).unwrap().model().unwrap();
    assert_eq!(read("tapered.toml"), fixtures::tapered_weight());
    assert_eq!(read("hump.toml"), fixtures::hump(5.0, 10.0));
    assert_eq!(read("insured.toml"), fixtures::insured_exponential());
}

#[test]
fn unknown_key_is_refused_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("rho = 0.1", "rho = 0.1\nbeta = 2.0");
    let cfg = write_config(dir.path(), &text);
    let out = run_config("solve", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 15"), "{err}");
    assert!(err.contains("beta"), "{err}");
}

#[test]
fn missing_key_names_its_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("l = 50.0\n", ""));
    let out = run_config("solve", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("insurance.l") && err.contains("line 19"), "{err}");
}

#[test]
fn invariant_violation_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("gamma = -1.0", "gamma = 1.5"));
    let out = run_config("solve", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma < 1") && err.contains("line 17"), "{err}");

    let cfg = write_config(dir.path(), &MINIMAL.replace("l = 50.0", "l = -2.0"));
    let out = run_config("solve", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("payout ratio") && err.contains("line 21"), "{err}");
}

#[test]
fn assumption_violation_reports_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("lambda0 = 0.02", "lambda0 = 0.0")
        .replace("gamma = -1.0", "gamma = 0.9")
        .replace("l = 50.0", "l = 5.0");
    let cfg = write_config(dir.path(), &text);
    let out = run_config("solve", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("minimum -8.000000e-2"), "{err}");
    assert!(!dir.path().join("solution.csv").exists());
}

#[test]
fn simulate_needs_an_mc_section_and_power_utility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = run_config("simulate", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));

    let text = format!("{}\n[mc]\npaths = 10\nseed = 1\ndt = 0.01\n", MINIMAL.replace("gamma = -1.0", "gamma = 0.0"));
    let cfg = write_config(dir.path(), &text);
    let out = run_config("simulate", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

#[test]
fn log_utility_solve_uses_the_explicit_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("gamma = -1.0", "gamma = 0.0"));
    let out = run_config("solve", &cfg, dir.path(), &["--no-svg"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("solution.csv")).unwrap();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r[2] == 1.0));
    assert_eq!(rows[50][1], 1.0);
}

#[test]
fn csv_single_row_is_literal() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(&["t", "a"]);
    t.push(vec![0.0.into(), 1.5.into()]);
    let path = dir.path().join("t.csv");
    emit_csv(&t, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"t,a\n0,1.5\n");
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut values = vec![
        0.1,
        1.0 / 3.0,
        -2.0f64.sqrt(),
        f64::MIN_POSITIVE,
        5e-324,
        f64::MAX,
        -0.0,
        1e22,
        123456789.12345678,
        std::f64::consts::E * 1e-300,
    ];
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for _ in 0..500 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let v = f64::from_bits(state);
        if v.is_finite() {
            values.push(v);
        }
    }
    let mut t = Table::new(&["v"]);
    for &v in &values {
        t.push(vec![Cell::Num(v)]);
    }
    let path = dir.path().join("r.csv");
    emit_csv(&t, &path).unwrap();
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header, vec!["v"]);
    assert_eq!(rows.len(), values.len());
    for (row, v) in rows.iter().zip(&values) {
        assert_eq!(row[0].to_bits(), v.to_bits());
    }
}

#[test]
fn tapered_solve_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("solve", &configs().join("tapered.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("solution.csv")).unwrap();
    assert_eq!(header, vec!["t", "a", "A", "b"]);
    assert_eq!(rows.len(), 1001);
    assert!(rows.iter().all(|r| r[1] > 0.0));
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
    assert_eq!((rows[0][0], rows[1000][0]), (0.0, 4.0));

    let out = run_config("policies", &configs().join("tapered.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("policies.svg")).unwrap();
    assert!(svg.len() < 1 << 20, "{} bytes", svg.len());
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 1);
    let start = svg.find("points=\"").unwrap() + 8;
    let pts = &svg[start..start + svg[start..].find('"').unwrap()];
    assert_eq!(pts.split(' ').count(), 1001);
}

#[test]
fn no_svg_flag_suppresses_charts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = run_config("policies", &cfg, dir.path(), &["--no-svg"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("policies.csv").exists());
    assert!(!dir.path().join("policies.svg").exists());
}

#[test]
fn hump_reports_interior_satiation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("hump", &configs().join("hump.toml"), dir.path(), &["--no-svg"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("satiation time: ")).unwrap();
    let t: f64 = line["satiation time: ".len()..].parse().unwrap();
    assert!(t > 0.0 && t < 4.0, "{line}");
}

#[test]
fn stationary_equal_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("stationary", &configs().join("stationary.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("stationary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,b,x,alpha1,alpha2,beta,tc1,tc2"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    let a: f64 = fields[0].parse().unwrap();
    assert!((a - 85.4970026242).abs() < 1e-8, "{a}");
    assert_eq!(&fields[6..], ["true", "true"]);
}

#[test]
fn converge_writes_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("n = 50", "n = 50\nconverge = [40, 80]");
    let cfg = write_config(dir.path(), &text);
    let out = run_config("converge", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("convergence.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!((r[2] - 2.0).abs() < 0.05, "ratio {}", r[2]);
    }
    assert!(dir.path().join("convergence.svg").exists());
}

#[test]
fn identical_runs_give_identical_bytes() {
    let base = tempfile::tempdir().unwrap();
    let text = format!("{MINIMAL}\n[mc]\npaths = 400\nseed = 11\ndt = 0.02\nx0 = 2.0\n");
    let cfg = write_config(base.path(), &text);
    let (d1, d2) = (base.path().join("one"), base.path().join("two"));
    for cmd in ["solve", "policies", "simulate"] {
        assert_eq!(run_config(cmd, &cfg, &d1, &[]).status.code(), Some(0), "{cmd}");
        assert_eq!(run_config(cmd, &cfg, &d2, &[]).status.code(), Some(0), "{cmd}");
    }
    for file in ["solution.csv", "policies.csv", "fixedpoint.csv", "solution.svg"] {
        assert_eq!(std::fs::read(d1.join(file)).unwrap(), std::fs::read(d2.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn bad_command_line_exits_two() {
    assert_eq!(tcpolicy(&["bogus", "--config", "x.toml"]).status.code(), Some(2));
    assert_eq!(tcpolicy(&["solve"]).status.code(), Some(2));
    let out = tcpolicy(&["solve", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}
