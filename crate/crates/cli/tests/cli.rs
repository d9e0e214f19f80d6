use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_nsrpf");

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn nsrpf(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN).args(args).arg(config).env("NSRPF_OUTPUT_DIR", out).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

const MATRIX: &str = r#"
[system]
kind = "matrix"
start = -40
end = 40

[system.random]
d = 3
lo = 1.0
hi = 2.0
seed = 11

[cone]
q = 1.0
delta = 0.5

[solver]
tol = 1e-12
window = [-1, 1]
"#;

const SMALL_CIRCLE: &str = r#"
[system]
kind = "circle"
family = "alternating"
grid = 128
start = -50
end = 50
eps = 0.05
a = 0.2

[solver]
headroom = 30

[checks]
run = ["eigen", "contraction"]
samples = 100
"#;

#[test]
fn doubling_default_config_has_eigenvalue_two() {
    let out = tempfile::tempdir().unwrap();
    let o = nsrpf(&["run"], &repo_config("doubling.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&out.path().join("lambda.csv"));
    assert!(!rows.is_empty());
    for r in rows {
        let lam: f64 = r[1].parse().unwrap();
        assert!((lam - 2.0).abs() < 1e-9, "{r:?}");
    }
    let report = fs::read_to_string(out.path().join("report.txt")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("PASS ")).count(), 5);
    for n in -5..=5 {
        assert!(out.path().join(format!("m_{n}.csv")).exists());
        assert!(out.path().join(format!("h_{n}.csv")).exists());
        assert!(out.path().join(format!("mu_{n}.csv")).exists());
    }
    assert!(!out.path().join("m_6.csv").exists());
}

#[test]
fn q_below_threshold_is_a_certification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL_CIRCLE}\n[cone]\nq = 0.001\n"));
    let o = nsrpf(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("S(Q)") && e.contains("C3"), "{e}");
    let o = nsrpf(&["certify"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn matrix_subset_of_checks_has_decaying_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{MATRIX}\n[checks]\nrun = [\"rates\", \"uniqueness\", \"invariant_chain\"]\n"));
    let out = dir.path().join("out");
    let o = nsrpf(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    let checks: Vec<&str> = report.lines().filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")).collect();
    assert_eq!(checks.len(), 3, "{report}");
    assert!(checks[0].starts_with("PASS rates") && checks[2].starts_with("PASS invariant_chain"));

    // Least-squares slope of log error against k, per index, above the float floor.
    let rows = csv_rows(&out.join("rates.csv"));
    let mut by_n: std::collections::BTreeMap<i64, Vec<(f64, f64)>> = Default::default();
    for r in &rows {
        if let Ok(e) = r[2].parse::<f64>() {
            if e > 1e-12 {
                by_n.entry(r[0].parse().unwrap()).or_default().push((r[1].parse().unwrap(), e.ln()));
            }
        }
    }
    let mut fitted = 0;
    for pts in by_n.values().filter(|p| p.len() >= 3) {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        assert!(sxy / sxx < 0.0);
        fitted += 1;
    }
    assert!(fitted > 10);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [MATRIX, SMALL_CIRCLE].iter().enumerate() {
        let cfg = write_config(dir.path(), text);
        let (a, b) = (dir.path().join(format!("a{i}")), dir.path().join(format!("b{i}")));
        assert_eq!(nsrpf(&["run"], &cfg, &a).status.code(), Some(0));
        assert_eq!(nsrpf(&["run"], &cfg, &b).status.code(), Some(0));
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() > 5);
        for n in names {
            assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
        }
    }
}

#[test]
fn report_agrees_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{MATRIX}\n[checks]\nrun = [\"eigen\", \"rates\"]\neigen_budget = 1e-300\n"));
    let out = dir.path().join("out");
    let o = nsrpf(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("FAIL eigen") && report.contains("PASS rates"), "{report}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL eigen"));

    let cfg = write_config(dir.path(), MATRIX);
    assert_eq!(nsrpf(&["run"], &cfg, &out).status.code(), Some(0));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("PASS ")).count(), 5);
    assert!(!report.contains("FAIL"));
}

#[test]
fn bad_configs_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &MATRIX.replace("end = 40", "end = forty"));
    let o = nsrpf(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &MATRIX.replace("seed = 11", "seed = 11\nspeed = 3"));
    let o = nsrpf(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"), "{}", stderr(&o));

    let o = nsrpf(&["run"], &dir.path().join("missing.toml"), &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_mode_matches_products() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &MATRIX.replace("start = -40", "start = -80").replace("end = 40", "end = 80"));
    let o = nsrpf(&["oracle"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(csv_rows(&out.join("oracle.csv")).len() > 5);

    let stationary = "[system]\nkind = \"matrix\"\nstart = -60\nend = 60\nmatrix = [[1.0, 1.0], [1.0, 0.5]]\n";
    let cfg = write_config(dir.path(), stationary);
    let o = nsrpf(&["oracle"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS oracle_stationary"));

    let cfg = write_config(dir.path(), SMALL_CIRCLE);
    assert_eq!(nsrpf(&["oracle"], &cfg, &out).status.code(), Some(2));
}

#[test]
fn certify_writes_constants_and_config_dir_is_used_without_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL_CIRCLE}\n[output]\ndir = \"here\"\n"));
    let o = Command::new(BIN).arg("certify").arg(&cfg).current_dir(dir.path()).env_remove("NSRPF_OUTPUT_DIR").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("here/constants.txt")).unwrap();
    for key in ["Q = ", "S = ", "R = ", "gamma = ", "C1 = "] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}
