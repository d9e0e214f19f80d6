use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nsrpf::rpf::RatesReport;
use nsrpf::{Field, MeasureVec};

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes `name` under `dir` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

pub fn lambda_csv(rows: impl Iterator<Item = (i64, f64)>) -> String {
    let mut s = String::from("n,lambda,log_lambda\n");
    for (n, l) in rows {
        let _ = writeln!(s, "{n},{},{}", num(l), num(l.ln()));
    }
    s
}

fn coord(space: &nsrpf::PointSpace, i: usize) -> String {
    space.coord(i).map(num).unwrap_or_default()
}

pub fn measure_csv(m: &MeasureVec) -> String {
    let mut s = String::from("i,x,weight\n");
    for (i, w) in m.weights().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", coord(m.space(), i), num(*w));
    }
    s
}

pub fn field_csv(f: &Field) -> String {
    let mut s = String::from("i,x,value\n");
    for (i, v) in f.values().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", coord(f.space(), i), num(*v));
    }
    s
}

pub fn rates_csv(r: &RatesReport) -> String {
    let mut s = String::from("n,k,error_lambda,error_m,error_h,envelope_1,envelope_3\n");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            row.n,
            row.k,
            opt(row.error_lambda),
            opt(row.error_m),
            opt(row.error_h),
            num(r.measured.envelope_1(row.k)),
            num(r.measured.envelope_3(row.k))
        );
    }
    s
}
