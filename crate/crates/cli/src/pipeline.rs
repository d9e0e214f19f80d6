//! certify → solve forward → solve backward → verifiers → invariant chain → artifacts.

use std::fmt::Write as _;
use std::path::PathBuf;

use nsrpf::hypotheses::{certify_a1_a4, certify_c1_c3_c4, ConeCertificate, ConstantsLedger};
use nsrpf::rpf::{
    build_invariant_chain, headroom, solve_backward, solve_forward, verify_cone_contraction, verify_eigen_relations,
    verify_exponential_rates, verify_uniqueness, BackwardOptions, BackwardSolution, ForwardOptions, ForwardSolution,
    InvariantChain, RatesReport, SigmaFamily,
};
use nsrpf::systems::{
    build_circle_chain, build_matrix_chain, oracle_nonstationary_products, oracle_stationary_rpf, MatrixChainSpec,
};
use nsrpf::{derive_constants, ConeParams, Error, StageSeq};

use crate::config::{Check, RunConfig, SystemSpec};
use crate::output::{field_csv, lambda_csv, measure_csv, num, rates_csv, write_atomic};

/// Why a run stopped, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Certification(String),
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Certification(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Certification(m) | Failure::Check(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn cert_err(e: Error) -> Failure {
    match e {
        Error::Certification { .. } => Failure::Certification(e.to_string()),
        other => Failure::Config(other.to_string()),
    }
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Config(format!("cannot write output: {e}"))
}

/// One PASS/FAIL line.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    fn render(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.check, self.detail)
    }
}

#[derive(Debug)]
pub struct Summary {
    pub dir: PathBuf,
    pub lines: Vec<CheckLine>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

struct Certified {
    seq: StageSeq,
    cone: ConeParams,
    cert: ConeCertificate,
    ledger: Option<ConstantsLedger>,
    header: String,
}

fn certify(cfg: &RunConfig) -> Result<Certified, Failure> {
    let spec = cfg.spec().map_err(config_err)?;
    let mut header = String::new();
    let (seq, cone, ledger) = match &spec {
        SystemSpec::Matrix(m) => {
            let seq = build_matrix_chain(m).map_err(config_err)?;
            let q = cfg.fixed_q().unwrap_or(1.0);
            let cone = ConeParams::new(q, cfg.cone.delta.unwrap_or(0.5), cfg.cone.beta).map_err(config_err)?;
            let _ = writeln!(header, "system = matrix chain, d = {}, seed = {}", m.d, m.seed.map_or("none".into(), |s| s.to_string()));
            (seq, cone, None)
        }
        SystemSpec::Circle(c) => {
            let seq = build_circle_chain(c).map_err(config_err)?;
            let declared = *seq.declared().expect("circle chains declare their family");
            let a = certify_a1_a4(&seq).map_err(cert_err)?;
            let q = cfg.fixed_q().unwrap_or_else(|| declared.auto_q());
            let cone = ConeParams::new(q, cfg.cone.delta.unwrap_or(declared.delta), cfg.cone.beta).map_err(config_err)?;
            let ledger = derive_constants(&declared, q).map_err(|e| Failure::Certification(format!("C3 (S(Q) < Q): {e}")))?;
            let m = a.measured;
            let _ = writeln!(header, "system = circle grid, N = {}", c.grid);
            let _ = writeln!(
                header,
                "measured: D = {}, rho = {}, tau = {}, H = {}, V = {}",
                m.degree,
                num(m.rho),
                m.tau,
                num(m.holder),
                num(m.oscillation)
            );
            (seq, cone, Some(ledger))
        }
    };
    let cert = certify_c1_c3_c4(&seq, cone, cfg.checks.samples, cfg.solver.seeds.sampling).map_err(cert_err)?;
    let (lo, hi) = (seq.n_min(), seq.n_max());
    let _ = writeln!(header, "window = [{lo}, {hi}], two_sided = {}", seq.two_sided());
    let _ = writeln!(
        header,
        "cone: Q = {}, delta = {}, beta = {}; tau = {}, Delta_measured = {}",
        num(cone.q),
        num(cone.delta),
        num(cone.beta),
        cert.tau,
        num(cert.delta_measured)
    );
    Ok(Certified { seq, cone, cert, ledger, header })
}

fn constants_text(c: &Certified) -> Result<String, Failure> {
    let mut s = String::new();
    let rc = c.cert.rates().map_err(config_err)?;
    let _ = writeln!(s, "[measured]");
    for (k, v) in [
        ("tau", rc.tau as f64),
        ("Delta", rc.delta),
        ("gamma", rc.gamma),
        ("C1", rc.c1),
        ("C2", rc.c2),
        ("C3", rc.c3),
        ("one_image_log_ratio", c.cert.one_image_log_ratio),
    ] {
        let _ = writeln!(s, "{k} = {}", num(v));
    }
    if let Some(l) = &c.ledger {
        let _ = writeln!(s, "\n[ledger]");
        s.push_str(&l.to_kv());
    }
    Ok(s)
}

fn prepare_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    Ok(dir)
}

pub fn certify_only(cfg: &RunConfig) -> Result<Summary, Failure> {
    let c = certify(cfg)?;
    let dir = prepare_dir(cfg)?;
    write_atomic(&dir, "constants.txt", &constants_text(&c)?).map_err(io_err)?;
    let line = CheckLine { check: "certification", passed: true, detail: format!("tau = {}, Delta_measured = {}", c.cert.tau, num(c.cert.delta_measured)) };
    write_atomic(&dir, "report.txt", &format!("{}\n{}\n", c.header, line.render())).map_err(io_err)?;
    Ok(Summary { dir, lines: vec![line] })
}

struct Solved {
    fopts: ForwardOptions,
    bopts: BackwardOptions,
    fwd: ForwardSolution,
    bwd: Option<BackwardSolution>,
    backward_error: Option<String>,
    headroom: usize,
}

fn solve(cfg: &RunConfig, c: &Certified) -> Result<Solved, Failure> {
    let tol = cfg.tol();
    let tau = c.cert.tau;
    let hr = match cfg.solver.headroom {
        Some(h) => h,
        None => headroom(tau, c.cert.delta_measured, tol).map_err(config_err)?,
    };
    let k_max = cfg.solver.k_max.unwrap_or(10_000);
    let sigma = cfg.solver.seeds.sigma.map_or(SigmaFamily::Uniform, SigmaFamily::Seeded);
    let fopts = ForwardOptions { k_max, sigma, ..ForwardOptions::new(tol, tau, hr) };
    let bopts = BackwardOptions { k_max, ..BackwardOptions::new(tol, tau, hr) };
    let fwd = solve_forward(&c.seq, &fopts).map_err(|e| match e {
        Error::Structural(m) => Failure::Config(format!("{m}; widen the system window or set solver.headroom")),
        other => Failure::Check(format!("forward solve: {other}")),
    })?;
    let (bwd, backward_error) = if c.seq.two_sided() {
        match solve_backward(&c.seq, &fwd, &bopts) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("the sequence is one-sided".into()))
    };
    Ok(Solved { fopts, bopts, fwd, bwd, backward_error, headroom: hr })
}

fn line(check: &'static str, passed: bool, detail: String) -> CheckLine {
    CheckLine { check, passed, detail }
}

fn failed(check: &'static str, e: impl std::fmt::Display) -> CheckLine {
    line(check, false, e.to_string())
}

fn run_check(
    cfg: &RunConfig,
    c: &Certified,
    s: &Solved,
    rates: &Result<RatesReport, Error>,
    chain: &Option<Result<InvariantChain, Error>>,
    check: Check,
) -> CheckLine {
    let name = check.name();
    let seed = cfg.solver.seeds.sampling;
    match check {
        Check::Eigen => match verify_eigen_relations(&c.seq, &s.fwd, s.bwd.as_ref(), cfg.eigen_budget()) {
            Ok(r) => line(
                name,
                r.passed && (s.bwd.is_some() || !c.seq.two_sided()),
                format!(
                    "dual {}, normalization {}, eigenfunction {} (budget {}){}",
                    num(r.worst_dual),
                    num(r.worst_normalization),
                    num(r.worst_eigenfunction),
                    num(r.budget),
                    s.backward_error.as_ref().map(|e| format!("; backward solve: {e}")).unwrap_or_default()
                ),
            ),
            Err(e) => failed(name, e),
        },
        Check::Uniqueness => {
            match verify_uniqueness(&c.seq, &s.fwd, s.bwd.as_ref(), &s.fopts, Some(&s.bopts), c.cone, cfg.checks.trials, seed) {
                Ok(r) => line(
                    name,
                    r.passed,
                    format!(
                        "lambda {}, m {}, h {}, xi {}, rescale {} over {} indices (budget {})",
                        num(r.worst_lambda),
                        num(r.worst_m),
                        num(r.worst_h),
                        num(r.worst_xi),
                        num(r.worst_rescale),
                        r.compared_indices,
                        num(r.budget)
                    ),
                ),
                Err(e) => failed(name, e),
            }
        }
        Check::Rates => match rates {
            Ok(r) => line(
                name,
                r.passed,
                format!(
                    "{} envelope checks, {} violations (measured), {} (ledger), worst slope {} vs log gamma {}",
                    r.checked,
                    r.violations_measured,
                    r.violations_ledger,
                    num(r.worst_slope),
                    num(r.log_gamma_measured)
                ),
            ),
            Err(e) => failed(name, e),
        },
        Check::Contraction => match verify_cone_contraction(&c.seq, c.cone, &c.cert, cfg.checks.samples, seed) {
            Ok(r) => line(
                name,
                r.passed,
                format!(
                    "{} block ratios, worst {} vs tanh(Delta/4) = {}; {} ratio, {} envelope, {} monotonicity violations",
                    r.ratios_checked,
                    num(r.worst_ratio),
                    num(r.bound),
                    r.ratio_violations,
                    r.envelope_violations,
                    r.monotone_violations
                ),
            ),
            Err(e) => failed(name, e),
        },
        Check::InvariantChain => match chain {
            Some(Ok(ch)) => {
                let r = ch.report;
                let b = cfg.invariant_budget();
                line(
                    name,
                    r.pushforward_gap < b && r.one_residual < b && r.dual_gap < b,
                    format!(
                        "pushforward {}, normalized one {}, normalized dual {} (budget {})",
                        num(r.pushforward_gap),
                        num(r.one_residual),
                        num(r.dual_gap),
                        num(b)
                    ),
                )
            }
            Some(Err(e)) => failed(name, e),
            None => failed(name, format!("not built: {}", s.backward_error.as_deref().unwrap_or("no eigenfunctions"))),
        },
    }
}

fn in_window(cfg: &RunConfig, n: i64) -> bool {
    cfg.solver.window.is_none_or(|[a, b]| n >= a && n <= b)
}

pub fn run(cfg: &RunConfig) -> Result<Summary, Failure> {
    let c = certify(cfg)?;
    let dir = prepare_dir(cfg)?;
    write_atomic(&dir, "constants.txt", &constants_text(&c)?).map_err(io_err)?;
    let s = solve(cfg, &c)?;

    let rates_report = c
        .cert
        .rates()
        .and_then(|rc| verify_exponential_rates(&c.seq, &s.fwd, s.bwd.as_ref(), c.cone, &rc, c.ledger.as_ref()));
    let chain = s.bwd.as_ref().map(|b| build_invariant_chain(&c.seq, &s.fwd, b, cfg.eigen_budget()));
    let mut checks: Vec<Check> = Vec::new();
    for &ch in &cfg.checks.run {
        if !checks.contains(&ch) {
            checks.push(ch);
        }
    }
    let lines: Vec<CheckLine> = checks.iter().map(|&ch| run_check(cfg, &c, &s, &rates_report, &chain, ch)).collect();

    write_atomic(&dir, "lambda.csv", &lambda_csv(s.fwd.indices().map(|n| (n, s.fwd.lambda[(n - s.fwd.lo) as usize])))).map_err(io_err)?;
    for n in s.fwd.indices().filter(|&n| in_window(cfg, n)) {
        write_atomic(&dir, &format!("m_{n}.csv"), &measure_csv(&s.fwd.m[(n - s.fwd.lo) as usize])).map_err(io_err)?;
    }
    if let Some(b) = &s.bwd {
        for n in b.indices().filter(|&n| in_window(cfg, n)) {
            write_atomic(&dir, &format!("h_{n}.csv"), &field_csv(&b.h[(n - b.lo) as usize])).map_err(io_err)?;
        }
    }
    if let Some(Ok(ch)) = &chain {
        for (i, mu) in ch.mu.iter().enumerate() {
            let n = ch.lo + i as i64;
            if in_window(cfg, n) {
                write_atomic(&dir, &format!("mu_{n}.csv"), &measure_csv(mu)).map_err(io_err)?;
            }
        }
    }
    if let Ok(r) = &rates_report {
        write_atomic(&dir, "rates.csv", &rates_csv(r)).map_err(io_err)?;
    }

    let mut report = c.header.clone();
    let _ = writeln!(
        report,
        "solver: tol = {}, headroom = {}, forward [{}, {}], backward {}",
        num(cfg.tol()),
        s.headroom,
        s.fwd.lo,
        s.fwd.hi,
        s.bwd.as_ref().map_or_else(|| format!("none ({})", s.backward_error.as_deref().unwrap_or("")), |b| format!("[{}, {}]", b.lo, b.hi))
    );
    report.push('\n');
    for l in &lines {
        report.push_str(&l.render());
        report.push('\n');
    }
    write_atomic(&dir, "report.txt", &report).map_err(io_err)?;
    Ok(Summary { dir, lines })
}

/// Cross-checks the solver against explicit matrix products.
pub fn oracle(cfg: &RunConfig) -> Result<Summary, Failure> {
    const DEPTH: usize = 30;
    const BUDGET: f64 = 1e-9;
    let spec: MatrixChainSpec = match cfg.spec().map_err(config_err)? {
        SystemSpec::Matrix(m) => m,
        SystemSpec::Circle(_) => return Err(Failure::Config("oracle mode needs a matrix chain".into())),
    };
    let c = certify(cfg)?;
    let dir = prepare_dir(cfg)?;
    let s = solve(cfg, &c)?;
    let mut csv = String::from("n,lambda,lambda_oracle,m_gap,h_gap\n");
    let (mut worst, mut compared) = (0.0f64, 0usize);
    for n in s.fwd.indices() {
        if n - (DEPTH as i64) < spec.start || n + DEPTH as i64 - 1 > spec.n_max() {
            continue;
        }
        let o = oracle_nonstationary_products(&spec, n, DEPTH).map_err(config_err)?;
        let lam = s.fwd.lambda_at(n).map_err(config_err)?;
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let m_gap = gap(s.fwd.m_at(n).map_err(config_err)?.weights(), &o.nu);
        let h_gap = match &s.bwd {
            Some(b) if b.contains(n) => Some(gap(b.h_at(n).map_err(config_err)?.values(), &o.h)),
            _ => None,
        };
        worst = worst.max((lam - o.log_lambda.exp()).abs()).max(m_gap).max(h_gap.unwrap_or(0.0));
        compared += 1;
        let _ = writeln!(csv, "{n},{},{},{},{}", num(lam), num(o.log_lambda.exp()), num(m_gap), h_gap.map(num).unwrap_or_default());
    }
    let mut lines = vec![line(
        "oracle_products",
        compared > 0 && worst < BUDGET,
        format!("{compared} indices at depth {DEPTH}, max deviation {} (budget {})", num(worst), num(BUDGET)),
    )];
    if spec.matrices.windows(2).all(|w| w[0] == w[1]) {
        let line_st = match oracle_stationary_rpf(&spec.matrices[0]) {
            Ok(o) => {
                let dev = s.fwd.lambda.iter().fold(0.0f64, |m, l| m.max((l - o.lambda).abs()));
                line("oracle_stationary", dev < BUDGET, format!("Perron root {}, max deviation {}", num(o.lambda), num(dev)))
            }
            Err(e) => failed("oracle_stationary", e),
        };
        lines.push(line_st);
    }
    write_atomic(&dir, "oracle.csv", &csv).map_err(io_err)?;
    let mut report = c.header.clone();
    report.push('\n');
    for l in &lines {
        report.push_str(&l.render());
        report.push('\n');
    }
    write_atomic(&dir, "report.txt", &report).map_err(io_err)?;
    Ok(Summary { dir, lines })
}
