//! One PASS/FAIL line per acceptance criterion.
//!
//! Run with `cargo test -p nsrpf-core --test acceptance -- --nocapture` to see the table.

use std::time::{Duration, Instant};

use nsrpf::cones::{theta_log_holder, theta_positive, LogHolderCone};
use nsrpf::hypotheses::{certify_a1_a4, certify_c1_c3_c4, log_shift_seminorm_bound, ConeCertificate};
use nsrpf::rpf::{
    build_invariant_chain, headroom, solve_backward, solve_forward, test_dictionary, verify_cone_contraction,
    verify_eigen_relations, verify_exponential_rates, BackwardOptions, BackwardSolution, ForwardOptions,
    ForwardSolution, SigmaFamily,
};
use nsrpf::sample::cone_element;
use nsrpf::spaces::pair;
use nsrpf::systems::{
    build_circle_chain, build_matrix_chain, oracle_nonstationary_products, oracle_stationary_rpf, CircleMapSpec,
    MatrixChainSpec,
};
use nsrpf::{derive_constants, ConeParams, Field, HypothesisParams, MeasureVec, PointSpace, StageSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MATRIX_TOL: f64 = 1e-12;
const CIRCLE_TOL: f64 = 1e-8;
/// Tail and head kept by the circle solves; the stopping rule fires well before this depth.
const CIRCLE_HEADROOM: usize = 40;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// A solved system with its cone and certificate.
struct Solved {
    seq: StageSeq,
    cone: ConeParams,
    cert: Option<ConeCertificate>,
    fopts: ForwardOptions,
    fwd: ForwardSolution,
    bwd: BackwardSolution,
}

fn matrix_cone() -> ConeParams {
    ConeParams::new(1.0, 0.5, 1.0).unwrap()
}

fn solve_matrix(spec: &MatrixChainSpec) -> Solved {
    let seq = build_matrix_chain(spec).unwrap();
    let cone = matrix_cone();
    let cert = certify_c1_c3_c4(&seq, cone, 0, 0).unwrap();
    let hr = headroom(cert.tau, cert.delta_measured, MATRIX_TOL).unwrap();
    let fopts = ForwardOptions::new(MATRIX_TOL, cert.tau, hr);
    let fwd = solve_forward(&seq, &fopts).unwrap();
    let bwd = solve_backward(&seq, &fwd, &BackwardOptions::new(MATRIX_TOL, cert.tau, hr)).unwrap();
    Solved { seq, cone, cert: Some(cert), fopts, fwd, bwd }
}

fn circle_spec(grid: usize, lo: i64, hi: i64) -> CircleMapSpec {
    CircleMapSpec::alternating(grid, 0.05, 0.2, lo, hi)
}

/// Cone certification costs `O(N · δN)` per distance, so it is only run on coarse grids.
fn solve_circle(spec: &CircleMapSpec, certify: bool) -> Solved {
    let seq = build_circle_chain(spec).unwrap();
    let p = *seq.declared().unwrap();
    let cone = p.cone(p.auto_q()).unwrap();
    let tau = certify_a1_a4(&seq).unwrap().measured.tau;
    let cert = certify.then(|| certify_c1_c3_c4(&seq, cone, 1000, 7).unwrap());
    let fopts = ForwardOptions::new(CIRCLE_TOL, tau, CIRCLE_HEADROOM);
    let fwd = solve_forward(&seq, &fopts).unwrap();
    let bwd = solve_backward(&seq, &fwd, &BackwardOptions::new(CIRCLE_TOL, tau, CIRCLE_HEADROOM)).unwrap();
    Solved { seq, cone, cert, fopts, fwd, bwd }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn stationary_reduction() -> Outcome {
    let t = Instant::now();
    let mat = vec![vec![2.0, 1.0], vec![1.0, 1.0]];
    let s = solve_matrix(&MatrixChainSpec::stationary(mat.clone(), -30, 30).unwrap());
    let oracle = oracle_stationary_rpf(&mat).unwrap();
    let elapsed = t.elapsed();
    let root = (3.0 + 5f64.sqrt()) / 2.0;
    let mut worst = (oracle.lambda - root).abs();
    for n in s.fwd.indices() {
        worst = worst.max((s.fwd.lambda_at(n).unwrap() - root).abs());
        worst = worst.max(max_abs_diff(s.fwd.m_at(n).unwrap().weights(), &oracle.m));
    }
    for n in s.bwd.indices() {
        worst = worst.max(max_abs_diff(s.bwd.h_at(n).unwrap().values(), &oracle.h));
    }
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(1),
        format!("max deviation {worst:.3e}, runtime {:.3}s", elapsed.as_secs_f64()),
    )
}

fn oracle_equivalence() -> Outcome {
    const DEPTH: usize = 30;
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for seed in 0..20u64 {
        let d = 2 + (seed % 3) as usize;
        let spec = MatrixChainSpec::random(d, -50, 50, 1.0, 2.0, 1000 + seed).unwrap();
        let s = solve_matrix(&spec);
        let interior = s.bwd.indices().filter(|&n| n - DEPTH as i64 >= -50 && n + DEPTH as i64 - 1 <= 50);
        for n in interior {
            let o = oracle_nonstationary_products(&spec, n, DEPTH).unwrap();
            worst = worst.max((s.fwd.lambda_at(n).unwrap() - o.log_lambda.exp()).abs());
            worst = worst.max(max_abs_diff(s.fwd.m_at(n).unwrap().weights(), &o.nu));
            worst = worst.max(max_abs_diff(s.bwd.h_at(n).unwrap().values(), &o.h));
            compared += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        compared > 0 && worst < 1e-9 && elapsed < Duration::from_secs(10),
        format!("{compared} indices, max deviation {worst:.3e}, runtime {:.3}s", elapsed.as_secs_f64()),
    )
}

/// Largest `|Δλ|` and dictionary gap between two σ-families.
fn sigma_gap(s: &Solved) -> (f64, f64) {
    let solve = |seed| solve_forward(&s.seq, &ForwardOptions { sigma: SigmaFamily::Seeded(seed), ..s.fopts.clone() }).unwrap();
    let (a, b) = (solve(31), solve(32));
    let (mut dl, mut dm) = (0.0f64, 0.0f64);
    for n in a.indices() {
        dl = dl.max((a.lambda_at(n).unwrap() - b.lambda_at(n).unwrap()).abs());
        let (ma, mb) = (a.m_at(n).unwrap(), b.m_at(n).unwrap());
        for f in test_dictionary(ma.space()) {
            dm = dm.max((dot(f.field.values(), ma.weights()) - dot(f.field.values(), mb.weights())).abs());
        }
    }
    (dl, dm)
}

fn sigma_independence(matrix: &Solved, circle: &Solved) -> Outcome {
    let (ml, mm) = sigma_gap(matrix);
    let (cl, cm) = sigma_gap(circle);
    let pass = ml < 10.0 * MATRIX_TOL && mm < 10.0 * MATRIX_TOL && cl < 10.0 * CIRCLE_TOL && cm < 10.0 * CIRCLE_TOL;
    outcome(pass, format!("matrix |Δλ| {ml:.2e} |Δm| {mm:.2e}; circle |Δλ| {cl:.2e} |Δm| {cm:.2e}"))
}

fn eigenrelations(matrix: &Solved, circle: &Solved) -> Outcome {
    let a = verify_eigen_relations(&matrix.seq, &matrix.fwd, Some(&matrix.bwd), 1e-10).unwrap();
    let b = verify_eigen_relations(&circle.seq, &circle.fwd, Some(&circle.bwd), 1e-6).unwrap();
    outcome(
        a.passed && b.passed,
        format!(
            "matrix dual {:.2e} norm {:.2e} eig {:.2e}; circle N=1024 dual {:.2e} norm {:.2e} eig {:.2e}",
            a.worst_dual, a.worst_normalization, a.worst_eigenfunction, b.worst_dual, b.worst_normalization, b.worst_eigenfunction
        ),
    )
}

fn rates(matrix: &Solved, circle: &Solved) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, s) in [("matrix", matrix), ("circle N=256", circle)] {
        let rc = s.cert.as_ref().unwrap().rates().unwrap();
        let r = verify_exponential_rates(&s.seq, &s.fwd, Some(&s.bwd), s.cone, &rc, None).unwrap();
        let negative = r.slopes.iter().all(|sl| sl.2 < 0.0);
        pass &= r.checked > 0 && r.violations_measured == 0 && negative;
        parts.push(format!(
            "{name}: {} checked, {} violations, worst slope {:.3} (log γ {:.3})",
            r.checked, r.violations_measured, r.worst_slope, r.log_gamma_measured
        ));
    }
    outcome(pass, parts.join("; "))
}

fn contraction(matrix: &Solved, circle: &Solved) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, s) in [("matrix", matrix), ("circle N=256", circle)] {
        let r = verify_cone_contraction(&s.seq, s.cone, s.cert.as_ref().unwrap(), 1000, 99).unwrap();
        pass &= r.ratios_checked > 0 && r.ratio_violations == 0;
        parts.push(format!(
            "{name}: {} ratios, worst {:.4} vs bound {:.4}, {} violations",
            r.ratios_checked, r.worst_ratio, r.bound, r.ratio_violations
        ));
    }
    outcome(pass, parts.join("; "))
}

fn cone_invariance(circle: &Solved) -> Outcome {
    let seq = &circle.seq;
    let p = *seq.declared().unwrap();
    let ledger = derive_constants(&p, circle.cone.q).unwrap();
    let tau = p.tau;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut outside_source, mut invariance_fail, mut regularity_fail) = (0, 0, 0);
    let mut worst_ratio = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(seq.n_min()..=seq.n_max() + 1 - tau as i64);
        let src = LogHolderCone::new(seq.space(n).unwrap().clone(), circle.cone);
        let f = cone_element(src.space(), circle.cone, false, &mut rng);
        if !src.contains(&f) {
            outside_source += 1;
            continue;
        }
        let dst = LogHolderCone::new(seq.space(n + 1).unwrap().clone(), circle.cone).with_q(ledger.s).unwrap();
        if !dst.contains(&seq.stage(n).unwrap().apply(&f).unwrap()) {
            invariance_fail += 1;
        }
        let g = seq.compose(n, tau, &f).unwrap();
        let ratio = g.sup() / g.inf();
        worst_ratio = worst_ratio.max(ratio);
        if ratio > ledger.r * (1.0 + 1e-12) {
            regularity_fail += 1;
        }
    }
    outcome(
        outside_source == 0 && invariance_fail == 0 && regularity_fail == 0,
        format!(
            "1000 samples, Q {:.4}, S(Q) {:.4}: {invariance_fail} outside Λ(S), sup/inf after τ at most {worst_ratio:.3} vs R {:.3}, {regularity_fail} over",
            circle.cone.q, ledger.s, ledger.r
        ),
    )
}

fn pseudo_invariance(matrix: &Solved, fine_circle: &Solved) -> Outcome {
    let a = build_invariant_chain(&matrix.seq, &matrix.fwd, &matrix.bwd, 1e-10).unwrap().report;
    let b = build_invariant_chain(&fine_circle.seq, &fine_circle.fwd, &fine_circle.bwd, 1e-6).unwrap().report;
    let ok = |r: &nsrpf::rpf::InvariantReport, tol: f64| r.pushforward_gap < tol && r.one_residual < tol && r.dual_gap < tol;
    outcome(
        ok(&a, 1e-10) && ok(&b, 1e-5),
        format!(
            "matrix push {:.2e} one {:.2e} dual {:.2e}; circle N=4096 push {:.2e} one {:.2e} dual {:.2e}",
            a.pushforward_gap, a.one_residual, a.dual_gap, b.pushforward_gap, b.one_residual, b.dual_gap
        ),
    )
}

fn random_positive(space: &std::sync::Arc<PointSpace>, rng: &mut ChaCha8Rng) -> Field {
    let spread = rng.random_range(0.1..3.0);
    Field::new(space.clone(), (0..space.len()).map(|_| (spread * rng.random_range(-1.0..1.0f64)).exp()).collect()).unwrap()
}

fn normalized(f: &Field, m: &MeasureVec) -> Field {
    f.scaled(1.0 / pair(f, m).unwrap())
}

fn inequality_suites(solved: &[&Solved]) -> Outcome {
    const TRIALS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let grid = PointSpace::circle_grid(32).unwrap();
    let line = PointSpace::finite((0..12).map(|i| (0..12).map(|j| (i as f64 - j as f64).abs() / 12.0).collect()).collect())
        .unwrap();
    let mut fails = [0usize; 6];

    for _ in 0..TRIALS {
        let sp = if rng.random_bool(0.5) { &grid } else { &line };
        let f = Field::new(sp.clone(), (0..sp.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let c = -f.inf() + rng.random_range(1e-3..3.0);
        let beta = rng.random_range(0.2..=1.0);
        let (lhs, rhs) = log_shift_seminorm_bound(&f, c, beta).unwrap();
        if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
            fails[0] += 1;
        }
    }
    for _ in 0..TRIALS {
        let d = rng.random_range(2..24);
        let sp = PointSpace::discrete(d);
        let m = MeasureVec::new(sp.clone(), (0..d).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap().normalize().unwrap();
        let f = normalized(&random_positive(&sp, &mut rng), &m);
        let g = normalized(&random_positive(&sp, &mut rng), &m);
        let (lhs, rhs) = nsrpf::cones::norm_theta_bound(&f, &g, &m).unwrap();
        if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
            fails[1] += 1;
        }
    }
    for _ in 0..TRIALS {
        let d = rng.random_range(2..16);
        let sp = PointSpace::discrete(d);
        let m = MeasureVec::new(sp.clone(), (0..d).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap().normalize().unwrap();
        let z: Vec<Field> = (0..6).map(|_| normalized(&random_positive(&sp, &mut rng), &m)).collect();
        let one = Field::one(sp.clone());
        let mut diam = 0.0f64;
        let mut s = 0.0f64;
        for a in &z {
            s = s.max(theta_positive(a, &one).unwrap());
            for b in &z {
                diam = diam.max(theta_positive(a, b).unwrap());
            }
        }
        for a in &z {
            for b in &z {
                let bound = nsrpf::cones::norm_theta_family_bound(diam, s, theta_positive(a, b).unwrap());
                if a.sup_dist(b).unwrap() > bound * (1.0 + 1e-12) + 1e-12 {
                    fails[2] += 1;
                }
            }
        }
    }
    for _ in 0..TRIALS {
        let p = ConeParams::new(rng.random_range(0.5..6.0), rng.random_range(0.05..0.3), 1.0).unwrap();
        let f = cone_element(&grid, p, false, &mut rng);
        let g = cone_element(&grid, p, false, &mut rng);
        let plus = theta_positive(&f, &g).unwrap();
        let lam = theta_log_holder(&f, &g, p).unwrap();
        if plus > lam * (1.0 + 1e-12) + 1e-12 {
            fails[3] += 1;
        }
    }
    for _ in 0..TRIALS {
        let sp = if rng.random_bool(0.5) { grid.clone() } else { PointSpace::discrete(rng.random_range(2..20)) };
        let f = random_positive(&sp, &mut rng);
        let lhs = theta_positive(&f, &Field::one(sp)).unwrap();
        if (lhs - (f.sup() / f.inf()).ln()).abs() > 1e-12 * (1.0 + lhs) {
            fails[4] += 1;
        }
    }
    let mut h_checked = 0;
    for s in solved {
        let dm = s.cert.as_ref().unwrap().delta_measured;
        let (lo, hi) = ((-2.0 * dm).exp(), (2.0 * dm).exp());
        for h in &s.bwd.h {
            h_checked += 1;
            if h.inf() < lo * (1.0 - 1e-12) || h.sup() > hi * (1.0 + 1e-12) {
                fails[5] += 1;
            }
        }
    }
    outcome(
        fails.iter().all(|&v| v == 0) && h_checked > 0,
        format!(
            "violations: log-shift {}, norm-Θ {}, norm-Θ family {}, nesting {}, sup/inf {}, h-range {} of {h_checked}",
            fails[0], fails[1], fails[2], fails[3], fails[4], fails[5]
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn constants_ledger() -> Outcome {
    let p = HypothesisParams::new(2, 0.1, 0.5, 3, 1.0, 1.0, 0.4).unwrap();
    let l = derive_constants(&p, 2.0).unwrap();
    let s = 0.5 * (1.0 + 2.0);
    let r = 8.0 * (3.0 * 0.4f64).exp() * (2.0 * 0.1f64).exp();
    let delta = 2.0 * ((2.0 + s) / (2.0 - s) * r).ln();
    let gamma = (delta / 4.0).tanh().powf(1.0 / 3.0);
    let c1 = delta / gamma.powi(6);
    let c3 = c1 / delta * (2.0 * delta).exp() * (delta.exp() - 1.0);
    let worst = [rel(l.s, s), rel(l.r, r), rel(l.delta, delta), rel(l.gamma, gamma), rel(l.c1, c1), rel(l.c3, c3)]
        .into_iter()
        .fold(0.0f64, f64::max);
    let rejects = [1.0, 0.5, 1e-3].iter().all(|&q| derive_constants(&p, q).is_err());
    outcome(
        worst < 1e-12 && rejects,
        format!("max relative deviation {worst:.2e}, threshold {} rejected at and below: {rejects}", p.q_threshold()),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "stationary reduction", stationary_reduction()));
    results.push((2, "nonstationary oracle equivalence", oracle_equivalence()));

    let matrix = solve_matrix(&MatrixChainSpec::random(3, -50, 50, 1.0, 2.0, 2024).unwrap());
    let coarse = solve_circle(&circle_spec(256, -60, 60), true);
    let mid = solve_circle(&circle_spec(1024, -60, 60), false);
    let fine = solve_circle(&circle_spec(4096, -45, 45), false);

    results.push((3, "independence of the reference measures", sigma_independence(&matrix, &mid)));
    results.push((4, "eigenrelations", eigenrelations(&matrix, &mid)));
    results.push((5, "exponential rates", rates(&matrix, &coarse)));
    results.push((6, "Birkhoff contraction", contraction(&matrix, &coarse)));
    results.push((7, "cone invariance and image regularity", cone_invariance(&coarse)));
    results.push((8, "pseudo-invariance", pseudo_invariance(&matrix, &fine)));
    results.push((9, "inequality suites", inequality_suites(&[&matrix, &coarse])));
    results.push((10, "constants ledger", constants_ledger()));

    for (i, name, o) in &results {
        println!("criterion {i:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
