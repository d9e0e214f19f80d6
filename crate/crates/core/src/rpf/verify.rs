//! Residual, uniqueness, rate and contraction checks for solved eigendata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backward::{solve_backward, BackwardOptions, BackwardSolution, SeedFamily};
use super::dictionary::{cone_shift, test_dictionary};
use super::forward::{solve_forward, ForwardOptions, ForwardSolution, SigmaFamily};
use crate::cones::{birkhoff_rate, ConeParams};
use crate::error::{structural, Result};
use crate::hypotheses::{cones_for, ConeCertificate, ConstantsLedger, RateConstants};
use crate::sample::cone_element;
use crate::spaces::{pair, pair_slices};
use crate::transfer::StageSeq;

/// Absolute slack on every envelope and contraction comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// Errors at or below this are treated as converged and left out of slope fits.
pub const ERROR_FLOOR: f64 = 1e-12;

/// Smallest distance used as the denominator of a contraction ratio.
pub const RATIO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenRow {
    pub n: i64,
    /// `‖L_n* m_{n+1} - λ_n m_n‖_1`.
    pub dual: Option<f64>,
    /// `|<h_n, m_n> - 1|`.
    pub normalization: Option<f64>,
    /// `‖L_n h_n - λ_n h_{n+1}‖_∞`.
    pub eigenfunction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    pub rows: Vec<EigenRow>,
    pub budget: f64,
    pub worst_dual: f64,
    pub worst_normalization: f64,
    pub worst_eigenfunction: f64,
    pub passed: bool,
}

pub fn verify_eigen_relations(
    seq: &StageSeq,
    fwd: &ForwardSolution,
    bwd: Option<&BackwardSolution>,
    tol: f64,
) -> Result<EigenReport> {
    let mut rows = Vec::new();
    for n in fwd.lo..=fwd.hi {
        let mut row = EigenRow { n, dual: None, normalization: None, eigenfunction: None };
        if fwd.contains(n + 1) {
            let lam = fwd.lambda_at(n)?;
            let pulled = seq.stage(n)?.apply_dual(fwd.m_at(n + 1)?)?;
            let r = pulled.weights().iter().zip(fwd.m_at(n)?.weights()).map(|(a, b)| (a - lam * b).abs()).sum();
            row.dual = Some(r);
        }
        if let Some(b) = bwd.filter(|b| b.contains(n)) {
            row.normalization = Some((pair(b.h_at(n)?, fwd.m_at(n)?)? - 1.0).abs());
            if b.contains(n + 1) {
                let img = seq.stage(n)?.apply(b.h_at(n)?)?;
                let target = b.h_at(n + 1)?.scaled(fwd.lambda_at(n)?);
                row.eigenfunction = Some(img.sup_dist(&target)?);
            }
        }
        rows.push(row);
    }
    let worst = |f: fn(&EigenRow) -> Option<f64>| rows.iter().filter_map(f).fold(0.0f64, f64::max);
    let (wd, wn, we) = (worst(|r| r.dual), worst(|r| r.normalization), worst(|r| r.eigenfunction));
    let passed = wd < tol && wn < tol && we < tol;
    Ok(EigenReport { rows, budget: tol, worst_dual: wd, worst_normalization: wn, worst_eigenfunction: we, passed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub trials: usize,
    pub budget: f64,
    pub worst_lambda: f64,
    pub worst_m: f64,
    pub worst_h: f64,
    /// `max |ξ_n / λ_n - 1|` with `ξ_n = <L_n h_n, m_{n+1}>`.
    pub worst_xi: f64,
    /// `max |c_n - 1|` after forcing `<c_n h_n, m_n> = 1`.
    pub worst_rescale: f64,
    pub compared_indices: usize,
    pub passed: bool,
}

/// Re-solves from perturbed tails and heads and compares against the given solution.
///
/// Trial `t` uses the seeded σ-family `seed + t` with the tail cut by `5t`
/// indices, and a random cone seed for the backward limit with the head cut
/// by `5t`.
#[allow(clippy::too_many_arguments)]
pub fn verify_uniqueness(
    seq: &StageSeq,
    fwd: &ForwardSolution,
    bwd: Option<&BackwardSolution>,
    fopts: &ForwardOptions,
    bopts: Option<&BackwardOptions>,
    cone: ConeParams,
    trials: usize,
    seed: u64,
) -> Result<UniquenessReport> {
    let budget = 10.0 * fopts.tol;
    let positive = cones_for(seq, cone)?.iter().all(|c| c.is_positive_cone());
    let mut rep = UniquenessReport {
        trials,
        budget,
        worst_lambda: 0.0,
        worst_m: 0.0,
        worst_h: 0.0,
        worst_xi: 0.0,
        worst_rescale: 0.0,
        compared_indices: 0,
        passed: true,
    };
    for t in 1..=trials {
        let fo = ForwardOptions { sigma: SigmaFamily::Seeded(seed.wrapping_add(t as u64)), tail_trim: 5 * t, ..fopts.clone() };
        let alt = solve_forward(seq, &fo)?;
        for n in fwd.indices().filter(|&n| alt.contains(n)) {
            rep.compared_indices += 1;
            rep.worst_lambda = rep.worst_lambda.max((fwd.lambda_at(n)? - alt.lambda_at(n)?).abs());
            let (a, b) = (fwd.m_at(n)?, alt.m_at(n)?);
            for f in test_dictionary(a.space()) {
                let gap = (pair_slices(f.field.values(), a.weights()) - pair_slices(f.field.values(), b.weights())).abs();
                rep.worst_m = rep.worst_m.max(gap);
            }
        }
        if let (Some(b), Some(bo)) = (bwd, bopts) {
            let bo = BackwardOptions {
                seed: SeedFamily::Cone { params: cone, positive, seed: seed.wrapping_add(1000 + t as u64) },
                head_trim: 5 * t,
                ..bo.clone()
            };
            let alt_b = solve_backward(seq, &alt, &bo)?;
            for n in b.indices().filter(|&n| alt_b.contains(n)) {
                rep.worst_h = rep.worst_h.max(b.h_at(n)?.sup_dist(alt_b.h_at(n)?)?);
            }
        }
    }
    if let Some(b) = bwd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
        for n in b.indices() {
            let m = fwd.m_at(n)?;
            let c = rng.random_range(0.5..2.0);
            let g = b.h_at(n)?.scaled(c);
            let forced = g.scaled(1.0 / pair(&g, m)?);
            rep.worst_rescale = rep.worst_rescale.max(forced.sup_dist(b.h_at(n)?)?);
            if b.contains(n + 1) && fwd.contains(n + 1) {
                let xi = pair(&seq.stage(n)?.apply(b.h_at(n)?)?, fwd.m_at(n + 1)?)?;
                rep.worst_xi = rep.worst_xi.max((xi / fwd.lambda_at(n)? - 1.0).abs());
            }
        }
    }
    rep.passed = rep.compared_indices > 0
        && [rep.worst_lambda, rep.worst_m, rep.worst_h, rep.worst_xi, rep.worst_rescale].iter().all(|&w| w < budget);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: i64,
    pub k: usize,
    /// `|log λ_n - r_{n,k}|`.
    pub error_lambda: Option<f64>,
    /// `max_f |<f, m_n> - <f, ν_{n,k}>| / ‖f + c_f‖` over the dictionary.
    pub error_m: Option<f64>,
    /// `‖h_n - L̂^k g‖_∞`.
    pub error_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub rows: Vec<RateRow>,
    pub measured: RateConstants,
    pub ledger: Option<RateConstants>,
    /// Envelope comparisons made (entries with `k ≥ τ`).
    pub checked: usize,
    pub violations_measured: usize,
    pub violations_ledger: usize,
    /// `(n, quantity, slope)` from least-squares fits of `log error` against `k`.
    pub slopes: Vec<(i64, &'static str, f64)>,
    pub worst_slope: f64,
    pub log_gamma_measured: f64,
    pub passed: bool,
}

/// Least-squares slope of `log e` against `k`, over errors above [`ERROR_FLOOR`].
///
/// Returns `-∞` when fewer than two errors are above the floor, i.e. the
/// iteration was already converged.
pub fn log_error_slope(errors: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = errors.iter().filter(|(_, e)| *e > ERROR_FLOOR).map(|&(k, e)| (k as f64, e.ln())).collect();
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Slack on the slope comparison with `log γ`.
pub const SLOPE_SLACK: f64 = 0.05;

pub fn verify_exponential_rates(
    seq: &StageSeq,
    fwd: &ForwardSolution,
    bwd: Option<&BackwardSolution>,
    cone: ConeParams,
    measured: &RateConstants,
    ledger: Option<&ConstantsLedger>,
) -> Result<RatesReport> {
    let cones = cones_for(seq, cone)?;
    let tau = measured.tau;
    let ledger_rates = ledger.map(ConstantsLedger::rates);
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for n in fwd.indices() {
        let tr = fwd.trace_at(n)?;
        if tr.k_star < tau {
            return Err(structural(format!("history at index {n} has {} entries, fewer than τ = {tau}", tr.k_star)));
        }
        let cone_n = &cones[(n - seq.n_min()) as usize];
        let dict = test_dictionary(cone_n.space());
        let m = fwd.m_at(n)?;
        let targets: Vec<f64> = dict.iter().map(|t| pair_slices(t.field.values(), m.weights())).collect();
        let norms: Vec<f64> = dict
            .iter()
            .map(|t| {
                let c = cone_shift(&t.field, cone_n);
                t.field.map(|v| v + c).sup_norm()
            })
            .collect();
        let log_lam = fwd.lambda_at(n)?.ln();
        let mut el = Vec::new();
        let mut em = Vec::new();
        for k in 1..=tr.k_star {
            let e_l = (log_lam - tr.log_ratios[k - 1]).abs();
            let e_m = tr.pairings[k - 1]
                .iter()
                .zip(&targets)
                .zip(&norms)
                .filter(|(_, &nrm)| nrm > 0.0)
                .map(|((p, t), nrm)| (p - t).abs() / nrm)
                .fold(0.0, f64::max);
            el.push((k, e_l));
            em.push((k, e_m));
            rows.push(RateRow { n, k, error_lambda: Some(e_l), error_m: Some(e_m), error_h: None });
        }
        slopes.push((n, "lambda", log_error_slope(&el)));
        slopes.push((n, "m", log_error_slope(&em)));
    }
    if let Some(b) = bwd {
        for n in b.indices() {
            let tr = b.trace_at(n)?;
            let eh: Vec<(usize, f64)> = tr.errors.iter().enumerate().map(|(i, &e)| (i + 1, e)).collect();
            for &(k, e) in &eh {
                match rows.iter_mut().find(|r| r.n == n && r.k == k) {
                    Some(r) => r.error_h = Some(e),
                    None => rows.push(RateRow { n, k, error_lambda: None, error_m: None, error_h: Some(e) }),
                }
            }
            slopes.push((n, "h", log_error_slope(&eh)));
        }
    }
    rows.sort_by_key(|r| (r.n, r.k));

    let violates = |rc: &RateConstants, r: &RateRow| {
        let k = r.k;
        r.error_lambda.is_some_and(|e| e > rc.envelope_1(k) + BOUND_SLACK)
            || r.error_m.is_some_and(|e| e > rc.c2 * rc.gamma.powi(k as i32) + BOUND_SLACK)
            || r.error_h.is_some_and(|e| e > rc.envelope_3(k) + BOUND_SLACK)
    };
    let eligible: Vec<&RateRow> = rows.iter().filter(|r| r.k >= tau).collect();
    let violations_measured = eligible.iter().filter(|r| violates(measured, r)).count();
    let violations_ledger = ledger_rates.map_or(0, |l| eligible.iter().filter(|r| violates(&l, r)).count());
    let checked = eligible.len();
    let worst_slope = slopes.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
    let log_gamma_measured = measured.gamma.ln();
    let passed = violations_measured == 0
        && violations_ledger == 0
        && slopes.iter().all(|s| s.2 < 0.0 && s.2 <= log_gamma_measured + SLOPE_SLACK);
    Ok(RatesReport {
        rows,
        measured: *measured,
        ledger: ledger_rates,
        checked,
        violations_measured,
        violations_ledger,
        slopes,
        worst_slope,
        log_gamma_measured,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub samples: usize,
    pub ratios_checked: usize,
    pub worst_ratio: f64,
    /// `tanh(Δ_measured / 4)`.
    pub bound: f64,
    pub ratio_violations: usize,
    /// `Θ_{n+k} > C₁ γ^{k+1}` for `k ≥ τ`.
    pub envelope_violations: usize,
    pub monotone_violations: usize,
    pub passed: bool,
}

/// Projective distances of sampled cone pairs along `L_n^k`, for `k ≤ 3τ`.
pub fn verify_cone_contraction(
    seq: &StageSeq,
    p: ConeParams,
    cert: &ConeCertificate,
    samples: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let cones = cones_for(seq, p)?;
    let tau = cert.tau;
    let depth = 3 * tau;
    let last_start = seq.n_max() + 1 - depth as i64;
    if last_start < seq.n_min() {
        return Err(structural("window shorter than three contraction blocks"));
    }
    let rates = cert.rates()?;
    let bound = birkhoff_rate(cert.delta_measured)?;
    let positive = cones.iter().all(|c| c.is_positive_cone());
    let per_sample = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<(usize, f64, usize, usize, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
            let n = rng.random_range(seq.n_min()..=last_start);
            let sp = seq.space(n)?;
            let mut f = cone_element(sp, p, positive, &mut rng);
            let mut g = cone_element(sp, p, positive, &mut rng);
            let mut theta = Vec::with_capacity(depth + 1);
            for k in 0..=depth {
                let c = &cones[(n + k as i64 - seq.n_min()) as usize];
                theta.push(c.theta(&f, &g)?);
                if k < depth {
                    let st = seq.stage(n + k as i64)?;
                    f = st.apply(&f)?;
                    g = st.apply(&g)?;
                    // Projective quantities ignore scale; keep magnitudes tame.
                    f = f.scaled(1.0 / f.sup());
                    g = g.scaled(1.0 / g.sup());
                }
            }
            let (mut checked, mut worst, mut viol, mut env, mut mono) = (0, 0.0f64, 0, 0, 0);
            for k in 0..=depth - tau {
                if theta[k].is_finite() && theta[k] >= RATIO_FLOOR {
                    let r = theta[k + tau] / theta[k];
                    checked += 1;
                    worst = worst.max(r);
                    if r > bound + BOUND_SLACK {
                        viol += 1;
                    }
                }
            }
            for (k, t) in theta.iter().enumerate().take(depth + 1).skip(tau) {
                if *t > rates.c1 * rates.gamma.powi(k as i32 + 1) + BOUND_SLACK {
                    env += 1;
                }
            }
            for k in tau..depth {
                if theta[k + 1] > theta[k] + BOUND_SLACK {
                    mono += 1;
                }
            }
            Ok((checked, worst, viol, env, mono))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = ContractionReport {
        samples,
        ratios_checked: 0,
        worst_ratio: 0.0,
        bound,
        ratio_violations: 0,
        envelope_violations: 0,
        monotone_violations: 0,
        passed: false,
    };
    for (c, w, v, e, m) in per_sample {
        rep.ratios_checked += c;
        rep.worst_ratio = rep.worst_ratio.max(w);
        rep.ratio_violations += v;
        rep.envelope_violations += e;
        rep.monotone_violations += m;
    }
    rep.passed = rep.ratio_violations == 0 && rep.envelope_violations == 0 && rep.monotone_violations == 0;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::certify_c1_c3_c4;
    use crate::systems::{build_matrix_chain, MatrixChainSpec};

    fn solved(seed: u64) -> (StageSeq, ForwardSolution, BackwardSolution, ForwardOptions, BackwardOptions) {
        let spec = MatrixChainSpec::random(3, -40, 40, 1.0, 2.0, seed).unwrap();
        let seq = build_matrix_chain(&spec).unwrap();
        let fo = ForwardOptions::new(1e-12, 1, 30);
        let bo = BackwardOptions::new(1e-12, 1, 30);
        let fwd = solve_forward(&seq, &fo).unwrap();
        let bwd = solve_backward(&seq, &fwd, &bo).unwrap();
        (seq, fwd, bwd, fo, bo)
    }

    fn positive() -> ConeParams {
        ConeParams::new(1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn slope_fit() {
        let e: Vec<(usize, f64)> = (1..10).map(|k| (k, 0.5f64.powi(k as i32))).collect();
        assert!((log_error_slope(&e) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(log_error_slope(&[(1, 1e-3), (2, 0.0)]), f64::NEG_INFINITY);
    }

    #[test]
    fn eigen_relations_hold_for_random_chain() {
        let (seq, fwd, bwd, _, _) = solved(11);
        let rep = verify_eigen_relations(&seq, &fwd, Some(&bwd), 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.rows.iter().any(|r| r.eigenfunction.is_some()));
    }

    #[test]
    fn uniqueness_under_perturbed_boundary_data() {
        let (seq, fwd, bwd, fo, bo) = solved(12);
        let rep = verify_uniqueness(&seq, &fwd, Some(&bwd), &fo, Some(&bo), positive(), 2, 5).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn rates_and_contraction_for_random_chain() {
        let (seq, fwd, bwd, _, _) = solved(13);
        let cert = certify_c1_c3_c4(&seq, positive(), 0, 1).unwrap();
        let rc = cert.rates().unwrap();
        let rep = verify_exponential_rates(&seq, &fwd, Some(&bwd), positive(), &rc, None).unwrap();
        assert!(rep.checked > 0);
        assert!(rep.passed, "{:?} {:?}", rep.worst_slope, rep.violations_measured);
        let con = verify_cone_contraction(&seq, positive(), &cert, 50, 3).unwrap();
        assert!(con.ratios_checked > 0);
        assert!(con.passed, "{con:?}");
    }
}
