//! Pseudo-invariant measures `μ_n = h_n m_n` and the normalized operators
//! `L̃_n f = L_n(h_n f) / (λ_n h_{n+1})`.

use super::backward::BackwardSolution;
use super::dictionary::{test_dictionary, TestFunction};
use super::forward::ForwardSolution;
use super::verify::verify_eigen_relations;
use crate::error::{domain, Result};
use crate::spaces::{pair_slices, Field, MeasureVec};
use crate::transfer::{normalize_stage, Forward, Stage, StageSeq};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantReport {
    /// `max |<f ∘ T_n, μ_n> - <f, μ_{n+1}>|` over the dictionary and the window.
    pub pushforward_gap: f64,
    /// `max ‖L̃_n 𝟙 - 𝟙‖_∞`.
    pub one_residual: f64,
    /// `max |<f, L̃_n* μ_{n+1}> - <f, μ_n>|` over the dictionary.
    pub dual_gap: f64,
    /// `max |<h_n, m_n> - 1|` before `μ_n` is renormalized.
    pub mass_defect: f64,
}

#[derive(Debug, Clone)]
pub struct InvariantChain {
    pub lo: i64,
    pub hi: i64,
    /// `μ_n` for `n ∈ [lo, hi]`.
    pub mu: Vec<MeasureVec>,
    /// `L̃_n` for `n ∈ [lo, hi - 1]`.
    pub normalized: Vec<Stage>,
    pub report: InvariantReport,
    /// `(n, pushforward gap, one residual, dual gap)`.
    pub rows: Vec<(i64, f64, f64, f64)>,
}

/// `<f ∘ T_n, μ_n>` for `f` on `X_{n+1}`.
///
/// Transfer-matrix stages encode a full shift, where `μ_n` lives on two-symbol
/// cylinders with `μ_n[ab] = h_n(a) M_n[b][a] m_{n+1}(b) / λ_n`; the pairing
/// then sums `f(b)` against the second marginal.
pub fn pushforward_pairing(
    stage: &Stage,
    f: &TestFunction,
    mu_n: &MeasureVec,
    h_n: &Field,
    m_next: &MeasureVec,
    lambda: f64,
) -> Result<f64> {
    Ok(match stage.forward() {
        Forward::Indices(idx) => mu_n.weights().iter().zip(idx).map(|(w, &j)| w * f.field.values()[j]).sum(),
        Forward::Coords(xs) => {
            let at = |x: f64| match &f.exact {
                Some(g) => g(x),
                None => f.field.interpolate(x).expect("circle grid"),
            };
            mu_n.weights().iter().zip(xs).map(|(w, &x)| w * at(x)).sum()
        }
        Forward::Symbolic => {
            let lh = stage.apply(h_n)?;
            f.field
                .values()
                .iter()
                .zip(m_next.weights())
                .zip(lh.values())
                .map(|((fv, m), l)| fv * m * l / lambda)
                .sum()
        }
    })
}

fn dictionary_gap(dict: &[TestFunction], a: &[f64], b: &[f64]) -> f64 {
    dict.iter()
        .map(|t| (pair_slices(t.field.values(), a) - pair_slices(t.field.values(), b)).abs())
        .fold(0.0, f64::max)
}

/// Builds `μ_n` and `L̃_n` on the backward window and checks pseudo-invariance.
///
/// Refuses when the eigenrelations fail `guard_tol`, since the identities
/// below are only meaningful for genuine eigendata.
pub fn build_invariant_chain(
    seq: &StageSeq,
    fwd: &ForwardSolution,
    bwd: &BackwardSolution,
    guard_tol: f64,
) -> Result<InvariantChain> {
    let eig = verify_eigen_relations(seq, fwd, Some(bwd), guard_tol)?;
    if !eig.passed {
        return Err(domain(format!(
            "eigenrelation residuals (dual {:e}, normalization {:e}, eigenfunction {:e}) exceed {guard_tol:e}; refusing to build the invariant chain",
            eig.worst_dual, eig.worst_normalization, eig.worst_eigenfunction
        )));
    }
    let (lo, hi) = (bwd.lo, bwd.hi);
    let mut mu = Vec::new();
    let mut mass_defect = 0.0f64;
    for n in lo..=hi {
        let raw = fwd.m_at(n)?.with_density(bwd.h_at(n)?)?;
        mass_defect = mass_defect.max((raw.total_mass() - 1.0).abs());
        mu.push(raw.normalize()?);
    }
    let mut normalized = Vec::new();
    let mut rows = Vec::new();
    let mut report = InvariantReport { mass_defect, ..Default::default() };
    for n in lo..hi {
        let i = (n - lo) as usize;
        let stage = seq.stage(n)?;
        let lam = fwd.lambda_at(n)?;
        let tilde = normalize_stage(stage, bwd.h_at(n)?, bwd.h_at(n + 1)?, lam)?;
        let dict = test_dictionary(stage.codomain());
        let push = dict
            .iter()
            .map(|t| -> Result<f64> {
                let lhs = pushforward_pairing(stage, t, &mu[i], bwd.h_at(n)?, fwd.m_at(n + 1)?, lam)?;
                Ok((lhs - pair_slices(t.field.values(), mu[i + 1].weights())).abs())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let one = tilde.apply(&Field::one(stage.domain().clone()))?;
        let one_res = one.values().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        let pulled = tilde.apply_dual(&mu[i + 1])?;
        let dual = dictionary_gap(&test_dictionary(stage.domain()), pulled.weights(), mu[i].weights());
        report.pushforward_gap = report.pushforward_gap.max(push);
        report.one_residual = report.one_residual.max(one_res);
        report.dual_gap = report.dual_gap.max(dual);
        rows.push((n, push, one_res, dual));
        normalized.push(tilde);
    }
    Ok(InvariantChain { lo, hi, mu, normalized, report, rows })
}
