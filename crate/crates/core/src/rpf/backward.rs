//! Backward limits: eigenfunctions `h_n = lim L̂_{n-k}^k g`, with
//! `L̂_j = L_j / λ_j` and `g = f / <f, m_{n-k}>`.
//!
//! The reported `h_n` come from one forward sweep of `L̂` started at the
//! bottom of the forward window, so `L_n h_n = λ_n h_{n+1}` holds to roundoff.
//! Per-index traces restart from the seed at every depth `k`, which is what
//! the convergence statement is about; they cost `O(k²)` applications.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::forward::ForwardSolution;
use super::{stopping_gap_met, ConvergenceHistory};
use crate::cones::ConeParams;
use crate::error::{domain, structural, ConvergenceFailure, Error, Result};
use crate::sample::cone_element;
use crate::spaces::{pair_slices, Field};
use crate::transfer::StageSeq;

/// The seed functions `f_ℓ ∈ Λ_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedFamily {
    One,
    /// A random cone element per index, reproducible from the seed.
    Cone { params: ConeParams, positive: bool, seed: u64 },
}

impl SeedFamily {
    pub fn field(&self, seq: &StageSeq, index: i64) -> Result<Field> {
        let sp = seq.space(index)?;
        Ok(match *self {
            SeedFamily::One => Field::one(sp.clone()),
            SeedFamily::Cone { params, positive, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
                cone_element(sp, params, positive, &mut rng)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOptions {
    pub k_max: usize,
    pub tol: f64,
    pub tau: usize,
    /// Steps kept between the bottom of the forward window and the first reported index.
    pub headroom: usize,
    pub seed: SeedFamily,
    /// Indices cut from the bottom of the forward window before the solve.
    pub head_trim: usize,
}

impl BackwardOptions {
    pub fn new(tol: f64, tau: usize, headroom: usize) -> Self {
        Self { k_max: 10_000, tol, tau, headroom, seed: SeedFamily::One, head_trim: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTrace {
    pub n: i64,
    pub k_star: usize,
    /// `‖h_n - L̂^k g‖_∞` for `k = 1..=k_star`.
    pub errors: Vec<f64>,
    pub history: ConvergenceHistory,
}

#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub lo: i64,
    pub hi: i64,
    pub head: i64,
    pub h: Vec<Field>,
    pub traces: Vec<BackwardTrace>,
}

impl BackwardSolution {
    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi
    }

    pub fn h_at(&self, n: i64) -> Result<&Field> {
        if !self.contains(n) {
            return Err(structural(format!("index {n} outside backward solution [{}, {}]", self.lo, self.hi)));
        }
        Ok(&self.h[(n - self.lo) as usize])
    }

    pub fn trace_at(&self, n: i64) -> Result<&BackwardTrace> {
        self.h_at(n)?;
        Ok(&self.traces[(n - self.lo) as usize])
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// `g / <g, m_j>` for `g = seed at j`.
fn normalized_seed(seq: &StageSeq, fwd: &ForwardSolution, seed: &SeedFamily, j: i64) -> Result<Vec<f64>> {
    let f = seed.field(seq, j)?;
    let c = pair_slices(f.values(), fwd.m_at(j)?.weights());
    if !(c > 0.0) {
        return Err(domain(format!("seed at index {j} has nonpositive integral against m")));
    }
    Ok(f.values().iter().map(|v| v / c).collect())
}

fn hat_step(seq: &StageSeq, fwd: &ForwardSolution, j: i64, v: &[f64]) -> Result<Vec<f64>> {
    let lam = fwd.lambda_at(j)?;
    let mut out = seq.stage(j)?.apply_values(v);
    out.iter_mut().for_each(|x| *x /= lam);
    Ok(out)
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn trace_at(
    seq: &StageSeq,
    fwd: &ForwardSolution,
    n: i64,
    h_n: &[f64],
    head: i64,
    opts: &BackwardOptions,
) -> Result<BackwardTrace> {
    let depth = opts.k_max.min((n - head) as usize);
    let mut trace = BackwardTrace { n, k_star: 0, errors: Vec::new(), history: ConvergenceHistory::default() };
    let mut prev: Option<Vec<f64>> = None;
    for k in 1..=depth {
        let base = n - k as i64;
        let mut v = normalized_seed(seq, fwd, &opts.seed, base)?;
        for j in base..n {
            v = hat_step(seq, fwd, j, &v)?;
        }
        if let Some(p) = &prev {
            trace.history.push(k, sup_dist(&v, p));
        }
        trace.errors.push(sup_dist(&v, h_n));
        trace.k_star = k;
        if k >= opts.tau.max(2) && stopping_gap_met(&trace.history, opts.tol) {
            return Ok(trace);
        }
        prev = Some(v);
    }
    Err(Error::Convergence(Box::new(ConvergenceFailure {
        index: n,
        steps: trace.k_star,
        last_gap: trace.history.gaps.last().copied().unwrap_or(f64::INFINITY),
        gaps: trace.history.gaps,
    })))
}

/// Solves every index of the forward window with `headroom` steps below it.
pub fn solve_backward(seq: &StageSeq, fwd: &ForwardSolution, opts: &BackwardOptions) -> Result<BackwardSolution> {
    if !seq.two_sided() {
        return Err(structural("eigenfunctions are backward limits and need a two-sided sequence"));
    }
    let head = fwd.lo + opts.head_trim as i64;
    let lo = head + opts.headroom.max(opts.tau) as i64;
    let hi = fwd.hi;
    if lo > hi || !fwd.contains(head) {
        return Err(structural(format!(
            "forward window [{}, {}] leaves no index with backward headroom {}",
            fwd.lo,
            fwd.hi,
            opts.headroom.max(opts.tau)
        )));
    }
    let mut v = normalized_seed(seq, fwd, &opts.seed, head)?;
    let mut h = Vec::with_capacity((hi - lo + 1) as usize);
    for j in head..=hi {
        if j >= lo {
            h.push(Field::new(seq.space(j)?.clone(), v.clone())?);
        }
        if j < hi {
            v = hat_step(seq, fwd, j, &v)?;
        }
    }
    let traces = (lo..=hi)
        .into_par_iter()
        .map(|n| trace_at(seq, fwd, n, h[(n - lo) as usize].values(), head, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(BackwardSolution { lo, hi, head, h, traces })
}
