//! Forward limits: the eigenvalue chain `λ_n` and eigenmeasures `m_n`.
//!
//! For each index the finite-`k` quantities
//!
//! ```text
//! r_{n,k} = log <L_n^k 1, σ_{n+k}> - log <L_{n+1}^{k-1} 1, σ_{n+k}>,
//! <f, ν_{n,k}> = <L_n^k f, σ_{n+k}> / <L_n^k 1, σ_{n+k}>
//! ```
//!
//! are computed by pushing `𝟙` and the test dictionary forward, which equals
//! pairing `f` with the pulled-back measure and costs `O(k)` per index.
//! Vectors are rescaled every step and their logarithmic scale is carried
//! separately. The reported `(λ_n, m_n)` come from one dual sweep down from
//! the end of the window, which makes `L_n* m_{n+1} = λ_n m_n` hold to roundoff.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dictionary::test_dictionary;
use super::{stopping_gap_met, ConvergenceHistory};
use crate::error::{structural, ConvergenceFailure, Error, Result};
use crate::spaces::{pair_slices, MeasureVec, PointSpace};
use crate::transfer::StageSeq;

/// The reference measures `σ_ℓ` on the tail spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaFamily {
    Uniform,
    /// Independent random weights per index, reproducible from the seed.
    Seeded(u64),
}

impl SigmaFamily {
    pub fn measure(&self, space: &Arc<PointSpace>, index: i64) -> MeasureVec {
        match *self {
            SigmaFamily::Uniform => MeasureVec::uniform(space.clone()),
            SigmaFamily::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0xA24B_AED4_963E_E407));
                let w = (0..space.len()).map(|_| 0.05 + rng.random::<f64>()).collect();
                MeasureVec::new(space.clone(), w).expect("positive weights").normalize().expect("positive mass")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOptions {
    pub k_max: usize,
    pub tol: f64,
    /// Minimum number of steps before the stopping rule may fire.
    pub tau: usize,
    /// Steps kept between the last reported index and the end of the window.
    pub headroom: usize,
    pub sigma: SigmaFamily,
    /// Indices cut from the end of the window before the solve.
    pub tail_trim: usize,
}

impl ForwardOptions {
    pub fn new(tol: f64, tau: usize, headroom: usize) -> Self {
        Self { k_max: 10_000, tol, tau, headroom, sigma: SigmaFamily::Uniform, tail_trim: 0 }
    }
}

/// Finite-`k` history at one index.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub n: i64,
    pub k_star: usize,
    /// `r_{n,k}` for `k = 1..=k_star`.
    pub log_ratios: Vec<f64>,
    /// Dictionary pairings of `ν_{n,k}`, one row per `k`.
    pub pairings: Vec<Vec<f64>>,
    pub history: ConvergenceHistory,
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub lo: i64,
    pub hi: i64,
    /// Index of the space carrying the tail measure of the final sweep.
    pub tail: i64,
    pub sigma: SigmaFamily,
    pub tol: f64,
    pub lambda: Vec<f64>,
    pub m: Vec<MeasureVec>,
    pub traces: Vec<ForwardTrace>,
}

impl ForwardSolution {
    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi
    }

    fn slot(&self, n: i64) -> Result<usize> {
        if !self.contains(n) {
            return Err(structural(format!("index {n} outside forward solution [{}, {}]", self.lo, self.hi)));
        }
        Ok((n - self.lo) as usize)
    }

    pub fn lambda_at(&self, n: i64) -> Result<f64> {
        Ok(self.lambda[self.slot(n)?])
    }

    pub fn m_at(&self, n: i64) -> Result<&MeasureVec> {
        Ok(&self.m[self.slot(n)?])
    }

    pub fn trace_at(&self, n: i64) -> Result<&ForwardTrace> {
        Ok(&self.traces[self.slot(n)?])
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// `log` of `λ_{n+k-1} ⋯ λ_n`.
    pub fn log_lambda_product(&self, n: i64, k: usize) -> Result<f64> {
        (n..n + k as i64).map(|j| self.lambda_at(j).map(f64::ln)).sum()
    }
}

fn rescale(v: &mut [f64]) -> f64 {
    let s = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
        s.ln()
    } else {
        0.0
    }
}

/// Iterates `r_{n,k}` and dictionary pairings until successive gaps fall below tolerance.
pub fn solve_forward_at(seq: &StageSeq, n: i64, opts: &ForwardOptions) -> Result<ForwardTrace> {
    let last = seq.n_max() + 1 - opts.tail_trim as i64;
    let depth = opts.k_max.min((last - n).max(0) as usize);
    let dict = test_dictionary(seq.space(n)?);
    let mut us: Vec<Vec<f64>> = dict.iter().map(|t| t.field.values().to_vec()).collect();
    let mut log_u = 0.0;
    let mut v = vec![1.0; seq.space(n + 1)?.len()];
    let mut log_v = 0.0;
    let mut trace = ForwardTrace { n, k_star: 0, log_ratios: Vec::new(), pairings: Vec::new(), history: ConvergenceHistory::default() };
    for k in 1..=depth {
        let stage = seq.stage(n + k as i64 - 1)?;
        for u in us.iter_mut() {
            *u = stage.apply_values(u);
        }
        // The dictionary is dominated by ‖f‖ 𝟙, so one common scale taken from 𝟙 suffices.
        let s = rescale(&mut us[0]);
        for u in us.iter_mut().skip(1) {
            u.iter_mut().for_each(|x| *x /= s.exp());
        }
        log_u += s;
        if k >= 2 {
            v = seq.stage(n + k as i64 - 1)?.apply_values(&v);
            log_v += rescale(&mut v);
        }
        let sigma = opts.sigma.measure(seq.space(n + k as i64)?, n + k as i64);
        let w = sigma.weights();
        let one = pair_slices(&us[0], w);
        let r = one.ln() + log_u - pair_slices(&v, w).ln() - log_v;
        let p: Vec<f64> = us.iter().map(|u| pair_slices(u, w) / one).collect();
        if let (Some(&r0), Some(p0)) = (trace.log_ratios.last(), trace.pairings.last()) {
            let gap = p.iter().zip(p0).fold((r - r0).abs(), |g, (a, b)| g.max((a - b).abs()));
            trace.history.push(k, gap);
        }
        trace.log_ratios.push(r);
        trace.pairings.push(p);
        trace.k_star = k;
        if k >= opts.tau.max(2) && stopping_gap_met(&trace.history, opts.tol) {
            return Ok(trace);
        }
    }
    Err(Error::Convergence(Box::new(ConvergenceFailure {
        index: n,
        steps: trace.k_star,
        last_gap: trace.history.gaps.last().copied().unwrap_or(f64::INFINITY),
        gaps: trace.history.gaps,
    })))
}

/// Solves every index of the window that keeps `headroom` steps of tail.
pub fn solve_forward(seq: &StageSeq, opts: &ForwardOptions) -> Result<ForwardSolution> {
    let tail = seq.n_max() + 1 - opts.tail_trim as i64;
    let lo = seq.n_min();
    let hi = tail - opts.headroom.max(opts.tau) as i64;
    if hi < lo {
        return Err(structural(format!(
            "window [{}, {}] is too short for headroom {}",
            seq.n_min(),
            seq.n_max(),
            opts.headroom.max(opts.tau)
        )));
    }
    let traces = (lo..=hi).into_par_iter().map(|n| solve_forward_at(seq, n, opts)).collect::<Result<Vec<_>>>()?;

    // Common-tail dual sweep.
    let mut w = opts.sigma.measure(seq.space(tail)?, tail).weights().to_vec();
    let mut lambda = vec![0.0; (hi - lo + 1) as usize];
    let mut m = Vec::with_capacity(lambda.len());
    for j in (lo..tail).rev() {
        w = seq.stage(j)?.dual_values(&w);
        let mass: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= mass);
        if j <= hi {
            lambda[(j - lo) as usize] = mass;
            m.push(MeasureVec::new(seq.space(j)?.clone(), w.clone())?);
        }
    }
    m.reverse();
    Ok(ForwardSolution { lo, hi, tail, sigma: opts.sigma, tol: opts.tol, lambda, m, traces })
}
