//! Solvers and verifiers for the eigendata of a stage sequence.

mod backward;
mod dictionary;
mod forward;
mod invariant;
mod verify;

pub use backward::{solve_backward, BackwardOptions, BackwardSolution, BackwardTrace, SeedFamily};
pub use dictionary::{cone_shift, test_dictionary, TestFunction, DICTIONARY_SIZE};
pub use forward::{solve_forward, solve_forward_at, ForwardOptions, ForwardSolution, ForwardTrace, SigmaFamily};
pub use invariant::{build_invariant_chain, pushforward_pairing, InvariantChain, InvariantReport};
pub use verify::{
    verify_cone_contraction, verify_eigen_relations, verify_exponential_rates, verify_uniqueness, ContractionReport,
    EigenReport, EigenRow, RateRow, RatesReport, UniquenessReport,
};

use crate::cones::birkhoff_rate;
use crate::error::Result;

/// Successive-iterate gaps, keyed by the step at which each was measured.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceHistory {
    pub ks: Vec<usize>,
    pub gaps: Vec<f64>,
}

impl ConvergenceHistory {
    pub fn push(&mut self, k: usize, gap: f64) {
        self.ks.push(k);
        self.gaps.push(gap);
    }
}

/// Largest contraction ratio trusted when estimating the tail of a geometric sequence.
pub const RATIO_CAP: f64 = 0.99;

/// `gap_k <= tol (1 - γ̂)`, with `γ̂` the last observed gap ratio capped at [`RATIO_CAP`].
pub(crate) fn stopping_gap_met(h: &ConvergenceHistory, tol: f64) -> bool {
    let Some(&g) = h.gaps.last() else {
        return false;
    };
    let ratio = match h.gaps.len() {
        0 | 1 => RATIO_CAP,
        n => {
            let p = h.gaps[n - 2];
            if p > 0.0 {
                (g / p).clamp(0.0, RATIO_CAP)
            } else if g == 0.0 {
                0.0
            } else {
                RATIO_CAP
            }
        }
    };
    g <= tol * (1.0 - ratio)
}

/// `τ ⌈log(1/tol) / log(1/tanh(Δ/4))⌉`: steps after which a `τ`-block
/// contraction by `tanh(Δ/4)` has shrunk an O(1) discrepancy below `tol`.
pub fn headroom(tau: usize, delta: f64, tol: f64) -> Result<usize> {
    let rate = birkhoff_rate(delta.max(crate::hypotheses::DIAMETER_FLOOR))?;
    if rate >= 1.0 {
        return Err(crate::error::domain("infinite diameter gives no headroom bound"));
    }
    Ok(tau * ((1.0 / tol).ln() / (1.0 / rate).ln()).ceil().max(1.0) as usize)
}
