use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::error::{domain, structural, Result};
use crate::hypotheses::HypothesisParams;
use crate::spaces::PointSpace;
use crate::transfer::{ContinuumLaw, Stage, StageSeq};

/// `x ↦ 2x + ε sin(2πx) mod 1` with potential `a cos(2πx) + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedDoubling {
    pub eps: f64,
    pub a: f64,
    pub b: f64,
}

impl ContinuumLaw for PerturbedDoubling {
    fn lift(&self, x: f64) -> f64 {
        2.0 * x + self.eps * (TAU * x).sin()
    }

    fn potential(&self, x: f64) -> f64 {
        self.a * (TAU * x).cos() + self.b
    }

    fn degree(&self) -> usize {
        2
    }
}

/// A window of perturbed doubling maps on an `N`-point circle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMapSpec {
    pub grid: usize,
    pub start: i64,
    pub eps: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Locality radius `δ`.
    pub delta: f64,
    pub two_sided: bool,
}

impl CircleMapSpec {
    /// Same map and potential at every index of `[lo, hi]`.
    pub fn stationary(grid: usize, eps: f64, a: f64, b: f64, lo: i64, hi: i64) -> Self {
        let len = (hi - lo + 1).max(0) as usize;
        Self { grid, start: lo, eps: vec![eps; len], a: vec![a; len], b: vec![b; len], delta: 0.1, two_sided: true }
    }

    /// `ε_n = ±eps` alternating, `a_n = amp sin(n)`, `b_n = 0`.
    pub fn alternating(grid: usize, eps: f64, amp: f64, lo: i64, hi: i64) -> Self {
        let idx: Vec<i64> = (lo..=hi).collect();
        Self {
            grid,
            start: lo,
            eps: idx.iter().map(|&n| if n.rem_euclid(2) == 0 { eps } else { -eps }).collect(),
            a: idx.iter().map(|&n| amp * (n as f64).sin()).collect(),
            b: vec![0.0; idx.len()],
            delta: 0.1,
            two_sided: true,
        }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn max_eps(&self) -> f64 {
        self.eps.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    pub fn max_a(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() || self.a.len() != self.len() || self.b.len() != self.len() {
            return Err(structural("ε, a, b must be nonempty and of equal length"));
        }
        if self.grid < 4 {
            return Err(domain("circle grids need at least 4 points"));
        }
        let e = self.max_eps();
        if !(e < 1.0 / TAU) {
            return Err(domain(format!(
                "|ε| = {e} violates |ε| < 1/(2π); the derivative bound 2 - 2π|ε| > 1 fails"
            )));
        }
        let max_delta = 1.0 / (2.0 * (2.0 + TAU * e));
        if !(self.delta > 0.0 && self.delta <= max_delta) {
            return Err(domain(format!("δ = {} must lie in (0, {max_delta}] so δ-balls map injectively", self.delta)));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(domain("potential coefficients must be finite"));
        }
        Ok(())
    }

    /// Analytic hypothesis parameters of the family.
    pub fn declared(&self) -> Result<HypothesisParams> {
        let e = self.max_eps();
        let expansion = 2.0 - TAU * e;
        // A δ-ball's lifted image grows at least by the minimal derivative per step.
        let tau = ((1.0 / (2.0 * self.delta)).ln() / expansion.ln()).ceil().max(1.0) as usize;
        HypothesisParams::new(2, self.delta, 1.0 / expansion, tau, 2.0 * PI * self.max_a(), 1.0, 2.0 * self.max_a())
    }
}

/// Stages from branch inverses on a shared grid, with declared parameters attached.
pub fn build_circle_chain(spec: &CircleMapSpec) -> Result<StageSeq> {
    spec.validate()?;
    let grid = PointSpace::circle_grid(spec.grid)?;
    let stages = (0..spec.len())
        .map(|i| {
            let law = PerturbedDoubling { eps: spec.eps[i], a: spec.a[i], b: spec.b[i] };
            Stage::from_law(grid.clone(), grid.clone(), Arc::new(law))
        })
        .collect::<Result<Vec<_>>>()?;
    StageSeq::new(spec.start, stages, spec.two_sided)?.with_declared(spec.declared()?)
}
