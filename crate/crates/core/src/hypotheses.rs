//! Hypothesis parameters, the explicit constants they determine, and
//! sample-based certification of both.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cones::{birkhoff_rate, theta_positive, ConeParams, LogHolderCone};
use crate::error::{domain, structural, Error, Result};
use crate::sample::{cone_element, extreme_elements};
use crate::spaces::{circle_distance, holder_seminorm, Field};
use crate::transfer::{Forward, StageSeq};

/// Relative slack allowed when a sampled quantity is compared with a declared bound.
pub const DECLARED_SLACK: f64 = 1e-9;

/// Smallest diameter fed into rate constants; a zero diameter would make `C₁` indeterminate.
pub const DIAMETER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisParams {
    /// Maximum number of preimages `D`.
    pub degree: usize,
    /// Radius `δ` within which inverse branches contract.
    pub delta: f64,
    /// Backward contraction factor `ρ`.
    pub rho: f64,
    /// Exactness time `τ`.
    pub tau: usize,
    /// Hölder constant `H` of the potentials.
    pub holder: f64,
    /// Hölder exponent `β`.
    pub beta: f64,
    /// Oscillation bound `V ≥ sup φ - inf φ`.
    pub oscillation: f64,
}

impl HypothesisParams {
    pub fn new(degree: usize, delta: f64, rho: f64, tau: usize, holder: f64, beta: f64, oscillation: f64) -> Result<Self> {
        let p = Self { degree, delta, rho, tau, holder, beta, oscillation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.tau < 1 {
            return Err(domain("D and τ must be at least 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(domain(format!("δ must be positive, got {}", self.delta)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(domain(format!("ρ must lie in (0,1), got {}", self.rho)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("β must lie in (0,1], got {}", self.beta)));
        }
        if !(self.holder >= 0.0) || !(self.oscillation >= 0.0) || !self.holder.is_finite() || !self.oscillation.is_finite() {
            return Err(domain("H and V must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `Hρ^β / (1 - ρ^β)`; the cone constant must exceed this.
    pub fn q_threshold(&self) -> f64 {
        let rb = self.rho.powf(self.beta);
        self.holder * rb / (1.0 - rb)
    }

    /// `S(Q) = ρ^β (H + Q)`.
    pub fn s_of(&self, q: f64) -> f64 {
        self.rho.powf(self.beta) * (self.holder + q)
    }

    /// Default cone constant: twice the threshold, or 1 when the threshold vanishes.
    pub fn auto_q(&self) -> f64 {
        let t = self.q_threshold();
        if t > 0.0 {
            2.0 * t
        } else {
            1.0
        }
    }

    pub fn cone(&self, q: f64) -> Result<ConeParams> {
        ConeParams::new(q, self.delta, self.beta)
    }
}

/// `γ`, `C₁`, `C₂ = C₁`, `C₃` for a given diameter `Δ` and block length `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub delta: f64,
    pub tau: usize,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl RateConstants {
    pub fn new(delta: f64, tau: usize) -> Result<Self> {
        if tau < 1 {
            return Err(domain("block length τ must be at least 1"));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(domain(format!("diameter must be finite and nonnegative, got {delta}")));
        }
        let delta = delta.max(DIAMETER_FLOOR);
        let gamma = birkhoff_rate(delta)?.powf(1.0 / tau as f64);
        let c1 = delta * gamma.powi(-2 * tau as i32);
        let c3 = c1 / delta * (2.0 * delta).exp() * delta.exp_m1();
        Ok(Self { delta, tau, gamma, c1, c2: c1, c3 })
    }

    /// `C₁ γ^k`.
    pub fn envelope_1(&self, k: usize) -> f64 {
        self.c1 * self.gamma.powi(k as i32)
    }

    /// `C₃ γ^k`.
    pub fn envelope_3(&self, k: usize) -> f64 {
        self.c3 * self.gamma.powi(k as i32)
    }
}

/// Every explicit constant determined by the hypothesis parameters and `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsLedger {
    pub params: HypothesisParams,
    pub q: f64,
    pub s: f64,
    pub r: f64,
    pub delta: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c3: f64,
    pub q_threshold: f64,
}

impl ConstantsLedger {
    pub fn c2(&self) -> f64 {
        self.c1
    }

    pub fn rates(&self) -> RateConstants {
        RateConstants { delta: self.delta, tau: self.params.tau, gamma: self.gamma, c1: self.c1, c2: self.c1, c3: self.c3 }
    }

    /// One `name = value` line per field.
    pub fn to_kv(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        for (k, v) in [
            ("D", p.degree as f64),
            ("delta", p.delta),
            ("rho", p.rho),
            ("tau", p.tau as f64),
            ("H", p.holder),
            ("beta", p.beta),
            ("V", p.oscillation),
            ("Q_threshold", self.q_threshold),
            ("Q", self.q),
            ("S", self.s),
            ("R", self.r),
            ("Delta", self.delta),
            ("gamma", self.gamma),
            ("C1", self.c1),
            ("C2", self.c1),
            ("C3", self.c3),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        s
    }
}

/// Evaluates the closed forms for `S, R, Δ, γ, C₁, C₃`.
pub fn derive_constants(p: &HypothesisParams, q: f64) -> Result<ConstantsLedger> {
    p.validate()?;
    let q_threshold = p.q_threshold();
    let s = p.s_of(q);
    if !(q > q_threshold) || !(s < q) {
        return Err(domain(format!(
            "Q = {q} must exceed H ρ^β / (1 - ρ^β) = {q_threshold}; otherwise S(Q) = {s} < Q fails and the cone is not invariant"
        )));
    }
    let tau = p.tau as f64;
    let r = (p.degree as f64).powf(tau) * (tau * p.oscillation).exp() * (q * p.delta.powf(p.beta)).exp();
    let delta = 2.0 * ((q + s) / (q - s) * r).ln();
    let gamma = (delta / 4.0).tanh().powf(1.0 / tau);
    let c1 = delta * gamma.powf(-2.0 * tau);
    let c3 = c1 / delta * (2.0 * delta).exp() * delta.exp_m1();
    Ok(ConstantsLedger { params: *p, q, s, r, delta, gamma, c1, c3, q_threshold })
}

/// Ledger for each `Q` in the grid; entries at or below threshold are errors.
pub fn q_grid_scan(p: &HypothesisParams, qs: &[f64]) -> Vec<Result<ConstantsLedger>> {
    qs.iter().map(|&q| derive_constants(p, q)).collect()
}

/// `(|log(f+c)|_β, |f|_β / (c + inf f))`.
pub fn log_shift_seminorm_bound(f: &Field, c: f64, beta: f64) -> Result<(f64, f64)> {
    let floor = c + f.inf();
    if !(floor > 0.0) {
        return Err(domain(format!("shift c = {c} must exceed -inf f = {}", -f.inf())));
    }
    let lhs = holder_seminorm(&f.map(|v| (v + c).ln()), beta)?;
    let rhs = holder_seminorm(f, beta)? / floor;
    Ok((lhs, rhs))
}

/// Measured hypothesis parameters next to the ones used downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// Tightest values seen on the sample.
    pub measured: HypothesisParams,
    /// Declared analytic values, checked against `measured`.
    pub effective: HypothesisParams,
}

fn contradicts(axiom: &'static str, what: &str, measured: f64, declared: f64) -> Result<()> {
    if measured > declared * (1.0 + DECLARED_SLACK) + 1e-15 {
        return Err(Error::Certification {
            axiom,
            detail: format!("sampled {what} = {measured} exceeds the declared value {declared}"),
        });
    }
    Ok(())
}

/// Offsets used to sample close pairs: powers of two up to the reach, plus the reach.
fn pair_offsets(reach: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k <= reach).collect();
    if v.last() != Some(&reach) && reach > 0 {
        v.push(reach);
    }
    v
}

/// Checks (A1)–(A4) on the sample for circle-grid chains with a declared family.
pub fn certify_a1_a4(seq: &StageSeq) -> Result<Certificate> {
    let declared = *seq
        .declared()
        .ok_or_else(|| structural("certification needs the family's declared δ and β"))?;
    let mut laws = Vec::with_capacity(seq.len());
    for (n, s) in seq.stages() {
        match (s.forward(), s.law()) {
            (Forward::Coords(_), Some(law)) => laws.push((n, s, law.clone())),
            _ => {
                return Err(structural(
                    "(A1)-(A4) are map hypotheses; they apply to circle-grid chains, not transfer-matrix or finite stages",
                ))
            }
        }
    }
    let delta = declared.delta;
    let beta = declared.beta;

    // (A1) bounded degree.
    let degree = seq.degree();
    contradicts("A1", "preimage count", degree as f64, declared.degree as f64)?;
    if seq.stages().any(|(_, s)| s.preimages().iter().any(Vec::is_empty)) {
        return Err(Error::Certification { axiom: "A2", detail: "a sample point has no preimage".into() });
    }

    // (A2) backward contraction of close pairs, measured from exact forward images.
    let rho = laws
        .par_iter()
        .map(|(n, s, law)| {
            let dom = s.domain();
            let len = dom.len();
            let spacing = dom.spacing().expect("circle grid");
            let reach = (((delta / spacing) + 1e-9).floor() as usize).min(len / 2);
            let mut worst = 0.0f64;
            for off in pair_offsets(reach) {
                for i in 0..len {
                    let (x, y) = (dom.coord(i).unwrap(), dom.coord((i + off) % len).unwrap());
                    let d = circle_distance(x, y);
                    let dt = circle_distance(law.map(x), law.map(y));
                    let ratio = d / dt;
                    if !(ratio < 1.0) {
                        return Err(Error::Certification {
                            axiom: "A2",
                            detail: format!("stage {n}: pair at distance {d} is not expanded (image distance {dt})"),
                        });
                    }
                    worst = worst.max(ratio);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    contradicts("A2", "contraction factor ρ", rho, declared.rho)?;

    // (A3) every δ-ball covers the circle after τ steps; lift images are intervals.
    let k_max = 8 * (1.0 / delta).log2().ceil().max(1.0) as usize;
    let starts: Vec<i64> = (seq.n_min()..=seq.n_max()).collect();
    let taus = starts
        .par_iter()
        .map(|&n| -> Result<Option<usize>> {
            let dom = seq.space(n)?;
            let len = dom.len();
            let mut lo: Vec<f64> = (0..len).map(|i| dom.coord(i).unwrap() - delta).collect();
            let mut hi: Vec<f64> = (0..len).map(|i| dom.coord(i).unwrap() + delta).collect();
            for k in 1..=k_max {
                let Ok(stage) = seq.stage(n + k as i64 - 1) else {
                    return Ok(None);
                };
                let law = stage.law().expect("checked above");
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    *a = law.lift(*a);
                    *b = law.lift(*b);
                }
                if lo.iter().zip(&hi).all(|(a, b)| b - a >= 1.0) {
                    return Ok(Some(k));
                }
            }
            Err(Error::Certification {
                axiom: "A3",
                detail: format!("a δ-ball at index {n} does not cover the circle within {k_max} steps"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tau = taus
        .into_iter()
        .flatten()
        .max()
        .ok_or_else(|| structural("window too short to observe exactness from any index"))?;
    contradicts("A3", "exactness time τ", tau as f64, declared.tau as f64)?;

    // (A4) Hölder constant at the declared exponent, and oscillation.
    let holder = laws
        .par_iter()
        .map(|(_, s, _)| holder_seminorm(s.potential().expect("law stages carry φ"), beta))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let oscillation = laws
        .iter()
        .map(|(_, s, _)| {
            let p = s.potential().unwrap();
            p.sup() - p.inf()
        })
        .fold(0.0f64, f64::max);
    contradicts("A4", "Hölder constant H", holder, declared.holder)?;
    contradicts("A4", "oscillation V", oscillation, declared.oscillation)?;

    let measured = HypothesisParams { degree, delta, rho: rho.max(f64::MIN_POSITIVE), tau, holder, beta, oscillation };
    Ok(Certificate { measured, effective: declared })
}

/// Outcome of the sampled (C1), (C3), (C4) checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeCertificate {
    /// Block length after which images have finite diameter.
    pub tau: usize,
    /// Largest sampled `Θ` diameter of `L_n^τ Λ_n`.
    pub delta_measured: f64,
    /// Largest `log(sup L_n^τ 𝟙 / inf L_n^τ 𝟙)`.
    pub one_image_log_ratio: f64,
    /// `S(Q)` when the cone is log-Hölder.
    pub s_q: Option<f64>,
    /// Number of sampled cone-invariance checks.
    pub invariance_checks: usize,
    /// How density of `Λ - Λ` was established.
    pub density: &'static str,
}

impl ConeCertificate {
    pub fn rates(&self) -> Result<RateConstants> {
        RateConstants::new(self.delta_measured, self.tau)
    }
}

/// The cone on each space of the window.
pub fn cones_for(seq: &StageSeq, p: ConeParams) -> Result<Vec<LogHolderCone>> {
    let mut out: Vec<LogHolderCone> = Vec::new();
    for n in seq.n_min()..=seq.n_max() + 1 {
        let sp = seq.space(n)?;
        match out.last() {
            Some(c) if Arc::ptr_eq(c.space(), sp) => out.push(c.clone()),
            _ => out.push(LogHolderCone::new(sp.clone(), p)),
        }
    }
    Ok(out)
}

/// Smallest `k` such that every composed column `L_n^k e_a` is strictly positive.
fn positivity_time(seq: &StageSeq, n: i64, k_max: usize) -> Result<Option<usize>> {
    let d = seq.space(n)?.len();
    for k in 1..=k_max {
        if n + k as i64 > seq.n_max() + 1 {
            return Ok(None);
        }
        let positive = (0..d).all(|a| {
            let mut e = vec![0.0; d];
            e[a] = 1.0;
            let f = Field::new(seq.space(n).unwrap().clone(), e).unwrap();
            seq.compose(n, k, &f).map(|g| g.inf() > 0.0).unwrap_or(false)
        });
        if positive {
            return Ok(Some(k));
        }
    }
    Err(Error::Certification { axiom: "C3", detail: format!("composed operators from index {n} never become strictly positive") })
}

/// Number of extreme tents used for the circle diameter estimate.
const TENT_CENTRES: usize = 16;

/// Samples (C1), (C3) and measures the image diameter; (C4) is structural.
///
/// For `C⁺` on a finite set the extreme rays are the coordinate vectors, so
/// the diameter is exactly the largest `Θ₊` between composed columns.
pub fn certify_c1_c3_c4(seq: &StageSeq, p: ConeParams, samples: usize, seed: u64) -> Result<ConeCertificate> {
    let cones = cones_for(seq, p)?;
    let cone_at = |n: i64| &cones[(n - seq.n_min()) as usize];
    for c in &cones {
        if !c.contains(&Field::one(c.space().clone())) {
            return Err(Error::Certification { axiom: "C1", detail: "the constant function is not in the cone".into() });
        }
    }
    let positive = cones.iter().all(LogHolderCone::is_positive_cone);
    let starts: Vec<i64> = (seq.n_min()..=seq.n_max()).collect();

    if positive {
        let k_max = 4 * seq.space(seq.n_min())?.len().max(2);
        let taus = starts.iter().map(|&n| positivity_time(seq, n, k_max)).collect::<Result<Vec<_>>>()?;
        let tau = taus.into_iter().flatten().max().ok_or_else(|| structural("window too short for positivity"))?;
        let (delta_measured, one_ratio) = starts
            .par_iter()
            .filter(|&&n| n + tau as i64 <= seq.n_max() + 1)
            .map(|&n| -> Result<(f64, f64)> {
                let sp = seq.space(n)?;
                let d = sp.len();
                let cols = (0..d)
                    .map(|a| {
                        let mut e = vec![0.0; d];
                        e[a] = 1.0;
                        seq.compose(n, tau, &Field::new(sp.clone(), e)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut worst = 0.0f64;
                for a in 0..d {
                    for b in a + 1..d {
                        worst = worst.max(theta_positive(&cols[a], &cols[b])?);
                    }
                }
                let one = seq.compose(n, tau, &Field::one(sp.clone()))?;
                Ok((worst, (one.sup() / one.inf()).ln()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
        return Ok(ConeCertificate {
            tau,
            delta_measured,
            one_image_log_ratio: one_ratio,
            s_q: None,
            invariance_checks: 0,
            density: "finite sample: differences of positive vectors span every vector",
        });
    }

    let declared = *seq
        .declared()
        .ok_or_else(|| structural("log-Hölder cone certification needs the declared H and ρ"))?;
    let s_q = declared.s_of(p.q);
    if !(s_q < p.q) {
        return Err(Error::Certification {
            axiom: "C3",
            detail: format!("S(Q) = {s_q} is not below Q = {}; Q must exceed H ρ^β / (1 - ρ^β) = {}", p.q, declared.q_threshold()),
        });
    }
    let tau = certify_a1_a4(seq)?.measured.tau;
    let per_stage = samples.div_ceil(seq.len()).max(1);

    // (C3) one-step invariance into the smaller cone Λ(S(Q)).
    starts
        .par_iter()
        .map(|&n| -> Result<()> {
            let stage = seq.stage(n)?;
            let src = cone_at(n);
            let dst = cone_at(n + 1).with_q(s_q)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for _ in 0..per_stage {
                let f = cone_element(src.space(), p, false, &mut rng);
                let g = stage.apply(&f)?;
                if !dst.contains(&g) {
                    return Err(Error::Certification {
                        axiom: "C3",
                        detail: format!("stage {n} maps a sampled element of Λ(Q) outside Λ(S(Q))"),
                    });
                }
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    // Diameter of τ-step images, sampled on boundary tents.
    let (delta_measured, one_ratio) = starts
        .par_iter()
        .filter(|&&n| n + tau as i64 <= seq.n_max() + 1)
        .map(|&n| -> Result<(f64, f64)> {
            let src = cone_at(n);
            let dst = cone_at(n + tau as i64);
            let images = extreme_elements(src.space(), p, TENT_CENTRES)
                .iter()
                .map(|f| seq.compose(n, tau, f))
                .collect::<Result<Vec<_>>>()?;
            let mut worst = 0.0f64;
            for a in 0..images.len() {
                for b in a + 1..images.len() {
                    worst = worst.max(dst.theta(&images[a], &images[b])?);
                }
            }
            let one = &images[0];
            Ok((worst, (one.sup() / one.inf()).ln()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
    if !delta_measured.is_finite() {
        return Err(Error::Certification { axiom: "C3", detail: "sampled image diameter is infinite".into() });
    }
    Ok(ConeCertificate {
        tau,
        delta_measured,
        one_image_log_ratio: one_ratio,
        s_q: Some(s_q),
        invariance_checks: per_stage * seq.len(),
        density: "Hölder functions are uniformly dense and lie in Λ(Q) - Λ(Q)",
    })
}
