//! Nonstationary transfer operators.
//!
//! A [`Stage`] is one step `T_n: X_n -> X_{n+1}` of the dynamics together
//! with its weights `e^{φ_n(y)}`, stored backwards as preimage lists so that
//!
//! ```text
//! (L_n f)(x) = Σ_{y ∈ T_n^{-1}(x)} e^{φ_n(y)} f(y).
//! ```
//!
//! On circle grids the preimages of grid points are off-grid; `f(y)` is then
//! read by linear interpolation between the two neighbouring grid values,
//! which keeps the operator positive. The dual `L_n*` is the exact transpose
//! of whatever stencil `L_n` uses, so `<f, L* σ> = <L f, σ>` holds to roundoff.
//! Normalized stages fold `h_n` into the stencil coefficients, so that
//! `L̃ f = L(h_n f) / (λ_n h_{n+1})` holds exactly on the grid as well.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain as domain_err, structural, Error, Result};
use crate::hypotheses::HypothesisParams;
use crate::spaces::{circle_distance, ensure_same, Field, MeasureVec, PointSpace, SpaceKind};

/// How a preimage reads a function on the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stencil {
    /// Exactly at a sample point.
    Node(u32),
    /// `a f[lo] + b f[hi]`; linear interpolation has `a = 1 - t`, `b = t`.
    Pair { lo: u32, hi: u32, a: f64, b: f64 },
}

impl Stencil {
    #[inline]
    pub fn read(&self, v: &[f64]) -> f64 {
        match *self {
            Stencil::Node(i) => v[i as usize],
            Stencil::Pair { lo, hi, a, b } => a * v[lo as usize] + b * v[hi as usize],
        }
    }

    #[inline]
    fn scatter(&self, out: &mut [f64], mass: f64) {
        match *self {
            Stencil::Node(i) => out[i as usize] += mass,
            Stencil::Pair { lo, hi, a, b } => {
                out[lo as usize] += a * mass;
                out[hi as usize] += b * mass;
            }
        }
    }

    /// Absorbs a multiplier `h` on the domain: reading `f` now reads `h f`.
    fn weighted(&self, h: &[f64]) -> (Self, f64) {
        match *self {
            Stencil::Node(i) => (*self, h[i as usize]),
            Stencil::Pair { lo, hi, a, b } => {
                (Stencil::Pair { lo, hi, a: a * h[lo as usize], b: b * h[hi as usize] }, 1.0)
            }
        }
    }

    fn from_coord(space: &PointSpace, y: f64) -> Self {
        let (lo, hi, t) = space.stencil(y).expect("circle grid");
        // Branch inverses are solved to BRANCH_TOL; within that of a node, read the node.
        if t <= NODE_SNAP {
            Stencil::Node(lo as u32)
        } else if t >= 1.0 - NODE_SNAP {
            Stencil::Node(hi as u32)
        } else {
            Stencil::Pair { lo: lo as u32, hi: hi as u32, a: 1.0 - t, b: t }
        }
    }
}

/// Interpolation fractions this close to 0 or 1 are read at the node.
const NODE_SNAP: f64 = 1e-9;

/// One branch `y` of `T_n^{-1}(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub stencil: Stencil,
    /// `e^{φ_n(y)}`.
    pub weight: f64,
    /// Exact circle coordinate of `y`, when the domain is a circle grid.
    pub coord: Option<f64>,
}

/// Where the forward map sends the sample points of the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Forward {
    /// A map between finite sample sets.
    Indices(Vec<usize>),
    /// Exact circle coordinates of `T_n(x_i)`; generally off-grid.
    Coords(Vec<f64>),
    /// Transfer-matrix encoding of a full shift: the state `a` is the first
    /// symbol of a sequence, so `T_n` does not act on states and `f ∘ T_n`
    /// depends on two consecutive symbols.
    Symbolic,
}

/// A continuous degree-`d` circle map given by its lift, plus a potential.
pub trait ContinuumLaw: Send + Sync + fmt::Debug {
    /// Increasing lift `F` with `F(x + 1) = F(x) + degree`.
    fn lift(&self, x: f64) -> f64;
    fn potential(&self, x: f64) -> f64;
    fn degree(&self) -> usize;

    fn map(&self, x: f64) -> f64 {
        self.lift(x).rem_euclid(1.0)
    }
}

/// Bisection tolerance for branch inverses.
pub const BRANCH_TOL: f64 = 1e-13;

/// Solves `F(y) = target` for `y ∈ [0, 1]` by bisection.
fn invert_lift(law: &dyn ContinuumLaw, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        if hi - lo <= 0.1 * BRANCH_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if law.lift(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All `degree` preimages of the circle point `x` under `law`.
pub fn branch_preimages(law: &dyn ContinuumLaw, x: f64) -> Vec<f64> {
    let f0 = law.lift(0.0);
    let first = (f0 - x).ceil();
    (0..law.degree())
        .map(|b| invert_lift(law, x + first + b as f64).rem_euclid(1.0))
        .collect()
}

#[derive(Clone)]
pub struct Stage {
    domain: Arc<PointSpace>,
    codomain: Arc<PointSpace>,
    preimages: Vec<Vec<Preimage>>,
    forward: Forward,
    potential: Option<Field>,
    law: Option<Arc<dyn ContinuumLaw>>,
}

impl fmt::Debug for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stage")
            .field("domain", &(self.domain.kind(), self.domain.len()))
            .field("codomain", &(self.codomain.kind(), self.codomain.len()))
            .field("degree", &self.degree())
            .field("law", &self.law)
            .finish()
    }
}

impl Stage {
    /// A map between finite sample sets with potential `φ` on the domain.
    pub fn finite_map(codomain: Arc<PointSpace>, forward: Vec<usize>, potential: Field) -> Result<Self> {
        let domain = potential.space().clone();
        if forward.len() != domain.len() {
            return Err(structural("forward map must be defined on every domain point"));
        }
        let mut preimages = vec![Vec::new(); codomain.len()];
        for (y, &x) in forward.iter().enumerate() {
            let slot = preimages.get_mut(x).ok_or_else(|| structural(format!("T({y}) = {x} is outside the codomain")))?;
            slot.push(Preimage { stencil: Stencil::Node(y as u32), weight: potential.values()[y].exp(), coord: None });
        }
        if let Some(x) = preimages.iter().position(Vec::is_empty) {
            return Err(domain_err(format!("codomain point {x} has no preimage")));
        }
        Ok(Self { domain, codomain, preimages, forward: Forward::Indices(forward), potential: Some(potential), law: None })
    }

    /// Transfer-matrix stage: `(L f)(b) = Σ_a M[b][a] f(a)`.
    pub fn symbolic(domain: Arc<PointSpace>, codomain: Arc<PointSpace>, matrix: &[Vec<f64>]) -> Result<Self> {
        if matrix.len() != codomain.len() {
            return Err(structural("matrix needs one row per codomain state"));
        }
        let mut preimages = Vec::with_capacity(matrix.len());
        for (b, row) in matrix.iter().enumerate() {
            if row.len() != domain.len() {
                return Err(structural(format!("matrix row {b} has {} entries, expected {}", row.len(), domain.len())));
            }
            let mut list = Vec::with_capacity(row.len());
            for (a, &w) in row.iter().enumerate() {
                if !(w > 0.0) || !w.is_finite() {
                    return Err(domain_err(format!("matrix entry ({b},{a}) = {w} is not strictly positive")));
                }
                list.push(Preimage { stencil: Stencil::Node(a as u32), weight: w, coord: None });
            }
            preimages.push(list);
        }
        Ok(Self { domain, codomain, preimages, forward: Forward::Symbolic, potential: None, law: None })
    }

    /// Circle-grid stage from a continuum law; branch inverses by bisection.
    pub fn from_law(domain: Arc<PointSpace>, codomain: Arc<PointSpace>, law: Arc<dyn ContinuumLaw>) -> Result<Self> {
        if domain.kind() != SpaceKind::CircleGrid || codomain.kind() != SpaceKind::CircleGrid {
            return Err(structural("continuum laws act on circle grids"));
        }
        let n_cod = codomain.len();
        let mut preimages = Vec::with_capacity(n_cod);
        for j in 0..n_cod {
            let x = j as f64 / n_cod as f64;
            let list = branch_preimages(law.as_ref(), x)
                .into_iter()
                .map(|y| {
                    let miss = circle_distance(law.map(y), x);
                    if miss >= 1e-12 {
                        return Err(domain_err(format!("branch inverse missed {x} by {miss:e}")));
                    }
                    Ok(Preimage { stencil: Stencil::from_coord(&domain, y), weight: law.potential(y).exp(), coord: Some(y) })
                })
                .collect::<Result<Vec<_>>>()?;
            preimages.push(list);
        }
        let n_dom = domain.len();
        let forward = Forward::Coords((0..n_dom).map(|i| law.map(i as f64 / n_dom as f64)).collect());
        let potential = Field::from_coords(domain.clone(), |x| law.potential(x))?;
        Ok(Self { domain, codomain, preimages, forward, potential: Some(potential), law: Some(law) })
    }

    pub fn domain(&self) -> &Arc<PointSpace> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<PointSpace> {
        &self.codomain
    }

    pub fn preimages(&self) -> &[Vec<Preimage>] {
        &self.preimages
    }

    pub fn forward(&self) -> &Forward {
        &self.forward
    }

    pub fn potential(&self) -> Option<&Field> {
        self.potential.as_ref()
    }

    pub fn law(&self) -> Option<&Arc<dyn ContinuumLaw>> {
        self.law.as_ref()
    }

    /// Largest preimage count.
    pub fn degree(&self) -> usize {
        self.preimages.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub(crate) fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        self.preimages
            .iter()
            .map(|list| list.iter().fold(0.0, |acc, p| acc + p.weight * p.stencil.read(f)))
            .collect()
    }

    pub(crate) fn dual_values(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.len()];
        for (list, &mass) in self.preimages.iter().zip(w) {
            if mass == 0.0 {
                continue;
            }
            for p in list {
                p.stencil.scatter(&mut out, mass * p.weight);
            }
        }
        out
    }

    /// `L_n f`.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        ensure_same(&self.domain, f.space(), "transfer operator argument")?;
        Ok(Field::from_raw(self.codomain.clone(), self.apply_values(f.values())))
    }

    /// `L_n* σ`.
    pub fn apply_dual(&self, sigma: &MeasureVec) -> Result<MeasureVec> {
        ensure_same(&self.codomain, sigma.space(), "dual operator argument")?;
        Ok(MeasureVec::from_raw(self.domain.clone(), self.dual_values(sigma.weights())))
    }

    /// `f ∘ T_n` for `f` on the codomain. Interpolates on circle grids.
    pub fn compose_forward(&self, f: &Field) -> Result<Field> {
        ensure_same(&self.codomain, f.space(), "composition with the forward map")?;
        let values = match &self.forward {
            Forward::Indices(idx) => idx.iter().map(|&j| f.values()[j]).collect(),
            Forward::Coords(xs) => xs.iter().map(|&x| f.interpolate(x).expect("circle grid")).collect(),
            Forward::Symbolic => {
                return Err(structural("f ∘ T is not a function of the state for transfer-matrix stages"))
            }
        };
        Ok(Field::from_raw(self.domain.clone(), values))
    }

    /// The operator `f ↦ L(h_dom f) / (λ h_cod)` as a stage on the same branches.
    pub fn normalized(&self, h_dom: &Field, h_cod: &Field, lambda: f64) -> Result<Stage> {
        ensure_same(&self.domain, h_dom.space(), "normalizing function on the domain")?;
        ensure_same(&self.codomain, h_cod.space(), "normalizing function on the codomain")?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(domain_err(format!("normalizing eigenvalue must be positive, got {lambda}")));
        }
        if h_dom.inf() <= 0.0 || h_cod.inf() <= 0.0 {
            return Err(domain_err("normalizing functions must be strictly positive"));
        }
        let hd = h_dom.values();
        let preimages = self
            .preimages
            .iter()
            .zip(h_cod.values())
            .map(|(list, &hx)| {
                list.iter()
                    .map(|p| {
                        let (stencil, h) = p.stencil.weighted(hd);
                        Preimage { stencil, weight: p.weight * h / (lambda * hx), coord: p.coord }
                    })
                    .collect()
            })
            .collect();
        let potential = match (&self.potential, &self.forward) {
            (Some(phi), Forward::Indices(_)) | (Some(phi), Forward::Coords(_)) => {
                let h_at_image = self.compose_forward(h_cod)?;
                let v = phi
                    .values()
                    .iter()
                    .zip(hd)
                    .zip(h_at_image.values())
                    .map(|((p, h0), h1)| p + h0.ln() - h1.ln() - lambda.ln())
                    .collect();
                Some(Field::from_raw(self.domain.clone(), v))
            }
            _ => None,
        };
        Ok(Stage {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            preimages,
            forward: self.forward.clone(),
            potential,
            law: None,
        })
    }
}

/// Normalized stage; its potential is `φ̃ = φ + log h_dom - log h_cod ∘ T - log λ`.
pub fn normalize_stage(s: &Stage, h_dom: &Field, h_cod: &Field, lambda: f64) -> Result<Stage> {
    s.normalized(h_dom, h_cod, lambda)
}

/// A window `[n_min, n_max]` of consecutive stages. Stage `n` maps `X_n` to `X_{n+1}`.
#[derive(Debug, Clone)]
pub struct StageSeq {
    start: i64,
    stages: Vec<Stage>,
    two_sided: bool,
    degree: usize,
    declared: Option<HypothesisParams>,
}

impl StageSeq {
    pub fn new(start: i64, stages: Vec<Stage>, two_sided: bool) -> Result<Self> {
        if stages.is_empty() {
            return Err(structural("a stage sequence needs at least one stage"));
        }
        for (k, w) in stages.windows(2).enumerate() {
            if !crate::spaces::same_space(w[0].codomain(), w[1].domain()) {
                return Err(structural(format!(
                    "codomain of stage {} differs from domain of stage {}",
                    start + k as i64,
                    start + k as i64 + 1
                )));
            }
        }
        let degree = stages.iter().map(Stage::degree).max().unwrap_or(0);
        Ok(Self { start, stages, two_sided, degree, declared: None })
    }

    /// Attaches analytically known hypothesis parameters of the family.
    pub fn with_declared(mut self, params: HypothesisParams) -> Result<Self> {
        if self.degree > params.degree {
            return Err(Error::Certification {
                axiom: "A1",
                detail: format!("observed preimage count {} exceeds declared D = {}", self.degree, params.degree),
            });
        }
        self.declared = Some(params);
        Ok(self)
    }

    pub fn declared(&self) -> Option<&HypothesisParams> {
        self.declared.as_ref()
    }

    pub fn n_min(&self) -> i64 {
        self.start
    }

    pub fn n_max(&self) -> i64 {
        self.start + self.stages.len() as i64 - 1
    }

    pub fn two_sided(&self) -> bool {
        self.two_sided
    }

    /// Maximum preimage count over the window.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stages(&self) -> impl Iterator<Item = (i64, &Stage)> {
        self.stages.iter().enumerate().map(move |(k, s)| (self.start + k as i64, s))
    }

    pub fn stage(&self, n: i64) -> Result<&Stage> {
        if n < self.n_min() || n > self.n_max() {
            return Err(structural(format!("stage {n} outside window [{}, {}]", self.n_min(), self.n_max())));
        }
        Ok(&self.stages[(n - self.start) as usize])
    }

    /// `X_n` for `n ∈ [n_min, n_max + 1]`.
    pub fn space(&self, n: i64) -> Result<&Arc<PointSpace>> {
        if n == self.n_max() + 1 {
            return Ok(self.stages.last().expect("nonempty").codomain());
        }
        Ok(self.stage(n)?.domain())
    }

    fn check_window(&self, n: i64, k: usize) -> Result<()> {
        if n < self.n_min() || n + k as i64 > self.n_max() + 1 {
            return Err(structural(format!(
                "composition window [{n}, {}] outside [{}, {}]",
                n + k as i64,
                self.n_min(),
                self.n_max() + 1
            )));
        }
        Ok(())
    }

    /// `L_{n+k-1} ∘ ... ∘ L_n f`.
    pub fn compose(&self, n: i64, k: usize, f: &Field) -> Result<Field> {
        self.check_window(n, k)?;
        ensure_same(self.space(n)?, f.space(), "composition argument")?;
        let mut v = f.values().to_vec();
        for j in 0..k as i64 {
            v = self.stage(n + j)?.apply_values(&v);
        }
        Ok(Field::from_raw(self.space(n + k as i64)?.clone(), v))
    }

    /// `(L_n^k)* σ = L_n* ∘ ... ∘ L_{n+k-1}* σ` for `σ` on `X_{n+k}`.
    pub fn compose_dual(&self, n: i64, k: usize, sigma: &MeasureVec) -> Result<MeasureVec> {
        self.check_window(n, k)?;
        ensure_same(self.space(n + k as i64)?, sigma.space(), "dual composition argument")?;
        let mut w = sigma.weights().to_vec();
        for j in (0..k as i64).rev() {
            w = self.stage(n + j)?.dual_values(&w);
        }
        Ok(MeasureVec::from_raw(self.space(n)?.clone(), w))
    }

    /// Birkhoff sum `Σ_{j<k} φ_{n+j}(T_n^j y)` on the sample points of `X_n`.
    pub fn birkhoff_sum(&self, n: i64, k: usize) -> Result<Field> {
        self.check_window(n, k)?;
        let dom = self.space(n)?.clone();
        let mut acc = vec![0.0; dom.len()];
        if k == 0 {
            return Ok(Field::from_raw(dom, acc));
        }
        let first = self.stage(n)?;
        match first.forward() {
            Forward::Indices(_) => {
                let mut pos: Vec<usize> = (0..dom.len()).collect();
                for j in 0..k as i64 {
                    let s = self.stage(n + j)?;
                    let (Forward::Indices(idx), Some(phi)) = (s.forward(), s.potential()) else {
                        return Err(structural("mixed stage kinds in Birkhoff sum"));
                    };
                    for (a, p) in acc.iter_mut().zip(pos.iter_mut()) {
                        *a += phi.values()[*p];
                        *p = idx[*p];
                    }
                }
            }
            Forward::Coords(_) => {
                let mut pos: Vec<f64> = (0..dom.len()).map(|i| dom.coord(i).expect("circle")).collect();
                for j in 0..k as i64 {
                    let law = self
                        .stage(n + j)?
                        .law()
                        .ok_or_else(|| structural("Birkhoff sums off the grid need a continuum law"))?
                        .clone();
                    for (a, x) in acc.iter_mut().zip(pos.iter_mut()) {
                        *a += law.potential(*x);
                        *x = law.map(*x);
                    }
                }
            }
            Forward::Symbolic => {
                return Err(structural("Birkhoff sums of transfer-matrix stages depend on symbol paths, not states"))
            }
        }
        Ok(Field::from_raw(dom, acc))
    }
}
