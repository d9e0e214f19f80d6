//! Convex cones of functions and their Hilbert projective metrics.
//!
//! Two cones are used throughout: the cone `C+` of nonnegative, not
//! identically zero functions, whose Hilbert metric has the closed form
//! `log sup g(x) f(y) / (g(y) f(x))`, and the log-Hölder cone
//!
//! ```text
//! Λ(Q) = { f ∈ C+ : f(x) <= exp(Q d(x,x')^β) f(x')  whenever d(x,x') <= δ }.
//! ```
//!
//! On a finite sample, membership in `Λ(Q)` is a finite family of linear
//! inequalities `ℓ_{x,y}(f) = e^{Q d(x,y)^β} f(x) - f(y) >= 0` over the pairs
//! of distinct points within distance `δ`, together with pointwise
//! positivity. The Hilbert metric of `Λ(Q)` is then computed exactly from
//! the ratios `ℓ(g)/ℓ(f)` and `g(x)/f(x)`.

use std::sync::Arc;

use crate::error::{domain, Result};
use crate::spaces::{ensure_same, pair, Field, MeasureVec, PointSpace, SpaceKind};

/// Relative slack used by membership tests.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Relative spread below which two fields count as scalar multiples.
pub const PROJECTIVE_TOL: f64 = 1e-12;

/// Parameters of a log-Hölder cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeParams {
    pub q: f64,
    pub delta: f64,
    pub beta: f64,
}

impl ConeParams {
    pub fn new(q: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(domain(format!("cone constant Q must be positive, got {q}")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(domain(format!("locality radius δ must be positive, got {delta}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(domain(format!("Hölder exponent β must lie in (0,1], got {beta}")));
        }
        Ok(Self { q, delta, beta })
    }

    pub fn with_q(self, q: f64) -> Result<Self> {
        Self::new(q, self.delta, self.beta)
    }
}

/// Ordered pairs of distinct points at distance at most `δ`, closed under swap.
#[derive(Debug, Clone)]
pub struct PairSet {
    delta: f64,
    beta: f64,
    pairs: Vec<(u32, u32)>,
    /// `d(x,y)^β` for every pair.
    dist_pow: Vec<f64>,
}

impl PairSet {
    pub fn new(space: &PointSpace, delta: f64, beta: f64) -> Self {
        let n = space.len();
        let mut pairs = Vec::new();
        let mut dist_pow = Vec::new();
        match space.kind() {
            SpaceKind::CircleGrid => {
                // Grid distances are multiples of 1/n; only offsets up to δn qualify.
                let mut reach = ((delta * n as f64 + 1e-9).floor() as usize).min(n / 2);
                if beta == 1.0 {
                    // Lipschitz constraints chain along arcs, so neighbours already cut out the same cone.
                    reach = reach.min(1);
                }
                for i in 0..n {
                    for off in 1..=reach {
                        let d = space.dist(i, (i + off) % n);
                        if d > delta {
                            continue;
                        }
                        let (up, down) = ((i + off) % n, (i + n - off) % n);
                        pairs.push((i as u32, up as u32));
                        dist_pow.push(d.powf(beta));
                        if down != up {
                            pairs.push((i as u32, down as u32));
                            dist_pow.push(d.powf(beta));
                        }
                    }
                }
            }
            SpaceKind::FiniteDiscrete => {
                for i in 0..n {
                    for j in 0..n {
                        let d = space.dist(i, j);
                        if i != j && d <= delta {
                            pairs.push((i as u32, j as u32));
                            dist_pow.push(d.powf(beta));
                        }
                    }
                }
            }
        }
        Self { delta, beta, pairs, dist_pow }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs.iter().zip(&self.dist_pow).map(|(&(i, j), &r)| (i as usize, j as usize, r))
    }

    /// `max |f(x) - f(y)| / d(x,y)^β` over the pairs only.
    pub fn local_seminorm(&self, f: &Field) -> f64 {
        let v = f.values();
        self.iter().fold(0.0, |m: f64, (i, j, r)| m.max((v[i] - v[j]).abs() / r))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// The log-Hölder cone `Λ(Q)` on a fixed space, with its constraint set cached.
#[derive(Debug, Clone)]
pub struct LogHolderCone {
    params: ConeParams,
    space: Arc<PointSpace>,
    pairs: Arc<PairSet>,
    /// `exp(Q d^β)` for every pair.
    factors: Arc<Vec<f64>>,
}

impl LogHolderCone {
    pub fn new(space: Arc<PointSpace>, params: ConeParams) -> Self {
        let pairs = Arc::new(PairSet::new(&space, params.delta, params.beta));
        Self::with_pairs(space, params, pairs)
    }

    fn with_pairs(space: Arc<PointSpace>, params: ConeParams, pairs: Arc<PairSet>) -> Self {
        let factors = Arc::new(pairs.dist_pow.iter().map(|r| (params.q * r).exp()).collect());
        Self { params, space, pairs, factors }
    }

    /// Same space and pair set, different `Q`.
    pub fn with_q(&self, q: f64) -> Result<Self> {
        let params = self.params.with_q(q)?;
        Ok(Self::with_pairs(self.space.clone(), params, self.pairs.clone()))
    }

    pub fn params(&self) -> ConeParams {
        self.params
    }

    pub fn space(&self) -> &Arc<PointSpace> {
        &self.space
    }

    pub fn pairs(&self) -> &PairSet {
        &self.pairs
    }

    /// True when the constraint set is empty, so the cone is all of `C+`.
    pub fn is_positive_cone(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, f: &Field) -> bool {
        if !crate::spaces::same_space(&self.space, f.space()) || !in_positive_cone(f) {
            return false;
        }
        let v = f.values();
        self.pairs
            .iter()
            .zip(self.factors.iter())
            .all(|((i, j, _), e)| v[j] <= e * v[i] * (1.0 + MEMBERSHIP_SLACK))
    }

    /// `A(f,g)` and `B(f,g)` for the order of `Λ(Q)`.
    pub fn gap(&self, f: &Field, g: &Field) -> Result<(f64, f64)> {
        ensure_same(&self.space, f.space(), "cone gap")?;
        ensure_same(&self.space, g.space(), "cone gap")?;
        if !self.contains(f) || !self.contains(g) {
            return Err(domain("both arguments must lie in the log-Hölder cone"));
        }
        let (mut a, mut b) = hilbert_gap_positive(f, g)?;
        let (fv, gv) = (f.values(), g.values());
        for ((i, j, _), &e) in self.pairs.iter().zip(self.factors.iter()) {
            let (lf, sf) = (e * fv[i] - fv[j], e * fv[i] + fv[j]);
            let (lg, sg) = (e * gv[i] - gv[j], e * gv[i] + gv[j]);
            let lg = if lg <= MEMBERSHIP_SLACK * sg { 0.0 } else { lg };
            if lf <= MEMBERSHIP_SLACK * sf {
                // t f - g in the cone needs ℓ(g) <= 0 on this pair; otherwise no finite B.
                if lg > 0.0 {
                    b = f64::INFINITY;
                }
                continue;
            }
            let r = lg / lf;
            a = a.min(r);
            b = b.max(r);
        }
        Ok((a, b))
    }

    /// The Hilbert projective metric of `Λ(Q)`. Returns `+∞` for incomparable pairs.
    pub fn theta(&self, f: &Field, g: &Field) -> Result<f64> {
        let (a, b) = self.gap(f, g)?;
        Ok(theta_from_gap(a, b))
    }
}

fn theta_from_gap(a: f64, b: f64) -> f64 {
    if !(a > 0.0) || !b.is_finite() {
        return f64::INFINITY;
    }
    if b - a <= PROJECTIVE_TOL * a {
        return 0.0;
    }
    (b / a).ln()
}

/// Membership in `C+`: nonnegative and not identically zero.
pub fn in_positive_cone(f: &Field) -> bool {
    f.values().iter().all(|&v| v >= 0.0) && f.values().iter().any(|&v| v > 0.0)
}

/// Membership in `Λ(Q)` for the given parameters.
pub fn in_log_holder_cone(f: &Field, p: ConeParams) -> bool {
    LogHolderCone::new(f.space().clone(), p).contains(f)
}

/// `A = min g/f`, `B = max g/f` for the pointwise order of `C+`.
///
/// A point where `f` vanishes and `g` does not makes `B` infinite; a point
/// where both vanish imposes nothing.
pub fn hilbert_gap_positive(f: &Field, g: &Field) -> Result<(f64, f64)> {
    ensure_same(f.space(), g.space(), "Hilbert gap")?;
    let mut a = f64::INFINITY;
    let mut b = 0.0f64;
    for (&x, &y) in f.values().iter().zip(g.values()) {
        if x > 0.0 {
            let r = y / x;
            a = a.min(r);
            b = b.max(r);
        } else if y > 0.0 {
            b = f64::INFINITY;
        }
    }
    Ok((a, b))
}

/// Hilbert metric of `C+`: `log sup_{x,y} g(x) f(y) / (g(y) f(x))`.
pub fn theta_positive(f: &Field, g: &Field) -> Result<f64> {
    let (a, b) = hilbert_gap_positive(f, g)?;
    Ok(theta_from_gap(a, b))
}

/// Hilbert metric of `Λ(Q)` with a freshly built pair set.
pub fn theta_log_holder(f: &Field, g: &Field, p: ConeParams) -> Result<f64> {
    LogHolderCone::new(f.space().clone(), p).theta(f, g)
}

/// Birkhoff contraction factor `tanh(Δ/4)`, equal to 1 for infinite diameter.
pub fn birkhoff_rate(diameter: f64) -> Result<f64> {
    if diameter.is_nan() || diameter < 0.0 {
        return Err(domain(format!("projective diameter must be nonnegative, got {diameter}")));
    }
    if diameter.is_infinite() {
        return Ok(1.0);
    }
    Ok((diameter / 4.0).tanh())
}

/// Both sides of `||f-g|| <= (e^{Θ+(f,g)} - 1) min(||f||, ||g||)` for
/// `m`-normalized `f, g ∈ C+`.
pub fn norm_theta_bound(f: &Field, g: &Field, m: &MeasureVec) -> Result<(f64, f64)> {
    if !in_positive_cone(f) || !in_positive_cone(g) {
        return Err(domain("norm/metric comparison needs nonnegative fields"));
    }
    if (m.total_mass() - 1.0).abs() > 1e-10 {
        return Err(domain("reference measure must be a probability measure"));
    }
    let (pf, pg) = (pair(f, m)?, pair(g, m)?);
    if (pf - 1.0).abs() > 1e-10 || (pg - 1.0).abs() > 1e-10 {
        return Err(domain(format!("fields must be normalized, got <f,m> = {pf}, <g,m> = {pg}")));
    }
    let lhs = f.sup_dist(g)?;
    let theta = theta_positive(f, g)?;
    let rhs = if lhs == 0.0 && theta == 0.0 { 0.0 } else { theta.exp_m1() * f.sup_norm().min(g.sup_norm()) };
    Ok((lhs, rhs))
}

/// Right-hand side `R^{-1}(e^R - 1) e^S Θ` of the norm bound for a family of
/// normalized fields with `Θ+`-diameter at most `R` and `Θ+(·,1) <= S`.
pub fn norm_theta_family_bound(diam: f64, s: f64, theta: f64) -> f64 {
    let slope = if diam > 0.0 { diam.exp_m1() / diam } else { 1.0 };
    slope * s.exp() * theta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: &[f64]) -> Field {
        Field::new(PointSpace::discrete(v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn positive_cone_membership() {
        let s = PointSpace::discrete(3);
        assert!(in_positive_cone(&Field::one(s.clone())));
        assert!(!in_positive_cone(&Field::constant(s, 0.0)));
        assert!(!in_positive_cone(&field(&[1.0, -0.1])));
    }

    #[test]
    fn log_holder_membership() {
        let g = PointSpace::circle_grid(64).unwrap();
        let p = ConeParams::new(2.0, 0.2, 1.0).unwrap();
        assert!(in_log_holder_cone(&Field::constant(g.clone(), 5.0), p));
        // Saturates the constraint along the geodesic away from 0.
        let f = Field::from_coords(g.clone(), |x| (2.0 * x.min(1.0 - x)).exp()).unwrap();
        assert!(in_log_holder_cone(&f, p));
        assert!(!in_log_holder_cone(&f, p.with_q(1.9).unwrap()));
        let mut v = vec![1.0; 64];
        v[10] = 0.0;
        assert!(!in_log_holder_cone(&Field::new(g, v).unwrap(), p));
    }

    #[test]
    fn positive_gap_examples() {
        let f = field(&[1.0, 1.0]);
        let g = field(&[1.0, 2.0]);
        assert_eq!(hilbert_gap_positive(&f, &g).unwrap(), (1.0, 2.0));
        let f = field(&[1.0, 2.0]);
        let g = field(&[2.0, 1.0]);
        assert_eq!(hilbert_gap_positive(&f, &g).unwrap(), (0.5, 2.0));
        let (a, b) = hilbert_gap_positive(&f, &f.scaled(3.0)).unwrap();
        assert_eq!((a, b), (3.0, 3.0));
        let (_, b) = hilbert_gap_positive(&field(&[0.0, 1.0]), &field(&[1.0, 1.0])).unwrap();
        assert!(b.is_infinite());
        // A common zero imposes no constraint.
        assert_eq!(hilbert_gap_positive(&field(&[0.0, 1.0]), &field(&[0.0, 2.0])).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn theta_positive_examples() {
        let f = field(&[1.0, 2.0]);
        assert_eq!(theta_positive(&f, &f.scaled(2.0)).unwrap(), 0.0);
        let g = field(&[2.0, 1.0]);
        assert!((theta_positive(&f, &g).unwrap() - 4f64.ln()).abs() < 1e-15);
        let f = field(&[1.0, 4.0]);
        let one = Field::one(f.space().clone());
        assert!((theta_positive(&f, &one).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(theta_positive(&field(&[0.0, 1.0]), &field(&[1.0, 1.0])).unwrap().is_infinite());
    }

    #[test]
    fn log_holder_theta_trivial_cases() {
        let g = PointSpace::circle_grid(32).unwrap();
        let p = ConeParams::new(1.5, 0.1, 1.0).unwrap();
        let cone = LogHolderCone::new(g.clone(), p);
        let one = Field::one(g.clone());
        assert_eq!(cone.theta(&one, &one).unwrap(), 0.0);
        let f = Field::from_coords(g.clone(), |x| (0.2 * (std::f64::consts::TAU * x).sin()).exp()).unwrap();
        assert_eq!(cone.theta(&f, &f.scaled(7.0)).unwrap(), 0.0);
        let outside = Field::from_coords(g, |x| (5.0 * (std::f64::consts::TAU * x).sin()).exp()).unwrap();
        assert!(cone.theta(&f, &outside).is_err());
    }

    #[test]
    fn boundary_constraint_forces_infinite_distance() {
        // f saturates a constraint that g leaves slack, so no finite B exists.
        let s = PointSpace::finite(vec![vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap();
        let p = ConeParams::new(1.0, 0.5, 1.0).unwrap();
        let cone = LogHolderCone::new(s.clone(), p);
        let e = 0.1f64.exp();
        let f = Field::new(s.clone(), vec![1.0, e]).unwrap();
        let g = Field::one(s);
        assert!(cone.contains(&f) && cone.contains(&g));
        assert!(cone.theta(&f, &g).unwrap().is_infinite());
        assert!(theta_positive(&f, &g).unwrap().is_finite());
    }

    #[test]
    fn birkhoff_rate_examples() {
        assert_eq!(birkhoff_rate(f64::INFINITY).unwrap(), 1.0);
        assert!((birkhoff_rate(4.0).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!(birkhoff_rate(1e-12).unwrap() < 1e-12);
        assert_eq!(birkhoff_rate(0.0).unwrap(), 0.0);
        assert!(birkhoff_rate(-1.0).is_err());
    }

    #[test]
    fn norm_theta_examples() {
        let s = PointSpace::discrete(2);
        let m = MeasureVec::uniform(s.clone());
        let f = Field::new(s.clone(), vec![0.5, 1.5]).unwrap();
        assert_eq!(norm_theta_bound(&f, &f, &m).unwrap(), (0.0, 0.0));
        let g = Field::new(s.clone(), vec![1.5, 0.5]).unwrap();
        let (lhs, rhs) = norm_theta_bound(&f, &g, &m).unwrap();
        assert!((lhs - 1.0).abs() < 1e-15);
        assert!((rhs - 12.0).abs() < 1e-12);
        let h = Field::new(s, vec![1.0, 2.0]).unwrap();
        assert!(norm_theta_bound(&f, &h, &m).is_err());
    }

    #[test]
    fn pair_set_is_swap_closed() {
        for (n, delta) in [(16usize, 0.2), (10, 0.5), (7, 0.3)] {
            let g = PointSpace::circle_grid(n).unwrap();
            let ps = PairSet::new(&g, delta, 0.7);
            let set: std::collections::HashSet<(usize, usize)> = ps.iter().map(|(i, j, _)| (i, j)).collect();
            assert_eq!(set.len(), ps.len(), "duplicates for n={n}");
            let mut brute = 0;
            for i in 0..n {
                for j in 0..n {
                    if i != j && g.dist(i, j) <= delta {
                        brute += 1;
                        assert!(set.contains(&(i, j)) && set.contains(&(j, i)));
                    }
                }
            }
            assert_eq!(brute, ps.len());
        }
    }

    #[test]
    fn lipschitz_neighbour_constraints_give_the_full_metric() {
        use rand::SeedableRng;
        let g = PointSpace::circle_grid(40).unwrap();
        let p = ConeParams::new(3.0, 0.2, 1.0).unwrap();
        assert_eq!(PairSet::new(&g, p.delta, 1.0).len(), 80);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let f = crate::sample::cone_element(&g, p, false, &mut rng);
            let h = crate::sample::cone_element(&g, p, false, &mut rng);
            let (fv, hv) = (f.values(), h.values());
            let (mut a, mut b) = (f64::INFINITY, 0.0f64);
            for i in 0..40 {
                a = a.min(hv[i] / fv[i]);
                b = b.max(hv[i] / fv[i]);
                for j in 0..40 {
                    let d = g.dist(i, j);
                    if i != j && d <= p.delta {
                        let e = (p.q * d).exp();
                        let (lf, lh) = (e * fv[i] - fv[j], e * hv[i] - hv[j]);
                        a = a.min(lh / lf);
                        b = b.max(lh / lf);
                    }
                }
            }
            let t = theta_log_holder(&f, &h, p).unwrap();
            assert!((t - (b / a).ln()).abs() < 1e-10 * (1.0 + t), "{t} vs {}", (b / a).ln());
        }
    }
}
