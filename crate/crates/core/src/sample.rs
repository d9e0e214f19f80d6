//! Random and extremal elements of the cones, for sampled checks.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;

use crate::cones::ConeParams;
use crate::spaces::{Field, PointSpace, SpaceKind};

/// Strict-interior margin so boundary samples survive roundoff.
const EDGE: f64 = 1.0 - 1e-9;

/// `exp(Σ c_j d(x, x_j)^β)` with random centres and `Σ|c_j| ≤ u Q`.
pub fn bump_product(space: &Arc<PointSpace>, p: ConeParams, rng: &mut impl Rng) -> Field {
    let n = space.len();
    let terms = rng.random_range(1..=4);
    let budget = p.q * EDGE * rng.random::<f64>();
    let raw: Vec<f64> = (0..terms).map(|_| rng.random_range(-1.0..1.0)).collect();
    let total: f64 = raw.iter().map(|c| c.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let centres: Vec<usize> = (0..terms).map(|_| rng.random_range(0..n)).collect();
    let scale = rng.random_range(-2.0..2.0f64).exp();
    let v = (0..n)
        .map(|x| {
            let s: f64 = raw
                .iter()
                .zip(&centres)
                .map(|(c, &j)| budget * c / total * space.dist(x, j).powf(p.beta))
                .sum();
            scale * s.exp()
        })
        .collect();
    Field::new(space.clone(), v).expect("finite samples")
}

/// `exp(Σ a_k cos(2πk x + θ_k))` with `Σ 2πk|a_k| ≤ u Q`; circle grids only.
pub fn fourier_log_field(space: &Arc<PointSpace>, p: ConeParams, rng: &mut impl Rng) -> Field {
    debug_assert_eq!(space.kind(), SpaceKind::CircleGrid);
    let modes = rng.random_range(1..=6usize);
    let budget = p.q * EDGE * rng.random::<f64>();
    let raw: Vec<(f64, f64)> = (1..=modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..TAU))).collect();
    let lip: f64 = raw.iter().enumerate().map(|(k, (a, _))| TAU * (k + 1) as f64 * a.abs()).sum::<f64>();
    let amp = if lip > 0.0 { budget / lip } else { 0.0 };
    let scale = rng.random_range(-2.0..2.0f64).exp();
    Field::from_coords(space.clone(), |x| {
        let s: f64 = raw.iter().enumerate().map(|(k, (a, th))| a * (TAU * (k + 1) as f64 * x + th).cos()).sum();
        scale * (amp * s).exp()
    })
    .expect("finite samples")
}

/// Strictly positive vector with log-entries in `[-3, 3]`.
pub fn positive_vector(space: &Arc<PointSpace>, rng: &mut impl Rng) -> Field {
    Field::new(space.clone(), (0..space.len()).map(|_| rng.random_range(-3.0..3.0f64).exp()).collect())
        .expect("finite samples")
}

/// A random element of `Λ(Q)`, or of `C⁺` when `positive` is set.
pub fn cone_element(space: &Arc<PointSpace>, p: ConeParams, positive: bool, rng: &mut impl Rng) -> Field {
    if positive {
        return positive_vector(space, rng);
    }
    match rng.random_range(0..3) {
        0 => bump_product(space, p, rng),
        1 if space.kind() == SpaceKind::CircleGrid => fourier_log_field(space, p, rng),
        _ => {
            let a = bump_product(space, p, rng);
            let b = if space.kind() == SpaceKind::CircleGrid {
                fourier_log_field(space, p, rng)
            } else {
                bump_product(space, p, rng)
            };
            let t = rng.random::<f64>();
            a.lin_comb(t, &b, 1.0 - t).expect("same space")
        }
    }
}

/// Boundary elements of `Λ(Q)`, plus `𝟙`.
///
/// Tents `exp(±Q d(x, x_j)^β)` at `count` evenly spaced centres, and on circle
/// grids the waves `exp(±Q d(x, c + 2^{-j} ℤ)^β)` at four phases for every
/// dyadic period of at least four grid steps. Fine waves stay coherent under
/// the inverse branches of degree-two maps, so they spread the images further
/// than tents do.
pub fn extreme_elements(space: &Arc<PointSpace>, p: ConeParams, count: usize) -> Vec<Field> {
    let n = space.len();
    let mut out = vec![Field::one(space.clone())];
    let mut push = |d: &dyn Fn(usize) -> f64| {
        for sign in [1.0, -1.0] {
            let v = (0..n).map(|x| (sign * p.q * EDGE * d(x).powf(p.beta)).exp()).collect();
            out.push(Field::new(space.clone(), v).expect("finite"));
        }
    };
    for c in 0..count.min(n) {
        let j = c * n / count.min(n);
        push(&|x| space.dist(x, j));
    }
    if space.kind() == SpaceKind::CircleGrid {
        let mut period = 0.5;
        while period * n as f64 >= 4.0 {
            for phase in 0..4 {
                let c = phase as f64 * period / 4.0;
                push(&|x| {
                    let t = (space.coord(x).unwrap() - c).rem_euclid(period);
                    t.min(period - t)
                });
            }
            period /= 2.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::LogHolderCone;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_lie_in_the_cone() {
        let g = PointSpace::circle_grid(128).unwrap();
        let p = ConeParams::new(2.0, 0.1, 1.0).unwrap();
        let cone = LogHolderCone::new(g.clone(), p);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            assert!(cone.contains(&cone_element(&g, p, false, &mut rng)));
        }
        for f in extreme_elements(&g, p, 16) {
            assert!(cone.contains(&f));
        }
    }

    #[test]
    fn extreme_tents_are_tight() {
        let g = PointSpace::circle_grid(64).unwrap();
        let p = ConeParams::new(2.0, 0.1, 1.0).unwrap();
        let tight = LogHolderCone::new(g.clone(), p.with_q(1.9).unwrap());
        assert!(extreme_elements(&g, p, 4).iter().skip(1).all(|f| !tight.contains(f)));
    }
}
