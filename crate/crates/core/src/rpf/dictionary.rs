use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cones::LogHolderCone;
use crate::spaces::{Field, PointSpace, SpaceKind};

pub const DICTIONARY_SIZE: usize = 20;

const FILL_SEED: u64 = 0x5eed_d1c7;

/// A test function, with its exact formula when it is defined on the circle.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub field: Field,
    pub exact: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

fn circle_fn(space: &Arc<PointSpace>, name: String, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> TestFunction {
    let field = Field::from_coords(space.clone(), &f).expect("finite test function");
    TestFunction { name, field, exact: Some(Arc::new(f)) }
}

/// The 20-function separating family used to compare measures.
///
/// Circle grids: `𝟙`, `cos 2πkx`, `sin 2πkx` for `k = 1..8`, `x(1-x)`,
/// `|x - 1/2|`, `exp(cos 2πx)`. Finite sets: `𝟙`, indicators, then fixed
/// pseudo-random fields. The first entry is always `𝟙`.
pub fn test_dictionary(space: &Arc<PointSpace>) -> Vec<TestFunction> {
    let mut out = Vec::with_capacity(DICTIONARY_SIZE);
    if space.kind() == SpaceKind::CircleGrid {
        out.push(circle_fn(space, "one".into(), |_| 1.0));
        for k in 1..=8 {
            let w = TAU * k as f64;
            out.push(circle_fn(space, format!("cos{k}"), move |x| (w * x).cos()));
            out.push(circle_fn(space, format!("sin{k}"), move |x| (w * x).sin()));
        }
        out.push(circle_fn(space, "parabola".into(), |x| x * (1.0 - x)));
        out.push(circle_fn(space, "tent".into(), |x| (x - 0.5).abs()));
        out.push(circle_fn(space, "exp_cos".into(), |x| (TAU * x).cos().exp()));
        return out;
    }
    let n = space.len();
    out.push(TestFunction { name: "one".into(), field: Field::one(space.clone()), exact: None });
    for i in 0..n.min(DICTIONARY_SIZE - 1) {
        let v = (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
        out.push(TestFunction { name: format!("e{i}"), field: Field::new(space.clone(), v).unwrap(), exact: None });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(FILL_SEED);
    while out.len() < DICTIONARY_SIZE {
        let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let name = format!("rand{}", out.len());
        out.push(TestFunction { name, field: Field::new(space.clone(), v).unwrap(), exact: None });
    }
    out
}

/// A shift `c` with `f + c` in the cone, so `f + c` carries the rate bound.
///
/// Uses `|log(f + c)| <= |f| / (c + inf f)` on the constrained pairs.
pub fn cone_shift(f: &Field, cone: &LogHolderCone) -> f64 {
    let inf = f.inf();
    if cone.is_positive_cone() {
        return -inf;
    }
    let q = cone.params().q;
    let floor = cone.pairs().local_seminorm(f) / q;
    if floor == 0.0 {
        return -inf + 1.0;
    }
    // Membership is monotone in the shift: bracket, then bisect to 1e-6 relative.
    let inside = |fl: f64| cone.contains(&f.map(|v| v + fl - inf));
    if inside(floor) {
        return floor - inf;
    }
    let mut lo = floor;
    let mut hi = 2.0 * floor;
    while !inside(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-6 * lo {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi - inf
}
