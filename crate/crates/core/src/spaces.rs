//! Finite samples of compact metric spaces, real functions on them and
//! positive measures on them.
//!
//! Two kinds of space are supported: an arbitrary finite metric space with
//! an explicit distance table, and the uniform grid `{k/N}` on the circle
//! `R/Z` with arc-length distance. Spaces are shared behind [`Arc`] so that
//! fields and measures can cheaply point at the space they live on.

use std::sync::Arc;

use crate::error::{domain, Error, Result};

/// Which metric a [`PointSpace`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Explicit symmetric distance table.
    FiniteDiscrete,
    /// `N` equally spaced points on the unit circle.
    CircleGrid,
}

/// A finite sample of a compact metric space.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpace {
    kind: SpaceKind,
    len: usize,
    /// Row-major `len * len` table; `None` for circle grids.
    table: Option<Vec<f64>>,
}

/// Arc-length distance between two points of `R/Z`.
pub fn circle_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl PointSpace {
    /// Builds a finite metric space from a full distance table.
    pub fn finite(table: Vec<Vec<f64>>) -> Result<Arc<Self>> {
        let n = table.len();
        if n == 0 {
            return Err(domain("a point space needs at least one point"));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(domain(format!("distance row {i} has {} entries, expected {n}", row.len())));
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            if flat[i * n + i] != 0.0 {
                return Err(domain(format!("dist({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = flat[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(domain(format!("dist({i},{j}) = {d} is not a finite nonnegative number")));
                }
                if d != flat[j * n + i] {
                    return Err(domain(format!("distance table is not symmetric at ({i},{j})")));
                }
                if i != j && d == 0.0 {
                    return Err(domain(format!("distinct points {i} and {j} at distance 0")));
                }
            }
        }
        Ok(Arc::new(Self { kind: SpaceKind::FiniteDiscrete, len: n, table: Some(flat) }))
    }

    /// `d` points, every pair of distinct points at distance 1.
    pub fn discrete(d: usize) -> Arc<Self> {
        assert!(d > 0, "a point space needs at least one point");
        let mut flat = vec![1.0; d * d];
        for i in 0..d {
            flat[i * d + i] = 0.0;
        }
        Arc::new(Self { kind: SpaceKind::FiniteDiscrete, len: d, table: Some(flat) })
    }

    /// The grid `{k/n : 0 <= k < n}` on the circle.
    pub fn circle_grid(n: usize) -> Result<Arc<Self>> {
        if n < 2 {
            return Err(domain("circle grid needs at least two points"));
        }
        Ok(Arc::new(Self { kind: SpaceKind::CircleGrid, len: n, table: None }))
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Distance between points `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[i * self.len + j],
            None => {
                let k = i.abs_diff(j);
                k.min(self.len - k) as f64 / self.len as f64
            }
        }
    }

    /// Circle coordinate of point `i`, if the space is a circle grid.
    pub fn coord(&self, i: usize) -> Option<f64> {
        match self.kind {
            SpaceKind::CircleGrid => Some(i as f64 / self.len as f64),
            SpaceKind::FiniteDiscrete => None,
        }
    }

    /// Grid spacing for circle grids.
    pub fn spacing(&self) -> Option<f64> {
        match self.kind {
            SpaceKind::CircleGrid => Some(1.0 / self.len as f64),
            SpaceKind::FiniteDiscrete => None,
        }
    }

    /// Linear interpolation stencil `(lo, hi, t)` for a circle coordinate:
    /// the value at `x` is `(1-t) f[lo] + t f[hi]`.
    pub fn stencil(&self, x: f64) -> Option<(usize, usize, f64)> {
        if self.kind != SpaceKind::CircleGrid {
            return None;
        }
        let p = x.rem_euclid(1.0) * self.len as f64;
        let mut lo = p.floor() as usize;
        let mut t = p - lo as f64;
        if lo >= self.len {
            lo = 0;
            t = 0.0;
        }
        Some((lo, (lo + 1) % self.len, t))
    }

    /// Largest triangle-inequality defect over all triples, `max(d(i,k) - d(i,j) - d(j,k))`.
    pub fn triangle_defect(&self) -> f64 {
        let n = self.len;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max(self.dist(i, k) - self.dist(i, j) - self.dist(j, k));
                }
            }
        }
        worst
    }
}

pub(crate) fn same_space(a: &Arc<PointSpace>, b: &Arc<PointSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn ensure_same(a: &Arc<PointSpace>, b: &Arc<PointSpace>, what: &str) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!(
            "{what}: {:?}({}) vs {:?}({})",
            a.kind(),
            a.len(),
            b.kind(),
            b.len()
        )))
    }
}

/// A real-valued function on a [`PointSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    space: Arc<PointSpace>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<PointSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(domain(format!("field has {} values on a {}-point space", values.len(), space.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("field value {i} is not finite")));
        }
        Ok(Self { space, values })
    }

    /// Internal constructor that skips validation.
    pub(crate) fn from_raw(space: Arc<PointSpace>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), space.len());
        Self { space, values }
    }

    pub fn constant(space: Arc<PointSpace>, c: f64) -> Self {
        let n = space.len();
        Self { space, values: vec![c; n] }
    }

    /// The constant function with value 1.
    pub fn one(space: Arc<PointSpace>) -> Self {
        Self::constant(space, 1.0)
    }

    pub fn from_fn(space: Arc<PointSpace>, f: impl Fn(usize) -> f64) -> Result<Self> {
        let values = (0..space.len()).map(f).collect();
        Self::new(space, values)
    }

    /// Samples `f` at circle coordinates. Fails on non-circle spaces.
    pub fn from_coords(space: Arc<PointSpace>, f: impl Fn(f64) -> f64) -> Result<Self> {
        if space.kind() != SpaceKind::CircleGrid {
            return Err(domain("coordinate sampling needs a circle grid"));
        }
        let n = space.len() as f64;
        Self::from_fn(space, |i| f(i as f64 / n))
    }

    pub fn space(&self) -> &Arc<PointSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.space.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise `a*self + b*other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Self> {
        ensure_same(&self.space, &other.space, "linear combination")?;
        Ok(Self::from_raw(
            self.space.clone(),
            self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        ))
    }

    pub fn mul(&self, other: &Field) -> Result<Self> {
        ensure_same(&self.space, &other.space, "pointwise product")?;
        Ok(Self::from_raw(
            self.space.clone(),
            self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect(),
        ))
    }

    /// Sup-norm distance to another field on the same space.
    pub fn sup_dist(&self, other: &Field) -> Result<f64> {
        ensure_same(&self.space, &other.space, "sup distance")?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs())))
    }

    /// Evaluates at a circle coordinate by periodic linear interpolation.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let (lo, hi, t) = self.space.stencil(x)?;
        Some((1.0 - t) * self.values[lo] + t * self.values[hi])
    }
}

/// A positive finite measure on a [`PointSpace`], stored as point weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureVec {
    space: Arc<PointSpace>,
    weights: Vec<f64>,
}

impl MeasureVec {
    pub fn new(space: Arc<PointSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(domain(format!("measure has {} weights on a {}-point space", weights.len(), space.len())));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(domain(format!("weight {i} = {} is not a finite nonnegative number", weights[i])));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(domain("the zero measure is not a positive measure"));
        }
        Ok(Self { space, weights })
    }

    pub(crate) fn from_raw(space: Arc<PointSpace>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), space.len());
        Self { space, weights }
    }

    /// Uniform probability weights `1/N` (rectangle-rule Lebesgue measure on grids).
    pub fn uniform(space: Arc<PointSpace>) -> Self {
        let n = space.len();
        Self { space, weights: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(space: Arc<PointSpace>, i: usize) -> Result<Self> {
        let mut w = vec![0.0; space.len()];
        *w.get_mut(i).ok_or_else(|| domain(format!("point {i} out of range")))? = 1.0;
        Ok(Self { space, weights: w })
    }

    pub fn space(&self) -> &Arc<PointSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Returns `self / <1, self>`.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(domain(format!("cannot normalize a measure of mass {mass}")));
        }
        Ok(Self { space: self.space.clone(), weights: self.weights.iter().map(|w| w / mass).collect() })
    }

    /// Measure with density `f` with respect to `self`. `f` must be nonnegative.
    pub fn with_density(&self, f: &Field) -> Result<Self> {
        ensure_same(&self.space, f.space(), "density")?;
        Self::new(self.space.clone(), self.weights.iter().zip(f.values()).map(|(w, h)| w * h).collect())
    }

    /// `sum |w_i - v_i|`.
    pub fn l1_dist(&self, other: &MeasureVec) -> Result<f64> {
        ensure_same(&self.space, &other.space, "l1 distance")?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum())
    }
}

/// The duality pairing `<f, sigma> = sum_i f(x_i) w_i`.
pub fn pair(f: &Field, sigma: &MeasureVec) -> Result<f64> {
    ensure_same(f.space(), sigma.space(), "pairing")?;
    Ok(pair_slices(f.values(), sigma.weights()))
}

#[inline]
pub(crate) fn pair_slices(f: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// `max_{i != j} |f(x_i) - f(x_j)| / d(x_i, x_j)^beta`.
pub fn holder_seminorm(f: &Field, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain(format!("Hölder exponent must be positive, got {beta}")));
    }
    let space = f.space();
    let n = space.len();
    if n < 2 {
        return Err(domain("Hölder seminorm needs at least two points"));
    }
    let v = f.values();
    let mut best = 0.0f64;
    if space.kind() == SpaceKind::CircleGrid && beta == 1.0 {
        // Any difference telescopes along the shorter arc, so neighbours attain the maximum.
        let h = 1.0 / n as f64;
        for i in 0..n {
            best = best.max((v[(i + 1) % n] - v[i]).abs() / h);
        }
        return Ok(best);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let q = (v[i] - v[j]).abs() / space.dist(i, j).powf(beta);
            best = best.max(q);
        }
    }
    Ok(best)
}
