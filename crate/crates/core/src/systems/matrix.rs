use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, structural, Result};
use crate::spaces::PointSpace;
use crate::transfer::{Stage, StageSeq};

/// Strictly positive `d × d` transfer matrices `M_n`, one per index from `start`.
///
/// Entry `M_n[b][a]` is the weight from state `a` at index `n` to state `b` at
/// index `n + 1`, i.e. `e^{φ_n}` of the two-symbol word `ab`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixChainSpec {
    pub d: usize,
    pub start: i64,
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub two_sided: bool,
    /// Generator seed, when the entries were drawn at random.
    pub seed: Option<u64>,
}

impl MatrixChainSpec {
    pub fn new(start: i64, matrices: Vec<Vec<Vec<f64>>>, two_sided: bool) -> Result<Self> {
        let d = matrices.first().map(Vec::len).ok_or_else(|| structural("matrix chain needs at least one matrix"))?;
        if d < 2 {
            return Err(domain("matrix chains need at least two states"));
        }
        for (k, m) in matrices.iter().enumerate() {
            if m.len() != d || m.iter().any(|row| row.len() != d) {
                return Err(structural(format!("matrix at index {} is not {d}×{d}", start + k as i64)));
            }
            for (b, row) in m.iter().enumerate() {
                for (a, &w) in row.iter().enumerate() {
                    if !(w > 0.0) || !w.is_finite() {
                        return Err(domain(format!(
                            "entry ({b},{a}) at index {} is {w}; entries must be strictly positive",
                            start + k as i64
                        )));
                    }
                }
            }
        }
        Ok(Self { d, start, matrices, two_sided, seed: None })
    }

    /// The same matrix at every index of `[lo, hi]`.
    pub fn stationary(m: Vec<Vec<f64>>, lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(structural("empty window"));
        }
        Self::new(lo, vec![m; (hi - lo + 1) as usize], true)
    }

    /// Entries drawn uniformly from `[lo_entry, hi_entry]` on the window `[lo, hi]`.
    pub fn random(d: usize, lo: i64, hi: i64, lo_entry: f64, hi_entry: f64, seed: u64) -> Result<Self> {
        if hi < lo {
            return Err(structural("empty window"));
        }
        if !(lo_entry > 0.0 && hi_entry >= lo_entry) {
            return Err(domain("entry range must be positive and ordered"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrices = (lo..=hi)
            .map(|_| (0..d).map(|_| (0..d).map(|_| rng.random_range(lo_entry..=hi_entry)).collect()).collect())
            .collect();
        let mut spec = Self::new(lo, matrices, true)?;
        spec.seed = Some(seed);
        Ok(spec)
    }

    pub fn n_max(&self) -> i64 {
        self.start + self.matrices.len() as i64 - 1
    }

    pub fn matrix(&self, n: i64) -> Result<&Vec<Vec<f64>>> {
        if n < self.start || n > self.n_max() {
            return Err(structural(format!("index {n} outside matrix window [{}, {}]", self.start, self.n_max())));
        }
        Ok(&self.matrices[(n - self.start) as usize])
    }
}

/// Stages on `d`-point spaces with unit distances; `L_n f = M_n f`.
pub fn build_matrix_chain(spec: &MatrixChainSpec) -> Result<StageSeq> {
    let space = PointSpace::discrete(spec.d);
    let stages = spec
        .matrices
        .iter()
        .map(|m| Stage::symbolic(space.clone(), space.clone(), m))
        .collect::<Result<Vec<_>>>()?;
    StageSeq::new(spec.start, stages, spec.two_sided)
}
