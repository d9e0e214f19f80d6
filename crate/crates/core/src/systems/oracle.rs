//! Dense reference computations for matrix chains, written without the
//! stage machinery so they can cross-check it.

use super::matrix::MatrixChainSpec;
use crate::error::{domain, structural, ConvergenceFailure, Error, Result};

type Mat = Vec<Vec<f64>>;

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn vec_mat(v: &[f64], m: &Mat) -> Vec<f64> {
    let d = m[0].len();
    (0..d).map(|a| m.iter().zip(v).map(|(row, w)| row[a] * w).sum()).collect()
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (r, c, inner) = (a.len(), b[0].len(), b.len());
    (0..r).map(|i| (0..c).map(|j| (0..inner).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scale_to_unit_sum(v: &mut [f64]) -> f64 {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    s
}

/// Perron data of a single positive matrix in the `L f = M f` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOracle {
    pub lambda: f64,
    /// Left Perron vector, a probability vector.
    pub m: Vec<f64>,
    /// Right Perron vector with `<h, m> = 1`.
    pub h: Vec<f64>,
    pub steps: usize,
}

pub const POWER_STEPS: usize = 2000;

/// Power iteration for the Perron root and both Perron vectors.
pub fn oracle_stationary_rpf(m: &Mat) -> Result<StationaryOracle> {
    let d = m.len();
    if d == 0 || m.iter().any(|r| r.len() != d) {
        return Err(structural("oracle needs a square matrix"));
    }
    if m.iter().flatten().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(domain("oracle needs a strictly positive matrix"));
    }
    let mut right = vec![1.0 / d as f64; d];
    let mut left = vec![1.0 / d as f64; d];
    let mut rayleigh = Vec::with_capacity(POWER_STEPS);
    for _ in 0..POWER_STEPS {
        right = mat_vec(m, &right);
        scale_to_unit_sum(&mut right);
        left = vec_mat(&left, m);
        scale_to_unit_sum(&mut left);
        rayleigh.push(dot(&left, &mat_vec(m, &right)) / dot(&left, &right));
    }
    let lambda = *rayleigh.last().unwrap();
    let settle = (rayleigh[POWER_STEPS - 2] - lambda).abs();
    if settle > 1e-13 * lambda {
        return Err(Error::Convergence(Box::new(ConvergenceFailure {
            index: 0,
            steps: POWER_STEPS,
            last_gap: settle,
            gaps: rayleigh.windows(2).map(|w| (w[1] - w[0]).abs()).collect(),
        })));
    }
    let norm = dot(&right, &left);
    let h = right.iter().map(|x| x / norm).collect();
    Ok(StationaryOracle { lambda, m: left, h, steps: POWER_STEPS })
}

/// Finite-`k` estimates at index `n` from explicit matrix products.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOracle {
    pub n: i64,
    pub k: usize,
    /// `r_{n,k} = log <L_n^k 1, σ> / <L_{n+1}^{k-1} 1, σ>` with `σ` uniform.
    pub log_lambda: f64,
    /// `ν_{n,k}`, the normalized pulled-back uniform measure.
    pub nu: Vec<f64>,
    /// `L_{n-k}^k 1` scaled so that `<h, ν_{n,k}> = 1`.
    pub h: Vec<f64>,
}

/// `M_{n+k-1} ⋯ M_n` rescaled to unit maximum entry; returns the log of the removed scale.
fn product(spec: &MatrixChainSpec, n: i64, k: usize) -> Result<(Mat, f64)> {
    let d = spec.d;
    let mut p: Mat = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut log_scale = 0.0;
    for j in 0..k as i64 {
        p = mat_mul(spec.matrix(n + j)?, &p);
        let s = p.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        p.iter_mut().flatten().for_each(|x| *x /= s);
        log_scale += s.ln();
    }
    Ok((p, log_scale))
}

fn forward_estimate(spec: &MatrixChainSpec, n: i64, k: usize) -> Result<(f64, Vec<f64>)> {
    let uniform = vec![1.0 / spec.d as f64; spec.d];
    let ones = vec![1.0; spec.d];
    let (p, lp) = product(spec, n, k)?;
    let (q, lq) = product(spec, n + 1, k - 1)?;
    let num = dot(&mat_vec(&p, &ones), &uniform).ln() + lp;
    let den = dot(&mat_vec(&q, &ones), &uniform).ln() + lq;
    let mut nu = vec_mat(&uniform, &p);
    scale_to_unit_sum(&mut nu);
    Ok((num - den, nu))
}

/// Forward estimates at `n` with depth `k`, and a backward estimate of `h_n`
/// from a depth-`k` product ending at `n`.
pub fn oracle_nonstationary_products(spec: &MatrixChainSpec, n: i64, k: usize) -> Result<ProductOracle> {
    if k == 0 {
        return Ok(ProductOracle { n, k, log_lambda: f64::NAN, nu: vec![1.0 / spec.d as f64; spec.d], h: vec![1.0; spec.d] });
    }
    let lo = n - k as i64;
    if lo < spec.start || n + k as i64 - 1 > spec.n_max() {
        return Err(structural(format!(
            "oracle window [{lo}, {}] exceeds the chain [{}, {}]",
            n + k as i64,
            spec.start,
            spec.n_max() + 1
        )));
    }
    let (log_lambda, nu) = forward_estimate(spec, n, k)?;
    // Backward iterate from 1 on X_{n-k}; the limit is pinned by <h_n, m_n> = 1.
    let (b, _) = product(spec, lo, k)?;
    let raw = mat_vec(&b, &vec![1.0; spec.d]);
    let norm = dot(&raw, &nu);
    let h = raw.into_iter().map(|x| x / norm).collect();
    Ok(ProductOracle { n, k, log_lambda, nu, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_matrix() {
        let o = oracle_stationary_rpf(&vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((o.lambda - 2.0).abs() < 1e-14);
        assert!(o.m.iter().all(|x| (x - 0.5).abs() < 1e-15));
        assert!(o.h.iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn golden_matrix() {
        let o = oracle_stationary_rpf(&vec![vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((o.lambda - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-13);
    }

    #[test]
    fn diagonally_dominant() {
        let o = oracle_stationary_rpf(&vec![vec![10.0, 1.0], vec![1.0, 10.0]]).unwrap();
        assert!((o.lambda - 11.0).abs() < 1e-12);
        assert!((o.m[0] - o.m[1]).abs() < 1e-14 && (o.h[0] - o.h[1]).abs() < 1e-13);
    }

    #[test]
    fn products_match_stationary_oracle() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 1.0]];
        let spec = MatrixChainSpec::stationary(m.clone(), -200, 200).unwrap();
        let o = oracle_stationary_rpf(&m).unwrap();
        let p = oracle_nonstationary_products(&spec, 0, 60).unwrap();
        assert!((p.log_lambda.exp() - o.lambda).abs() < 1e-10);
        for i in 0..2 {
            assert!((p.nu[i] - o.m[i]).abs() < 1e-10 && (p.h[i] - o.h[i]).abs() < 1e-10);
        }
        let z = oracle_nonstationary_products(&spec, 0, 0).unwrap();
        assert_eq!(z.nu, vec![0.5, 0.5]);
        assert!(oracle_nonstationary_products(&spec, 190, 20).is_err());
    }
}
