//! Tensor-product B-spline bases over `[0, 1]^d`.
//!
//! Every pseudo-coordinate vector activates exactly `s = (m+1)^d` control
//! points. [`compute_plan`] stores, per edge, the basis products `B` and the
//! flat weight indices `P` of those control points. Flat indices put
//! dimension 1 fastest: `P = sum_i p_i * prod_{j<i} k_j`.
//!
//! The uniform interior piece polynomials are used across the whole domain,
//! with the segment index clamped so that `u = 1` in an open dimension lands
//! in the last segment at `t = 1`. Closed dimensions wrap around.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

pub const MAX_DEGREE: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelConfig {
    degree: usize,
    size: Vec<usize>,
    closed: Vec<bool>,
}

impl KernelConfig {
    pub fn new(degree: usize, size: Vec<usize>, closed: Vec<bool>) -> Result<KernelConfig> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::InvalidConfig(format!("spline degree must be 1, 2 or 3, got {degree}")));
        }
        if size.is_empty() {
            return Err(Error::InvalidConfig("kernel needs at least one dimension".into()));
        }
        if size.len() != closed.len() {
            return Err(Error::InvalidConfig(format!(
                "kernel size has {} dimensions but closed flags have {}",
                size.len(),
                closed.len()
            )));
        }
        // a closed dimension with fewer than m+1 control points would repeat
        // indices within one row
        if let Some(&k) = size.iter().find(|&&k| k < degree + 1) {
            return Err(Error::InvalidConfig(format!(
                "kernel size {k} is too small for degree {degree} (need at least {})",
                degree + 1
            )));
        }
        let count = size.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k));
        if count.is_none_or(|c| c > u32::MAX as usize) {
            return Err(Error::InvalidConfig(format!("kernel size {size:?} is too large")));
        }
        Ok(KernelConfig { degree, size, closed })
    }

    /// All dimensions open.
    pub fn open(degree: usize, size: Vec<usize>) -> Result<KernelConfig> {
        let d = size.len();
        KernelConfig::new(degree, size, vec![false; d])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn size(&self) -> &[usize] {
        &self.size
    }

    pub fn closed(&self) -> &[bool] {
        &self.closed
    }

    pub fn dim(&self) -> usize {
        self.size.len()
    }

    /// Number of control points `K = prod k_i`.
    pub fn num_weights(&self) -> usize {
        self.size.iter().product()
    }

    /// Active control points per pseudo-coordinate, `(m+1)^d`.
    pub fn support(&self) -> usize {
        (self.degree + 1).pow(self.dim() as u32)
    }
}

/// One-dimensional active indices and basis values.
///
/// Only the first `m + 1` entries of each array are meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basis1d {
    pub indices: [usize; MAX_DEGREE + 1],
    pub values: [f64; MAX_DEGREE + 1],
}

pub fn basis_1d(u: f64, k: usize, m: usize, closed: bool) -> Result<Basis1d> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("pseudo-coordinate {u} outside [0, 1]")));
    }
    if !(1..=MAX_DEGREE).contains(&m) {
        return Err(Error::InvalidConfig(format!("spline degree must be 1, 2 or 3, got {m}")));
    }
    if k < m + 1 {
        return Err(Error::InvalidConfig(format!("kernel size {k} is too small for degree {m}")));
    }
    Ok(basis_unchecked(u, k, m, closed))
}

#[inline]
fn basis_unchecked(u: f64, k: usize, m: usize, closed: bool) -> Basis1d {
    let (b, t) = if closed {
        let v = u * k as f64;
        let f = v.floor();
        ((f as usize) % k, v - f)
    } else {
        let v = u * (k - m) as f64;
        let b = (v.floor() as usize).min(k - m - 1);
        (b, v - b as f64)
    };
    let mut indices = [0; MAX_DEGREE + 1];
    for (r, slot) in indices.iter_mut().enumerate().take(m + 1) {
        *slot = if closed { (b + r) % k } else { b + r };
    }
    Basis1d { indices, values: pieces(t, m) }
}

#[inline]
fn pieces(t: f64, m: usize) -> [f64; MAX_DEGREE + 1] {
    let s = 1.0 - t;
    match m {
        1 => [s, t, 0.0, 0.0],
        2 => [0.5 * s * s, 0.5 * (-2.0 * t * t + 2.0 * t + 1.0), 0.5 * t * t, 0.0],
        _ => {
            let t2 = t * t;
            let t3 = t2 * t;
            [
                s * s * s / 6.0,
                (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                t3 / 6.0,
            ]
        }
    }
}

/// Per-edge basis products and flat control point indices, `E x s` each,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisPlan<T> {
    num_edges: usize,
    support: usize,
    num_weights: usize,
    basis: Vec<T>,
    index: Vec<u32>,
}

impl<T: Real> BasisPlan<T> {
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn support(&self) -> usize {
        self.support
    }

    /// Size `K` of the control point grid the indices refer to.
    pub fn num_weights(&self) -> usize {
        self.num_weights
    }

    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn basis_row(&self, e: usize) -> &[T] {
        &self.basis[e * self.support..(e + 1) * self.support]
    }

    pub fn index_row(&self, e: usize) -> &[u32] {
        &self.index[e * self.support..(e + 1) * self.support]
    }

    /// Concatenates plans along the edge dimension.
    pub fn concat(plans: &[&BasisPlan<T>]) -> Result<BasisPlan<T>> {
        let support = plans.first().map_or(0, |p| p.support);
        let num_weights = plans.first().map_or(0, |p| p.num_weights);
        if plans.iter().any(|p| p.support != support || p.num_weights != num_weights) {
            return Err(Error::ShapeMismatch("cannot concatenate plans with different support".into()));
        }
        let mut out = BasisPlan {
            num_edges: plans.iter().map(|p| p.num_edges).sum(),
            support,
            num_weights,
            basis: Vec::new(),
            index: Vec::new(),
        };
        for p in plans {
            out.basis.extend_from_slice(&p.basis);
            out.index.extend_from_slice(&p.index);
        }
        Ok(out)
    }
}

/// Evaluates the active basis entries of every pseudo-coordinate row.
pub fn compute_plan<T: Real>(pseudo: &Matrix<f64>, config: &KernelConfig) -> Result<BasisPlan<T>> {
    let d = config.dim();
    if pseudo.cols() != d {
        return Err(Error::ShapeMismatch(format!(
            "pseudo-coordinates have dimension {}, kernel expects {d}",
            pseudo.cols()
        )));
    }
    let m = config.degree;
    let s = config.support();
    let e = pseudo.rows();
    let mut basis = Vec::with_capacity(e * s);
    let mut index = Vec::with_capacity(e * s);
    let mut per_dim = Vec::with_capacity(d);
    for edge in 0..e {
        per_dim.clear();
        for (a, &u) in pseudo.row(edge).iter().enumerate() {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::InvalidArgument(format!(
                    "edge {edge}: pseudo-coordinate {u} outside [0, 1]"
                )));
            }
            per_dim.push(basis_unchecked(u, config.size[a], m, config.closed[a]));
        }
        for combo in 0..s {
            let mut rest = combo;
            let mut value = 1.0;
            let mut flat = 0usize;
            let mut stride = 1usize;
            for (a, b1) in per_dim.iter().enumerate() {
                let r = rest % (m + 1);
                rest /= m + 1;
                value *= b1.values[r];
                flat += b1.indices[r] * stride;
                stride *= config.size[a];
            }
            basis.push(T::of(value));
            index.push(flat as u32);
        }
    }
    Ok(BasisPlan {
        num_edges: e,
        support: s,
        num_weights: config.num_weights(),
        basis,
        index,
    })
}

/// Evaluates `g_{l,o}(u) = sum_p W[p, l, o] B_p(u)` for weights laid out as
/// `K x m_in x m_out`, row-major.
pub fn eval_kernel<T: Real>(
    config: &KernelConfig,
    weights: &[T],
    m_in: usize,
    m_out: usize,
    u: &[f64],
    l: usize,
    o: usize,
) -> Result<f64> {
    if weights.len() != config.num_weights() * m_in * m_out {
        return Err(Error::ShapeMismatch(format!(
            "weights have {} entries, expected {}",
            weights.len(),
            config.num_weights() * m_in * m_out
        )));
    }
    if l >= m_in || o >= m_out {
        return Err(Error::InvalidArgument(format!(
            "feature pair ({l}, {o}) out of range for {m_in} x {m_out}"
        )));
    }
    let pseudo = Matrix::from_vec(1, u.len(), u.to_vec())?;
    let plan = compute_plan::<f64>(&pseudo, config)?;
    Ok(plan
        .index_row(0)
        .iter()
        .zip(plan.basis_row(0))
        .map(|(&p, &b)| weights[(p as usize * m_in + l) * m_out + o].to_f64() * b)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_basis;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b1(u: f64, k: usize, m: usize, closed: bool) -> (Vec<usize>, Vec<f64>) {
        let b = basis_1d(u, k, m, closed).unwrap();
        (b.indices[..=m].to_vec(), b.values[..=m].to_vec())
    }

    #[test]
    fn endpoint_examples() {
        assert_eq!(b1(0.0, 5, 1, false), (vec![0, 1], vec![1.0, 0.0]));
        assert_eq!(b1(1.0, 5, 1, false), (vec![3, 4], vec![0.0, 1.0]));
        assert_eq!(b1(0.5, 4, 2, false), (vec![1, 2, 3], vec![0.5, 0.5, 0.0]));
        assert_eq!(b1(1.0, 4, 1, true), (vec![0, 1], vec![1.0, 0.0]));
        assert_eq!(b1(1.0, 4, 1, true), b1(0.0, 4, 1, true));
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(basis_1d(1.5, 5, 1, false), Err(Error::InvalidArgument(_))));
        assert!(matches!(basis_1d(-0.1, 5, 1, false), Err(Error::InvalidArgument(_))));
        assert!(matches!(basis_1d(f64::NAN, 5, 1, false), Err(Error::InvalidArgument(_))));
        assert!(matches!(basis_1d(0.5, 2, 2, false), Err(Error::InvalidConfig(_))));
        assert!(KernelConfig::new(4, vec![5], vec![false]).is_err());
        assert!(KernelConfig::new(1, vec![5, 5], vec![false]).is_err());
        assert!(KernelConfig::new(2, vec![2], vec![true]).is_err());
    }

    #[test]
    fn plan_tensor_product_at_origin() {
        let cfg = KernelConfig::open(1, vec![3, 3]).unwrap();
        let pseudo = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let plan = compute_plan::<f64>(&pseudo, &cfg).unwrap();
        assert_eq!(plan.support(), 4);
        assert_eq!(plan.index_row(0), &[0, 1, 3, 4]);
        assert_eq!(plan.basis_row(0), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn plan_rejects_bad_rows() {
        let cfg = KernelConfig::open(1, vec![3, 3]).unwrap();
        let pseudo = Matrix::from_vec(2, 2, vec![0.0, 0.0, 0.5, 1.2]).unwrap();
        let err = compute_plan::<f64>(&pseudo, &cfg).unwrap_err();
        assert!(err.to_string().contains("edge 1"), "{err}");
        let pseudo = Matrix::from_vec(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(compute_plan::<f64>(&pseudo, &cfg), Err(Error::ShapeMismatch(_))));
    }

    fn configs() -> Vec<KernelConfig> {
        let mut out = Vec::new();
        for m in 1..=3 {
            for d in 1..=3 {
                for closed in [false, true] {
                    let size: Vec<usize> = (0..d).map(|a| m + 2 + a).collect();
                    let mut flags = vec![false; d];
                    if closed {
                        flags[d - 1] = true;
                    }
                    out.push(KernelConfig::new(m, size, flags).unwrap());
                }
            }
        }
        out
    }

    fn random_pseudo(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, d, |_, _| rng.gen_range(0.0..=1.0))
    }

    #[test]
    fn partition_of_unity_and_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cfg in configs() {
            let pseudo = random_pseudo(&mut rng, 10_000, cfg.dim());
            let plan = compute_plan::<f64>(&pseudo, &cfg).unwrap();
            let k = cfg.num_weights() as u32;
            for e in 0..plan.num_edges() {
                let sum: f64 = plan.basis_row(e).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-6, "{cfg:?} sum {sum}");
                assert!(plan.basis_row(e).iter().all(|&b| b >= 0.0));
                let mut idx = plan.index_row(e).to_vec();
                assert!(idx.iter().all(|&p| p < k));
                idx.sort_unstable();
                idx.dedup();
                assert_eq!(idx.len(), cfg.support());
            }
        }
    }

    #[test]
    fn local_support_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cfg in configs() {
            let pseudo = random_pseudo(&mut rng, 300, cfg.dim());
            let plan = compute_plan::<f64>(&pseudo, &cfg).unwrap();
            for e in 0..plan.num_edges() {
                let dense = dense_basis(&cfg, pseudo.row(e));
                let mut sparse = vec![0.0; cfg.num_weights()];
                for (&p, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                    sparse[p as usize] += b;
                }
                for (q, (a, b)) in dense.iter().zip(&sparse).enumerate() {
                    assert!((a - b).abs() <= 1e-12, "{cfg:?} u={:?} q={q}: {a} vs {b}", pseudo.row(e));
                }
            }
        }
    }

    #[test]
    fn eval_kernel_constant_and_bump() {
        let cfg = KernelConfig::open(2, vec![4, 5]).unwrap();
        let k = cfg.num_weights();
        let ones = vec![1.0f64; k * 2 * 3];
        let zeros = vec![0.0f64; k * 2 * 3];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
            assert!((eval_kernel(&cfg, &ones, 2, 3, &u, 1, 2).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(eval_kernel(&cfg, &zeros, 2, 3, &u, 0, 0).unwrap(), 0.0);
        }
        let q = 7;
        let mut bump = vec![0.0f64; k];
        bump[q] = 1.0;
        for i in 0..=20 {
            for j in 0..=20 {
                let u = [i as f64 / 20.0, j as f64 / 20.0];
                let g = eval_kernel(&cfg, &bump, 1, 1, &u, 0, 0).unwrap();
                let want = dense_basis(&cfg, &u)[q];
                assert!(g >= 0.0);
                assert!((g - want).abs() < 1e-12);
            }
        }
        assert!(eval_kernel(&cfg, &bump, 1, 1, &[0.5, 0.5], 1, 0).is_err());
        assert!(eval_kernel(&cfg, &bump, 2, 1, &[0.5, 0.5], 0, 0).is_err());
    }

    #[test]
    fn kernel_is_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for cfg in configs() {
            let k = cfg.num_weights();
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // |dg/du_a| <= (k_a - m) * 2 max|w| for open dims, k_a * 2 max|w| for closed
            let wmax = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for axis in 0..cfg.dim() {
                let lip = 2.0 * wmax * cfg.size()[axis] as f64;
                let mut u: Vec<f64> = (0..cfg.dim()).map(|_| rng.gen_range(0.0..=1.0)).collect();
                let mut prev = None;
                for step in 0..=1000 {
                    u[axis] = step as f64 * 1e-3;
                    let g = eval_kernel(&cfg, &w, 1, 1, &u, 0, 0).unwrap();
                    if let Some(p) = prev {
                        let jump: f64 = g - p;
                        assert!(jump.abs() <= lip * 1e-3 + 1e-12, "{cfg:?} axis {axis} jump {jump}");
                    }
                    prev = Some(g);
                }
                if cfg.closed()[axis] {
                    u[axis] = 0.0;
                    let g0 = eval_kernel(&cfg, &w, 1, 1, &u, 0, 0).unwrap();
                    u[axis] = 1.0;
                    let g1 = eval_kernel(&cfg, &w, 1, 1, &u, 0, 0).unwrap();
                    assert_eq!(g0, g1);
                }
            }
        }
    }

    #[test]
    fn concat_plans() {
        let cfg = KernelConfig::open(1, vec![3]).unwrap();
        let a = compute_plan::<f32>(&Matrix::from_vec(1, 1, vec![0.0]).unwrap(), &cfg).unwrap();
        let b = compute_plan::<f32>(&Matrix::from_vec(2, 1, vec![0.5, 1.0]).unwrap(), &cfg).unwrap();
        let c = BasisPlan::concat(&[&a, &b]).unwrap();
        assert_eq!(c.num_edges(), 3);
        assert_eq!(c.index_row(2), b.index_row(1));
    }

    proptest! {
        #[test]
        fn closed_wraps_exactly(m in 1usize..=3, extra in 0usize..5, frac in 0.0f64..1.0) {
            let k = m + 1 + extra;
            let a = basis_1d(0.0, k, m, true).unwrap();
            let b = basis_1d(1.0, k, m, true).unwrap();
            prop_assert_eq!(a, b);
            let c = basis_1d(frac, k, m, true).unwrap();
            let sum: f64 = c.values[..=m].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn open_indices_in_range(m in 1usize..=3, extra in 0usize..6, u in 0.0f64..=1.0) {
            let k = m + 1 + extra;
            let b = basis_1d(u, k, m, false).unwrap();
            prop_assert!(b.indices[m] < k);
            prop_assert!(b.values[..=m].iter().all(|&v| v >= 0.0));
        }
    }
}
