//! Spline-based convolution layer.
//!
//! For node `i` with neighborhood `N(i)` the layer computes
//!
//! ```text
//! out[i, o] = n_i * sum_{(i,j)} sum_l x[j, l] * sum_p W[P, l, o] * B
//!           + sum_l W_root[l, o] * x[i, l]
//! ```
//!
//! where `n_i = 1 / |N(i)|` when normalization is on. Nodes without
//! neighbors only receive the root term.
//!
//! Two execution strategies produce the same result up to rounding:
//!
//! * [`Strategy::EdgeParallel`] gathers input rows by edge target, applies
//!   the `s` active weight slices per edge and sums each origin's
//!   contiguous edge segment. Work is `O(E * s * M_in * M_out)` and does not
//!   depend on `K`.
//! * [`Strategy::NodeTransform`] first multiplies every input row with all
//!   `K` weight slices and then gathers the transformed rows per edge. Work
//!   is `O(N * K * M_in * M_out + E * s * M_out)`, much less when nodes have
//!   many neighbors.
//!
//! Both are deterministic: node outputs are owned by one task, and weight
//! gradients are accumulated in a fixed number of chunks summed in order.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernel::{BasisPlan, KernelConfig};
use crate::real::Real;
use crate::tensor::{axpy, matmul_tn, Matrix};

/// Number of partial weight-gradient buffers. Fixed so that the summation
/// order does not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

/// Node-transform buffers larger than this many entries fall back to the
/// edge-parallel strategy under [`Strategy::Auto`].
const TRANSFORM_LIMIT: usize = 1 << 26;

const MIN_ROWS_PER_TASK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    #[default]
    Auto,
    EdgeParallel,
    NodeTransform,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "auto" => Ok(Strategy::Auto),
            "edge" | "edge_parallel" => Ok(Strategy::EdgeParallel),
            "node" | "node_transform" => Ok(Strategy::NodeTransform),
            other => Err(Error::InvalidConfig(format!("unknown convolution strategy `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Auto => "auto",
            Strategy::EdgeParallel => "edge_parallel",
            Strategy::NodeTransform => "node_transform",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplineConv<T> {
    config: KernelConfig,
    in_features: usize,
    out_features: usize,
    weight: Vec<T>,
    root: Option<Vec<T>>,
    grad_weight: Vec<T>,
    grad_root: Option<Vec<T>>,
    normalize: bool,
    strategy: Strategy,
}

/// Saved forward state needed by [`SplineConv::backward`].
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    input: Matrix<T>,
    num_edges: usize,
}

impl<T> ConvCache<T> {
    pub fn input(&self) -> &Matrix<T> {
        &self.input
    }
}

impl<T: Real> SplineConv<T> {
    /// A layer with all weights zero; see [`SplineConv::init_weights`].
    pub fn new(
        config: KernelConfig,
        in_features: usize,
        out_features: usize,
        use_root: bool,
        normalize: bool,
    ) -> Result<SplineConv<T>> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidConfig(format!(
                "feature widths must be positive, got {in_features} -> {out_features}"
            )));
        }
        let n = config
            .num_weights()
            .checked_mul(in_features)
            .and_then(|x| x.checked_mul(out_features))
            .filter(|&x| x <= 1 << 32)
            .ok_or_else(|| Error::InvalidConfig("spline weight tensor is too large".into()))?;
        let r = in_features * out_features;
        Ok(SplineConv {
            config,
            in_features,
            out_features,
            weight: vec![T::zero(); n],
            root: use_root.then(|| vec![T::zero(); r]),
            grad_weight: vec![T::zero(); n],
            grad_root: use_root.then(|| vec![T::zero(); r]),
            normalize,
            strategy: Strategy::Auto,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn use_root(&self) -> bool {
        self.root.is_some()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn set_strategy(&mut self, strategy: Strategy) {
        self.strategy = strategy;
    }

    /// Spline weights, `K x M_in x M_out` row-major.
    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [T] {
        &mut self.weight
    }

    /// Root weights, `M_in x M_out` row-major.
    pub fn root(&self) -> Option<&[T]> {
        self.root.as_deref()
    }

    pub fn root_mut(&mut self) -> Option<&mut [T]> {
        self.root.as_deref_mut()
    }

    pub fn grad_weight(&self) -> &[T] {
        &self.grad_weight
    }

    pub fn grad_root(&self) -> Option<&[T]> {
        self.grad_root.as_deref()
    }

    /// Parameter and gradient slices, spline weights first.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [T], &[T])> {
        let mut out = vec![(self.weight.as_mut_slice(), self.grad_weight.as_slice())];
        if let (Some(r), Some(g)) = (self.root.as_mut(), self.grad_root.as_ref()) {
            out.push((r.as_mut_slice(), g.as_slice()));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|g| *g = T::zero());
        if let Some(g) = self.grad_root.as_mut() {
            g.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Half-width of the initialization interval, `(M_in * s)^(-1/2)`.
    pub fn init_bound(&self) -> f64 {
        1.0 / ((self.in_features * self.config.support()) as f64).sqrt()
    }

    /// Draws all weights i.i.d. from `uniform(-b, b)`.
    pub fn init_weights(&mut self, seed: u64) {
        let b = self.init_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in self.weight.iter_mut().chain(self.root.iter_mut().flatten()) {
            *w = T::of(rng.gen_range(-b..b));
        }
    }

    /// Strategy actually used for `graph`.
    pub fn resolve_strategy(&self, graph: &Graph) -> Strategy {
        if self.strategy != Strategy::Auto {
            return self.strategy;
        }
        let (n, e) = (graph.num_nodes(), graph.num_edges());
        let k = self.config.num_weights();
        let s = self.config.support();
        let (mi, mo) = (self.in_features, self.out_features);
        let transform = n * k * mi * mo + e * s * mo;
        let edge = e * s * mi * mo;
        if transform < edge && n * k * mo <= TRANSFORM_LIMIT {
            Strategy::NodeTransform
        } else {
            Strategy::EdgeParallel
        }
    }

    fn check(&self, graph: &Graph, plan: &BasisPlan<T>, x: &Matrix<T>) -> Result<()> {
        if plan.num_edges() != graph.num_edges() {
            return Err(Error::ShapeMismatch(format!(
                "basis plan covers {} edges, graph has {}",
                plan.num_edges(),
                graph.num_edges()
            )));
        }
        if plan.support() != self.config.support() || plan.num_weights() != self.config.num_weights() {
            return Err(Error::ShapeMismatch("basis plan was computed for a different kernel".into()));
        }
        if x.shape() != (graph.num_nodes(), self.in_features) {
            return Err(Error::ShapeMismatch(format!(
                "input is {}x{}, expected {}x{}",
                x.rows(),
                x.cols(),
                graph.num_nodes(),
                self.in_features
            )));
        }
        Ok(())
    }

    fn norms(&self, graph: &Graph) -> Vec<T> {
        let rp = graph.row_ptr();
        (0..graph.num_nodes())
            .map(|i| {
                let deg = rp[i + 1] - rp[i];
                if self.normalize && deg > 0 {
                    T::one() / T::of(deg as f64)
                } else {
                    T::one()
                }
            })
            .collect()
    }

    pub fn forward(&self, graph: &Graph, plan: &BasisPlan<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(graph, plan, x)?;
        let norms = self.norms(graph);
        let mut out = match self.resolve_strategy(graph) {
            Strategy::NodeTransform => self.forward_transform(graph, plan, x, &norms),
            _ => self.forward_edges(graph, plan, x, &norms),
        };
        if let Some(root) = &self.root {
            let mo = self.out_features;
            out.as_mut_slice()
                .par_chunks_mut(mo)
                .zip(x.as_slice().par_chunks(self.in_features))
                .with_min_len(MIN_ROWS_PER_TASK)
                .for_each(|(oi, xi)| {
                    for (l, &v) in xi.iter().enumerate() {
                        if v != T::zero() {
                            axpy(v, &root[l * mo..(l + 1) * mo], oi);
                        }
                    }
                });
        }
        Ok(out)
    }

    /// Forward pass that also returns the state needed for backward.
    pub fn forward_train(
        &self,
        graph: &Graph,
        plan: &BasisPlan<T>,
        x: &Matrix<T>,
    ) -> Result<(Matrix<T>, ConvCache<T>)> {
        let out = self.forward(graph, plan, x)?;
        Ok((out, ConvCache { input: x.clone(), num_edges: graph.num_edges() }))
    }

    fn forward_edges(&self, graph: &Graph, plan: &BasisPlan<T>, x: &Matrix<T>, norms: &[T]) -> Matrix<T> {
        let (mi, mo) = (self.in_features, self.out_features);
        let block = mi * mo;
        let rp = graph.row_ptr();
        let targets = graph.targets();
        let w = &self.weight;
        let mut out = Matrix::zeros(graph.num_nodes(), mo);
        out.as_mut_slice()
            .par_chunks_mut(mo)
            .enumerate()
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(i, oi)| {
                for e in rp[i]..rp[i + 1] {
                    let xj = x.row(targets[e]);
                    for (&q, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                        if b == T::zero() {
                            continue;
                        }
                        let wq = &w[q as usize * block..(q as usize + 1) * block];
                        for (l, &v) in xj.iter().enumerate() {
                            let c = b * v;
                            if c != T::zero() {
                                axpy(c, &wq[l * mo..(l + 1) * mo], oi);
                            }
                        }
                    }
                }
                let n = norms[i];
                oi.iter_mut().for_each(|v| *v *= n);
            });
        out
    }

    /// `Y[j, q, :] = x[j, :] * W[q]`, stored as `N x (K * M_out)`.
    fn transform(&self, x: &Matrix<T>) -> Vec<T> {
        let (mi, mo) = (self.in_features, self.out_features);
        let k = self.config.num_weights();
        let w = &self.weight;
        let mut y = vec![T::zero(); x.rows() * k * mo];
        y.par_chunks_mut(k * mo)
            .zip(x.as_slice().par_chunks(mi))
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(yj, xj)| {
                for (l, &v) in xj.iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    for q in 0..k {
                        let base = (q * mi + l) * mo;
                        axpy(v, &w[base..base + mo], &mut yj[q * mo..(q + 1) * mo]);
                    }
                }
            });
        y
    }

    fn forward_transform(&self, graph: &Graph, plan: &BasisPlan<T>, x: &Matrix<T>, norms: &[T]) -> Matrix<T> {
        let mo = self.out_features;
        let stride = self.config.num_weights() * mo;
        let y = self.transform(x);
        let rp = graph.row_ptr();
        let targets = graph.targets();
        let mut out = Matrix::zeros(graph.num_nodes(), mo);
        out.as_mut_slice()
            .par_chunks_mut(mo)
            .enumerate()
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(i, oi)| {
                for e in rp[i]..rp[i + 1] {
                    let yj = &y[targets[e] * stride..(targets[e] + 1) * stride];
                    for (&q, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                        if b != T::zero() {
                            axpy(b, &yj[q as usize * mo..(q as usize + 1) * mo], oi);
                        }
                    }
                }
                let n = norms[i];
                oi.iter_mut().for_each(|v| *v *= n);
            });
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &mut self,
        graph: &Graph,
        plan: &BasisPlan<T>,
        cache: &ConvCache<T>,
        grad_out: &Matrix<T>,
    ) -> Result<Matrix<T>> {
        let x = &cache.input;
        if cache.num_edges != graph.num_edges() {
            return Err(Error::ShapeMismatch("forward cache belongs to a different graph".into()));
        }
        self.check(graph, plan, x)?;
        if grad_out.shape() != (graph.num_nodes(), self.out_features) {
            return Err(Error::ShapeMismatch(format!(
                "output gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                graph.num_nodes(),
                self.out_features
            )));
        }
        let norms = self.norms(graph);
        let mut dx = match self.resolve_strategy(graph) {
            Strategy::NodeTransform => self.backward_transform(graph, plan, x, grad_out, &norms),
            _ => self.backward_edges(graph, plan, x, grad_out, &norms),
        };
        if let (Some(root), Some(groot)) = (&self.root, self.grad_root.as_mut()) {
            let g = matmul_tn(x, grad_out)?;
            for (a, &b) in groot.iter_mut().zip(g.as_slice()) {
                *a += b;
            }
            let mo = self.out_features;
            dx.as_mut_slice()
                .par_chunks_mut(self.in_features)
                .zip(grad_out.as_slice().par_chunks(mo))
                .with_min_len(MIN_ROWS_PER_TASK)
                .for_each(|(dxi, gi)| {
                    for (l, slot) in dxi.iter_mut().enumerate() {
                        *slot += dot(&root[l * mo..(l + 1) * mo], gi);
                    }
                });
        }
        Ok(dx)
    }

    fn backward_edges(
        &mut self,
        graph: &Graph,
        plan: &BasisPlan<T>,
        x: &Matrix<T>,
        grad_out: &Matrix<T>,
        norms: &[T],
    ) -> Matrix<T> {
        let (mi, mo) = (self.in_features, self.out_features);
        let block = mi * mo;
        let origins = graph.origins();
        let targets = graph.targets();
        let (in_ptr, in_edges) = (graph.in_ptr(), graph.in_edges());
        let w = &self.weight;

        let mut dx = Matrix::zeros(graph.num_nodes(), mi);
        dx.as_mut_slice()
            .par_chunks_mut(mi)
            .enumerate()
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(j, dxj)| {
                for &e in &in_edges[in_ptr[j]..in_ptr[j + 1]] {
                    let i = origins[e];
                    let g = grad_out.row(i);
                    for (&q, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                        let c = norms[i] * b;
                        if c == T::zero() {
                            continue;
                        }
                        let wq = &w[q as usize * block..(q as usize + 1) * block];
                        for (l, slot) in dxj.iter_mut().enumerate() {
                            *slot += c * dot(&wq[l * mo..(l + 1) * mo], g);
                        }
                    }
                }
            });

        let partials = chunked(graph.num_edges(), self.weight.len(), |range, buf| {
            for e in range {
                let (i, j) = (origins[e], targets[e]);
                let g = grad_out.row(i);
                let xj = x.row(j);
                for (&q, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                    let c = norms[i] * b;
                    if c == T::zero() {
                        continue;
                    }
                    let gq = &mut buf[q as usize * block..(q as usize + 1) * block];
                    for (l, &v) in xj.iter().enumerate() {
                        let cv = c * v;
                        if cv != T::zero() {
                            axpy(cv, g, &mut gq[l * mo..(l + 1) * mo]);
                        }
                    }
                }
            }
        });
        accumulate(&mut self.grad_weight, partials);
        dx
    }

    fn backward_transform(
        &mut self,
        graph: &Graph,
        plan: &BasisPlan<T>,
        x: &Matrix<T>,
        grad_out: &Matrix<T>,
        norms: &[T],
    ) -> Matrix<T> {
        let (mi, mo) = (self.in_features, self.out_features);
        let k = self.config.num_weights();
        let stride = k * mo;
        let origins = graph.origins();
        let (in_ptr, in_edges) = (graph.in_ptr(), graph.in_edges());

        // A[j, q, :] = sum over edges (i, j) of n_i * B * grad_out[i, :]
        let mut a = vec![T::zero(); graph.num_nodes() * stride];
        a.par_chunks_mut(stride)
            .enumerate()
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(j, aj)| {
                for &e in &in_edges[in_ptr[j]..in_ptr[j + 1]] {
                    let i = origins[e];
                    let g = grad_out.row(i);
                    for (&q, &b) in plan.index_row(e).iter().zip(plan.basis_row(e)) {
                        let c = norms[i] * b;
                        if c != T::zero() {
                            axpy(c, g, &mut aj[q as usize * mo..(q as usize + 1) * mo]);
                        }
                    }
                }
            });

        let partials = chunked(graph.num_nodes(), self.weight.len(), |range, buf| {
            for j in range {
                let aj = &a[j * stride..(j + 1) * stride];
                for (l, &v) in x.row(j).iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    for q in 0..k {
                        let base = (q * mi + l) * mo;
                        axpy(v, &aj[q * mo..(q + 1) * mo], &mut buf[base..base + mo]);
                    }
                }
            }
        });
        accumulate(&mut self.grad_weight, partials);

        let w = &self.weight;
        let mut dx = Matrix::zeros(graph.num_nodes(), mi);
        dx.as_mut_slice()
            .par_chunks_mut(mi)
            .enumerate()
            .with_min_len(MIN_ROWS_PER_TASK)
            .for_each(|(j, dxj)| {
                let aj = &a[j * stride..(j + 1) * stride];
                for q in 0..k {
                    let aq = &aj[q * mo..(q + 1) * mo];
                    if aq.iter().all(|&v| v == T::zero()) {
                        continue;
                    }
                    for (l, slot) in dxj.iter_mut().enumerate() {
                        let base = (q * mi + l) * mo;
                        *slot += dot(&w[base..base + mo], aq);
                    }
                }
            });
        dx
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn chunk_range(n: usize, c: usize) -> Range<usize> {
    let per = n.div_ceil(GRAD_CHUNKS);
    (c * per).min(n)..((c + 1) * per).min(n)
}

/// Runs `f` on [`GRAD_CHUNKS`] contiguous ranges of `0..n`, each with its
/// own zeroed buffer of length `len`. Empty ranges yield `None`.
fn chunked<T: Real>(
    n: usize,
    len: usize,
    f: impl Fn(Range<usize>, &mut [T]) + Sync,
) -> Vec<Option<Vec<T>>> {
    (0..GRAD_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let range = chunk_range(n, c);
            if range.is_empty() {
                return None;
            }
            let mut buf = vec![T::zero(); len];
            f(range, &mut buf);
            Some(buf)
        })
        .collect()
}

fn accumulate<T: Real>(target: &mut [T], partials: Vec<Option<Vec<T>>>) {
    for buf in partials.into_iter().flatten() {
        for (a, &b) in target.iter_mut().zip(&buf) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphParts;
    use crate::kernel::compute_plan;
    use crate::oracle::{finite_diff_grad, naive_spline_conv, FdConfig};

    /// Random graph with distinct edges and random pseudo-coordinates.
    fn random_graph(rng: &mut ChaCha8Rng, n: usize, e: usize, d: usize) -> Graph {
        let mut edges = std::collections::BTreeSet::new();
        while edges.len() < e {
            edges.insert((rng.gen_range(0..n), rng.gen_range(0..n)));
        }
        let pseudo = Matrix::from_fn(e, d, |_, _| rng.gen_range(0.0..=1.0));
        Graph::new(GraphParts {
            num_nodes: n,
            edges: edges.into_iter().collect(),
            pseudo: Some(pseudo),
            features: Matrix::zeros(n, 0),
            ..Default::default()
        })
        .unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn layer(cfg: &KernelConfig, mi: usize, mo: usize, root: bool, norm: bool, seed: u64) -> SplineConv<f64> {
        let mut l = SplineConv::new(cfg.clone(), mi, mo, root, norm).unwrap();
        l.init_weights(seed);
        l
    }

    #[test]
    fn constant_weights_average_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 8, 20, 2);
        let cfg = KernelConfig::open(2, vec![4, 4]).unwrap();
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        let x = random_matrix(&mut rng, 8, 3);
        let mut l = SplineConv::<f64>::new(cfg, 3, 2, false, true).unwrap();
        l.weight_mut().iter_mut().for_each(|w| *w = 0.7);
        for strategy in [Strategy::EdgeParallel, Strategy::NodeTransform] {
            l.set_strategy(strategy);
            let out = l.forward(&g, &plan, &x).unwrap();
            for i in 0..8 {
                let nb: Vec<usize> = g.edges().filter(|&(a, _)| a == i).map(|(_, j)| j).collect();
                let want = if nb.is_empty() {
                    0.0
                } else {
                    0.7 * nb.iter().map(|&j| x.row(j).iter().sum::<f64>()).sum::<f64>() / nb.len() as f64
                };
                for o in 0..2 {
                    assert!((out.get(i, o) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_node_uses_root_only() {
        let g = Graph::from_edges(1, vec![]).unwrap().with_pseudo(Matrix::zeros(0, 1)).unwrap();
        let cfg = KernelConfig::open(1, vec![2]).unwrap();
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        let l = layer(&cfg, 2, 3, true, true, 4);
        let x = Matrix::from_vec(1, 2, vec![0.5, -2.0]).unwrap();
        let out = l.forward(&g, &plan, &x).unwrap();
        let r = l.root().unwrap();
        for o in 0..3 {
            assert!((out.get(0, o) - (0.5 * r[o] - 2.0 * r[3 + o])).abs() < 1e-15);
        }
        let no_root = layer(&cfg, 2, 3, false, true, 4);
        assert!(no_root.forward(&g, &plan, &x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_graph(&mut rng, 6, 10, 2);
        let cfg = KernelConfig::open(1, vec![3, 3]).unwrap();
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        let x = random_matrix(&mut rng, 6, 2);
        for strategy in [Strategy::EdgeParallel, Strategy::NodeTransform] {
            for (root, norm) in [(false, true), (true, false), (true, true)] {
                let mut l = layer(&cfg, 2, 3, root, norm, 9);
                l.set_strategy(strategy);
                let fast = l.forward(&g, &plan, &x).unwrap();
                let slow = naive_spline_conv(&g, &cfg, l.weight(), l.root(), &x, norm).unwrap();
                assert!(fast.max_abs_diff(&slow) <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(&mut rng, 12, 30, 2);
        let cfg = KernelConfig::open(2, vec![4, 4]).unwrap();
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        let mut l = layer(&cfg, 3, 4, true, true, 1);
        let x = random_matrix(&mut rng, 12, 3);
        let (_, cache) = l.forward_train(&g, &plan, &x).unwrap();
        let dx = l.backward(&g, &plan, &cache, &Matrix::zeros(12, 4)).unwrap();
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
        assert!(l.grad_weight().iter().all(|&v| v == 0.0));
        assert!(l.grad_root().unwrap().iter().all(|&v| v == 0.0));
    }

    /// Analytic gradients against central differences of `sum(c * out)`.
    fn gradient_check(cfg: KernelConfig, strategy: Strategy, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 12, 30, cfg.dim());
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        let mut l = layer(&cfg, 3, 4, true, true, seed);
        l.set_strategy(strategy);
        let x = random_matrix(&mut rng, 12, 3);
        let c = random_matrix(&mut rng, 12, 4);
        let (_, cache) = l.forward_train(&g, &plan, &x).unwrap();
        let dx = l.backward(&g, &plan, &cache, &c).unwrap();
        let fd = FdConfig::default();
        let loss = |layer: &SplineConv<f64>, x: &Matrix<f64>| layer.forward(&g, &plan, x).unwrap().dot(&c);

        let mut worst = 0.0f64;
        let num = finite_diff_grad(
            l.weight(),
            |w| {
                let mut p = l.clone();
                p.weight_mut().copy_from_slice(w);
                loss(&p, &x)
            },
            &fd,
        )
        .unwrap();
        worst = worst.max(fd.max_relative_error(l.grad_weight(), &num));
        let num = finite_diff_grad(
            l.root().unwrap(),
            |r| {
                let mut p = l.clone();
                p.root_mut().unwrap().copy_from_slice(r);
                loss(&p, &x)
            },
            &fd,
        )
        .unwrap();
        worst = worst.max(fd.max_relative_error(l.grad_root().unwrap(), &num));
        let num = finite_diff_grad(
            x.as_slice(),
            |v| loss(&l, &Matrix::from_vec(12, 3, v.to_vec()).unwrap()),
            &fd,
        )
        .unwrap();
        worst.max(fd.max_relative_error(dx.as_slice(), &num))
    }

    #[test]
    fn gradients_match_finite_differences() {
        for m in 1..=3 {
            let cfg = KernelConfig::new(m, vec![m + 2, m + 1], vec![false, true]).unwrap();
            for strategy in [Strategy::EdgeParallel, Strategy::NodeTransform] {
                let err = gradient_check(cfg.clone(), strategy, 10 + m as u64);
                assert!(err <= 1e-5, "m={m} {strategy:?}: {err}");
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(&mut rng, 15, 40, 3);
        let cfg = KernelConfig::open(1, vec![3, 2, 4]).unwrap();
        let plan = compute_plan(g.pseudo().unwrap(), &cfg).unwrap();
        for strategy in [Strategy::EdgeParallel, Strategy::NodeTransform] {
            let mut l = layer(&cfg, 3, 5, true, true, 4);
            l.set_strategy(strategy);
            let x = random_matrix(&mut rng, 15, 3);
            let y = random_matrix(&mut rng, 15, 5);
            let (fx, cache) = l.forward_train(&g, &plan, &x).unwrap();
            let bty = l.backward(&g, &plan, &cache, &y).unwrap();
            assert!((fx.dot(&y) - x.dot(&bty)).abs() <= 1e-6);
        }
    }

    #[test]
    fn strategies_agree_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(&mut rng, 200, 1500, 2);
        let cfg = KernelConfig::new(3, vec![5, 6], vec![false, true]).unwrap();
        let plan = compute_plan::<f32>(g.pseudo().unwrap(), &cfg).unwrap();
        let x = random_matrix(&mut rng, 200, 4).cast::<f32>();
        let dy = random_matrix(&mut rng, 200, 6).cast::<f32>();
        let run = |strategy| {
            let mut l = SplineConv::<f32>::new(cfg.clone(), 4, 6, true, true).unwrap();
            l.init_weights(77);
            l.set_strategy(strategy);
            let (y, cache) = l.forward_train(&g, &plan, &x).unwrap();
            let dx = l.backward(&g, &plan, &cache, &dy).unwrap();
            (y, dx, l.grad_weight().to_vec())
        };
        let a = run(Strategy::EdgeParallel);
        assert_eq!(a, run(Strategy::EdgeParallel));
        let b = run(Strategy::NodeTransform);
        assert_eq!(b, run(Strategy::NodeTransform));
        assert!(a.0.max_abs_diff(&b.0) < 1e-4);
        assert!(a.1.max_abs_diff(&b.1) < 1e-4);
        let gd = a.2.iter().zip(&b.2).fold(0.0f32, |m, (p, q)| m.max((p - q).abs()));
        assert!(gd < 1e-4);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = KernelConfig::open(1, vec![3, 3]).unwrap();
        let a = layer(&cfg, 1, 64, true, true, 42);
        assert_eq!(a, layer(&cfg, 1, 64, true, true, 42));
        assert_ne!(a.weight(), layer(&cfg, 1, 64, true, true, 43).weight());
        assert_eq!(a.init_bound(), 0.5);
        let big = layer(&KernelConfig::open(2, vec![5, 5]).unwrap(), 8, 32, true, true, 7);
        let b = big.init_bound();
        let w = big.weight();
        assert!(w.iter().all(|v| v.abs() < b));
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() <= 3.0 * b / (3.0 * w.len() as f64).sqrt());
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_graph(&mut rng, 5, 8, 2);
        let cfg = KernelConfig::open(1, vec![3, 3]).unwrap();
        let plan = compute_plan::<f64>(g.pseudo().unwrap(), &cfg).unwrap();
        let mut l = layer(&cfg, 2, 2, true, true, 0);
        assert!(l.forward(&g, &plan, &Matrix::zeros(5, 3)).is_err());
        assert!(l.forward(&g, &plan, &Matrix::zeros(4, 2)).is_err());
        let other = KernelConfig::open(1, vec![4, 3]).unwrap();
        let wrong = compute_plan::<f64>(g.pseudo().unwrap(), &other).unwrap();
        assert!(l.forward(&g, &wrong, &Matrix::zeros(5, 2)).is_err());
        let (_, cache) = l.forward_train(&g, &plan, &Matrix::zeros(5, 2)).unwrap();
        assert!(l.backward(&g, &plan, &cache, &Matrix::zeros(5, 3)).is_err());
        let g2 = random_graph(&mut rng, 5, 9, 2);
        let plan2 = compute_plan::<f64>(g2.pseudo().unwrap(), &cfg).unwrap();
        assert!(l.backward(&g2, &plan2, &cache, &Matrix::zeros(5, 2)).is_err());
        assert!(SplineConv::<f64>::new(cfg, 0, 2, true, true).is_err());
    }
}
