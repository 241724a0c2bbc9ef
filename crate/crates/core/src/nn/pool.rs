//! Graclus-style graph coarsening with max pooling, and global average
//! pooling.
//!
//! One matching level visits nodes in a fixed order and pairs each
//! unmatched node with its unmatched neighbor of smallest index. Nodes that
//! find no partner stay singletons. Cluster ids are handed out in visit
//! order, so they are contiguous from 0.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::pseudo::{fit_and_apply, recompute_pseudo, PseudoKind, PseudoSpec};
use crate::real::Real;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisitOrder {
    Ascending,
    Seeded(u64),
}

impl VisitOrder {
    fn order(self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if let VisitOrder::Seeded(seed) = self {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        order
    }

    /// Order for the next matching level.
    fn next(self) -> VisitOrder {
        match self {
            VisitOrder::Ascending => VisitOrder::Ascending,
            VisitOrder::Seeded(s) => VisitOrder::Seeded(s.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        }
    }
}

/// One greedy matching level. Returns the cluster id of every node and the
/// number of clusters.
pub fn graclus_match(graph: &Graph, order: VisitOrder) -> (Vec<usize>, usize) {
    let n = graph.num_nodes();
    let rp = graph.row_ptr();
    let targets = graph.targets();
    let mut assign = vec![usize::MAX; n];
    let mut next = 0;
    for i in order.order(n) {
        if assign[i] != usize::MAX {
            continue;
        }
        assign[i] = next;
        // targets are sorted within a row, so the first hit is the smallest
        if let Some(&j) = targets[rp[i]..rp[i + 1]].iter().find(|&&j| j != i && assign[j] == usize::MAX) {
            assign[j] = next;
        }
        next += 1;
    }
    (assign, next)
}

/// A coarsened graph and the map from fine nodes to clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolResult {
    pub graph: Graph,
    pub cluster_assign: Vec<usize>,
    pub num_clusters: usize,
}

/// Coarsens `graph` by `levels` matching levels.
///
/// Cluster positions are the centroids of their original member positions.
/// Coarse edges are the distinct images of fine edges; a coarse self-loop
/// exists only where some member had one. When `pseudo` is given, the
/// coarse graph gets freshly fitted pseudo-coordinates of that kind.
pub fn coarsen(graph: &Graph, levels: usize, order: VisitOrder, pseudo: Option<PseudoKind>) -> Result<PoolResult> {
    let positions = graph
        .positions()
        .ok_or_else(|| Error::MissingData("pooling needs node positions".into()))?;
    let n = graph.num_nodes();
    let mut assign: Vec<usize> = (0..n).collect();
    let mut count = n;
    let mut current = graph.clone();
    let mut order = order;
    for _ in 0..levels {
        let (level, c) = graclus_match(&current, order);
        for a in assign.iter_mut() {
            *a = level[*a];
        }
        count = c;
        current = Graph::new(GraphParts {
            num_nodes: c,
            edges: coarse_edges(&current, &level),
            features: Matrix::zeros(c, 0),
            ..Default::default()
        })?;
        order = order.next();
    }

    let dim = positions.cols();
    let mut centroid = Matrix::<f64>::zeros(count, dim);
    let mut sizes = vec![0usize; count];
    for (i, &c) in assign.iter().enumerate() {
        sizes[c] += 1;
        for (slot, &p) in centroid.row_mut(c).iter_mut().zip(positions.row(i)) {
            *slot += p;
        }
    }
    for (c, &size) in sizes.iter().enumerate() {
        centroid.row_mut(c).iter_mut().for_each(|v| *v /= size as f64);
    }
    let mut parts = current.into_parts();
    parts.positions = Some(centroid);
    parts.pseudo = None;
    let mut coarse = Graph::new(parts)?;
    if let Some(kind) = pseudo {
        // Clusters can share a centroid, so every offset may vanish; any
        // scale then gives the same coordinates.
        coarse = match fit_and_apply(coarse.clone(), kind) {
            Ok((g, _)) => g,
            Err(Error::DegenerateGeometry(_)) => recompute_pseudo(coarse, &PseudoSpec { kind, scale: 1.0 })?,
            Err(e) => return Err(e),
        };
    }
    Ok(PoolResult { graph: coarse, cluster_assign: assign, num_clusters: count })
}

fn coarse_edges(graph: &Graph, assign: &[usize]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = graph
        .edges()
        .filter(|&(i, j)| i == j || assign[i] != assign[j])
        .map(|(i, j)| (assign[i], assign[j]))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Per-cluster, per-feature maximum. Also returns the source node of every
/// output entry (first node on ties).
pub fn max_pool<T: Real>(x: &Matrix<T>, assign: &[usize], num_clusters: usize) -> Result<(Matrix<T>, Vec<usize>)> {
    if assign.len() != x.rows() {
        return Err(Error::ShapeMismatch(format!("{} assignments for {} rows", assign.len(), x.rows())));
    }
    let f = x.cols();
    let mut out = Matrix::zeros(num_clusters, f);
    let mut arg = vec![usize::MAX; num_clusters * f];
    for (i, &c) in assign.iter().enumerate() {
        if c >= num_clusters {
            return Err(Error::InvalidArgument(format!("cluster id {c} out of range")));
        }
        for (l, &v) in x.row(i).iter().enumerate() {
            let slot = c * f + l;
            if arg[slot] == usize::MAX || v > out.get(c, l) {
                out.set(c, l, v);
                arg[slot] = i;
            }
        }
    }
    if f > 0 && arg.iter().any(|&a| a == usize::MAX) {
        return Err(Error::InvalidArgument("a cluster has no members".into()));
    }
    Ok((out, arg))
}

/// Routes each pooled gradient entry to its source node.
pub fn max_pool_backward<T: Real>(grad_out: &Matrix<T>, argmax: &[usize], num_nodes: usize) -> Matrix<T> {
    let f = grad_out.cols();
    let mut dx = Matrix::zeros(num_nodes, f);
    for (slot, &src) in argmax.iter().enumerate() {
        let (c, l) = (slot / f, slot % f);
        dx.set(src, l, dx.get(src, l) + grad_out.get(c, l));
    }
    dx
}

/// Coarsens by `cluster_size` (2 or 4) and max-pools `x` onto the clusters.
pub fn graclus_pool<T: Real>(
    graph: &Graph,
    x: &Matrix<T>,
    cluster_size: usize,
    order: VisitOrder,
    pseudo: Option<PseudoKind>,
) -> Result<(PoolResult, Matrix<T>, Vec<usize>)> {
    let levels = match cluster_size {
        2 => 1,
        4 => 2,
        c => return Err(Error::InvalidConfig(format!("cluster size must be 2 or 4, got {c}"))),
    };
    let pooled = coarsen(graph, levels, order, pseudo)?;
    let (y, arg) = max_pool(x, &pooled.cluster_assign, pooled.num_clusters)?;
    Ok((pooled, y, arg))
}

/// Mean feature vector of each example, `offsets` delimiting node ranges.
pub fn global_avg_pool<T: Real>(x: &Matrix<T>, offsets: &[usize]) -> Result<Matrix<T>> {
    check_offsets(offsets, x.rows())?;
    let b = offsets.len() - 1;
    let mut out = Matrix::zeros(b, x.cols());
    for k in 0..b {
        let (lo, hi) = (offsets[k], offsets[k + 1]);
        let inv = T::one() / T::of((hi - lo) as f64);
        let row = out.row_mut(k);
        for i in lo..hi {
            for (s, &v) in row.iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

pub fn global_avg_pool_backward<T: Real>(grad_out: &Matrix<T>, offsets: &[usize]) -> Result<Matrix<T>> {
    let n = *offsets.last().unwrap_or(&0);
    check_offsets(offsets, n)?;
    let mut dx = Matrix::zeros(n, grad_out.cols());
    for k in 0..offsets.len() - 1 {
        let (lo, hi) = (offsets[k], offsets[k + 1]);
        let inv = T::one() / T::of((hi - lo) as f64);
        for i in lo..hi {
            for (d, &g) in dx.row_mut(i).iter_mut().zip(grad_out.row(k)) {
                *d = g * inv;
            }
        }
    }
    Ok(dx)
}

fn check_offsets(offsets: &[usize], n: usize) -> Result<()> {
    if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != n {
        return Err(Error::ShapeMismatch(format!("offsets {offsets:?} do not cover {n} nodes")));
    }
    if offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("every example needs at least one node".into()));
    }
    Ok(())
}
