//! Directed graphs with per-edge pseudo-coordinates, mini-batches and
//! ingestion of images, meshes and citation data.
//!
//! An edge `(i, j)` means node `i` aggregates from node `j`, so the
//! neighborhood of `i` is `{ j : (i, j) in E }` and `degree(i)` is the
//! out-degree. Edges are kept sorted by `(origin, target)`; duplicates are
//! rejected.

mod container;
mod cora;
mod grid;
mod image;
mod mesh;

pub use container::{load_graph_container, parse_graph_container, save_graph_container, write_graph_container};
pub use cora::{load_cora, parse_cora, split_nodes, CoraData, NodeSplit, CORA_FEATURES, CORA_NODES};
pub use grid::{build_grid_graph, Neighborhood};
pub use image::{load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels, IdxImages};
pub use mesh::{load_off_mesh, parse_off_mesh};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Owned pieces of a [`Graph`], validated by [`Graph::new`].
#[derive(Clone, Debug, Default)]
pub struct GraphParts {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// `E x d` pseudo-coordinates in `[0, 1]`, row `e` belongs to `edges[e]`.
    pub pseudo: Option<Matrix<f64>>,
    /// `N x M_in`; may have zero columns.
    pub features: Matrix<f64>,
    pub labels: Option<Vec<usize>>,
    /// `N x dim_pos` raw positions (pixels, mesh units).
    pub positions: Option<Matrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    origins: Vec<usize>,
    targets: Vec<usize>,
    /// Edges of origin `i` occupy `row_ptr[i]..row_ptr[i + 1]`.
    row_ptr: Vec<usize>,
    /// Edge ids grouped by target: `in_edges[in_ptr[j]..in_ptr[j + 1]]`.
    in_ptr: Vec<usize>,
    in_edges: Vec<usize>,
    pseudo: Option<Matrix<f64>>,
    features: Matrix<f64>,
    labels: Option<Vec<usize>>,
    positions: Option<Matrix<f64>>,
}

impl Graph {
    pub fn new(parts: GraphParts) -> Result<Graph> {
        let GraphParts {
            num_nodes: n,
            edges,
            pseudo,
            features,
            labels,
            positions,
        } = parts;
        if features.rows() != n {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows for {n} nodes",
                features.rows()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        if let Some(pos) = &positions {
            if pos.rows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "positions have {} rows for {n} nodes",
                    pos.rows()
                )));
            }
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge {e} = ({a}, {b}) out of range for {n} nodes"
                )));
            }
        }
        if let Some(p) = &pseudo {
            check_pseudo(p, edges.len())?;
        }

        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&e| edges[e]);
        for w in order.windows(2) {
            if edges[w[0]] == edges[w[1]] {
                let (a, b) = edges[w[0]];
                return Err(Error::InvalidArgument(format!("duplicate edge ({a}, {b})")));
            }
        }
        let origins: Vec<usize> = order.iter().map(|&e| edges[e].0).collect();
        let targets: Vec<usize> = order.iter().map(|&e| edges[e].1).collect();
        let pseudo = match pseudo {
            Some(p) if order.iter().enumerate().any(|(k, &e)| k != e) => Some(p.select_rows(&order)),
            other => other,
        };

        let row_ptr = prefix_counts(n, &origins);
        let in_ptr = prefix_counts(n, &targets);
        let mut fill = in_ptr.clone();
        let mut in_edges = vec![0; targets.len()];
        for (e, &t) in targets.iter().enumerate() {
            in_edges[fill[t]] = e;
            fill[t] += 1;
        }

        Ok(Graph {
            num_nodes: n,
            origins,
            targets,
            row_ptr,
            in_ptr,
            in_edges,
            pseudo,
            features,
            labels,
            positions,
        })
    }

    /// A graph with `n` nodes, the given edges and no attributes.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Graph> {
        Graph::new(GraphParts {
            num_nodes: n,
            edges,
            features: Matrix::zeros(n, 0),
            ..Default::default()
        })
    }

    pub fn into_parts(self) -> GraphParts {
        GraphParts {
            num_nodes: self.num_nodes,
            edges: self.origins.into_iter().zip(self.targets).collect(),
            pseudo: self.pseudo,
            features: self.features,
            labels: self.labels,
            positions: self.positions,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.origins.len()
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.origins.iter().copied().zip(self.targets.iter().copied())
    }

    #[inline]
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    #[inline]
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Offsets of each node's outgoing edge run (length `N + 1`).
    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Offsets into [`Graph::in_edges`] per target node (length `N + 1`).
    #[inline]
    pub fn in_ptr(&self) -> &[usize] {
        &self.in_ptr
    }

    /// Edge ids sorted by target node, ties by edge id.
    #[inline]
    pub fn in_edges(&self) -> &[usize] {
        &self.in_edges
    }

    /// `|N(i)|`, the number of edges with origin `i`.
    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes
            && self.targets[self.row_ptr[i]..self.row_ptr[i + 1]]
                .binary_search(&j)
                .is_ok()
    }

    pub fn pseudo(&self) -> Option<&Matrix<f64>> {
        self.pseudo.as_ref()
    }

    /// Dimension `d` of the pseudo-coordinates, 0 when unset.
    pub fn pseudo_dim(&self) -> usize {
        self.pseudo.as_ref().map_or(0, |p| p.cols())
    }

    pub fn features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn positions(&self) -> Option<&Matrix<f64>> {
        self.positions.as_ref()
    }

    pub fn position_dim(&self) -> usize {
        self.positions.as_ref().map_or(0, |p| p.cols())
    }

    /// Replaces the pseudo-coordinates; rows follow the stored edge order.
    pub fn with_pseudo(mut self, pseudo: Matrix<f64>) -> Result<Graph> {
        check_pseudo(&pseudo, self.num_edges())?;
        self.pseudo = Some(pseudo);
        Ok(self)
    }

    pub fn without_pseudo(mut self) -> Graph {
        self.pseudo = None;
        self
    }

    pub fn with_features(mut self, features: Matrix<f64>) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Graph> {
        if let Some(l) = &labels {
            if l.len() != self.num_nodes {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    self.num_nodes
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }
}

fn check_pseudo(p: &Matrix<f64>, num_edges: usize) -> Result<()> {
    if p.rows() != num_edges {
        return Err(Error::ShapeMismatch(format!(
            "pseudo has {} rows for {num_edges} edges",
            p.rows()
        )));
    }
    if p.cols() == 0 && num_edges > 0 {
        return Err(Error::ShapeMismatch("pseudo must have at least one column".into()));
    }
    if let Some(pos) = p.as_slice().iter().position(|&u| !(0.0..=1.0).contains(&u)) {
        return Err(Error::InvalidArgument(format!(
            "pseudo-coordinate of edge {} outside [0, 1]: {}",
            pos / p.cols().max(1),
            p.as_slice()[pos]
        )));
    }
    Ok(())
}

fn prefix_counts(n: usize, keys: &[usize]) -> Vec<usize> {
    let mut ptr = vec![0; n + 1];
    for &k in keys {
        ptr[k + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    ptr
}

/// Block-diagonal union of several graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    graph: Graph,
    node_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
}

impl Batch {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    /// Node ranges per example; `offsets[b]..offsets[b + 1]` (length `count + 1`).
    pub fn node_offsets(&self) -> &[usize] {
        &self.node_offsets
    }

    pub fn edge_offsets(&self) -> &[usize] {
        &self.edge_offsets
    }

    pub fn example_count(&self) -> usize {
        self.node_offsets.len() - 1
    }
}

/// Concatenates graphs into one block-diagonal graph.
///
/// All members must agree on pseudo dimension, feature width, position
/// dimension and on whether labels are present.
pub fn batch_graphs(graphs: &[&Graph]) -> Result<Batch> {
    let Some(first) = graphs.first() else {
        return Ok(Batch {
            graph: Graph::from_edges(0, Vec::new())?,
            node_offsets: vec![0],
            edge_offsets: vec![0],
        });
    };
    let has_pseudo = first.pseudo.is_some();
    let d = first.pseudo_dim();
    let m_in = first.feature_dim();
    let has_labels = first.labels.is_some();
    let has_pos = first.positions.is_some();
    let pos_dim = first.position_dim();
    for (b, g) in graphs.iter().enumerate().skip(1) {
        if g.pseudo.is_some() != has_pseudo || g.pseudo_dim() != d {
            return Err(Error::InvalidArgument(format!(
                "graph {b} has pseudo dimension {} but graph 0 has {d}",
                g.pseudo_dim()
            )));
        }
        if g.feature_dim() != m_in {
            return Err(Error::InvalidArgument(format!(
                "graph {b} has {} features but graph 0 has {m_in}",
                g.feature_dim()
            )));
        }
        if g.labels.is_some() != has_labels {
            return Err(Error::InvalidArgument(format!("graph {b} disagrees on labels")));
        }
        if g.positions.is_some() != has_pos || g.position_dim() != pos_dim {
            return Err(Error::InvalidArgument(format!("graph {b} disagrees on positions")));
        }
    }

    let mut node_offsets = vec![0];
    let mut edge_offsets = vec![0];
    let mut origins = Vec::new();
    let mut targets = Vec::new();
    let mut row_ptr = vec![0];
    let mut in_ptr = vec![0];
    let mut in_edges = Vec::new();
    for g in graphs {
        let n0 = *node_offsets.last().unwrap();
        let e0 = *edge_offsets.last().unwrap();
        origins.extend(g.origins.iter().map(|&i| i + n0));
        targets.extend(g.targets.iter().map(|&j| j + n0));
        row_ptr.extend(g.row_ptr[1..].iter().map(|&p| p + e0));
        in_ptr.extend(g.in_ptr[1..].iter().map(|&p| p + e0));
        in_edges.extend(g.in_edges.iter().map(|&e| e + e0));
        node_offsets.push(n0 + g.num_nodes);
        edge_offsets.push(e0 + g.num_edges());
    }
    let pseudo = if has_pseudo {
        let parts: Vec<&Matrix<f64>> = graphs.iter().map(|g| g.pseudo.as_ref().unwrap()).collect();
        Some(Matrix::vstack(&parts)?)
    } else {
        None
    };
    let features = Matrix::vstack(&graphs.iter().map(|g| &g.features).collect::<Vec<_>>())?;
    let labels = has_labels.then(|| {
        graphs
            .iter()
            .flat_map(|g| g.labels.as_ref().unwrap().iter().copied())
            .collect()
    });
    let positions = if has_pos {
        let parts: Vec<&Matrix<f64>> = graphs.iter().map(|g| g.positions.as_ref().unwrap()).collect();
        Some(Matrix::vstack(&parts)?)
    } else {
        None
    };

    let graph = Graph {
        num_nodes: *node_offsets.last().unwrap(),
        origins,
        targets,
        row_ptr,
        in_ptr,
        in_edges,
        pseudo,
        features,
        labels,
        positions,
    };
    Ok(Batch {
        graph,
        node_offsets,
        edge_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n.saturating_sub(1) {
            edges.push((i, i + 1));
            edges.push((i + 1, i));
        }
        Graph::from_edges(n, edges).unwrap()
    }

    fn with_n_e(n: usize, e: usize) -> Graph {
        let edges: Vec<_> = (0..e).map(|k| (k % n, (k / n + k % n + 1) % n)).collect();
        Graph::new(GraphParts {
            num_nodes: n,
            pseudo: Some(Matrix::from_fn(e, 2, |i, j| ((i + j) % 3) as f64 / 2.0)),
            features: Matrix::from_fn(n, 1, |i, _| i as f64),
            edges,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn edges_sorted_and_pseudo_follows() {
        let g = Graph::new(GraphParts {
            num_nodes: 3,
            edges: vec![(2, 0), (0, 1), (1, 2)],
            pseudo: Some(Matrix::from_vec(3, 1, vec![0.2, 0.0, 0.1]).unwrap()),
            features: Matrix::zeros(3, 0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(g.pseudo().unwrap().as_slice(), &[0.0, 0.1, 0.2]);
        assert_eq!(g.in_edges(), &[2, 0, 1]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(2, vec![(0, 2)]).is_err());
        assert!(Graph::from_edges(2, vec![(0, 1), (0, 1)]).is_err());
        let bad = Graph::from_edges(2, vec![(0, 1)])
            .unwrap()
            .with_pseudo(Matrix::from_vec(1, 1, vec![1.5]).unwrap());
        assert!(bad.is_err());
    }

    #[test]
    fn degree_cache_counts_origins() {
        let g = path(4);
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
        assert_eq!(g.max_degree(), 2);
        assert!(g.has_edge(1, 2) && !g.has_edge(0, 2));
    }

    #[test]
    fn batch_offsets() {
        let a = with_n_e(3, 4);
        let b = with_n_e(5, 6);
        let batch = batch_graphs(&[&a, &b]).unwrap();
        assert_eq!(batch.graph().num_nodes(), 8);
        assert_eq!(batch.graph().num_edges(), 10);
        assert_eq!(batch.node_offsets(), &[0, 3, 8]);
        assert_eq!(batch.edge_offsets(), &[0, 4, 10]);
        assert_eq!(batch.example_count(), 2);
        // no edge crosses example boundaries and degrees survive
        for (i, j) in batch.graph().edges() {
            assert_eq!(i < 3, j < 3);
        }
        let mut degs = a.degrees();
        degs.extend(b.degrees());
        assert_eq!(batch.graph().degrees(), degs);
        assert_eq!(batch.graph().features().get(4, 0), 1.0);
    }

    #[test]
    fn batch_of_one_is_identity() {
        let a = with_n_e(4, 7);
        let batch = batch_graphs(&[&a]).unwrap();
        assert_eq!(batch.graph(), &a);
        assert_eq!(batch.node_offsets(), &[0, 4]);
    }

    #[test]
    fn batch_rejects_mismatched_dims() {
        let a = with_n_e(3, 4);
        let b = Graph::from_edges(3, vec![(0, 1)])
            .unwrap()
            .with_pseudo(Matrix::from_vec(1, 1, vec![0.5]).unwrap())
            .unwrap()
            .with_features(Matrix::zeros(3, 1))
            .unwrap();
        assert!(batch_graphs(&[&a, &b]).is_err());
        let c = with_n_e(3, 4).with_features(Matrix::zeros(3, 2)).unwrap();
        assert!(batch_graphs(&[&a, &c]).is_err());
    }

    #[test]
    fn batch_matches_rebuilt_graph() {
        let a = with_n_e(3, 4);
        let b = with_n_e(5, 6);
        let batch = batch_graphs(&[&a, &b]).unwrap();
        let rebuilt = Graph::new(batch.graph().clone().into_parts()).unwrap();
        assert_eq!(&rebuilt, batch.graph());
    }
}
