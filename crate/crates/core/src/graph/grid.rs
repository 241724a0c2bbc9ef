use crate::error::{Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::tensor::Matrix;

/// Which lattice neighbors a grid node aggregates from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighborhood {
    /// Horizontal and vertical neighbors.
    Cross4,
    /// The 3x3 block minus the center.
    Full8,
    /// The 5x5 block minus the center.
    Full24,
}

impl Neighborhood {
    fn offsets(self) -> Vec<(i64, i64)> {
        let r: i64 = match self {
            Neighborhood::Cross4 | Neighborhood::Full8 => 1,
            Neighborhood::Full24 => 2,
        };
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                if self == Neighborhood::Cross4 && dx != 0 && dy != 0 {
                    continue;
                }
                out.push((dx, dy));
            }
        }
        out
    }

    pub fn radius(self) -> usize {
        match self {
            Neighborhood::Cross4 | Neighborhood::Full8 => 1,
            Neighborhood::Full24 => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Neighborhood> {
        match s {
            "cross4" => Some(Neighborhood::Cross4),
            "full8" => Some(Neighborhood::Full8),
            "full24" => Some(Neighborhood::Full24),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Neighborhood::Cross4 => "cross4",
            Neighborhood::Full8 => "full8",
            Neighborhood::Full24 => "full24",
        }
    }
}

/// Builds a `width x height` pixel lattice.
///
/// Node `y * width + x` sits at position `(x, y)`. Border nodes get the
/// truncated neighborhood. Pseudo-coordinates are left unset and features
/// have zero columns.
pub fn build_grid_graph(
    width: usize,
    height: usize,
    neighborhood: Neighborhood,
    include_self: bool,
) -> Result<Graph> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    let n = width * height;
    let offsets = neighborhood.offsets();
    let mut edges = Vec::with_capacity(n * (offsets.len() + 1));
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let i = (y * width as i64 + x) as usize;
            if include_self {
                edges.push((i, i));
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
                    edges.push((i, (ny * width as i64 + nx) as usize));
                }
            }
        }
    }
    let positions = Matrix::from_fn(n, 2, |i, c| if c == 0 { (i % width) as f64 } else { (i / width) as f64 });
    Graph::new(GraphParts {
        num_nodes: n,
        edges,
        features: Matrix::zeros(n, 0),
        positions: Some(positions),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_full8() {
        let g = build_grid_graph(3, 3, Neighborhood::Full8, false).unwrap();
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_edges(), 40);
        assert_eq!(g.degree(4), 8);
        for corner in [0, 2, 6, 8] {
            assert_eq!(g.degree(corner), 3);
        }
    }

    #[test]
    fn single_pixel_has_no_edges() {
        let g = build_grid_graph(1, 1, Neighborhood::Full8, false).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (1, 0));
    }

    #[test]
    fn two_by_two_cross_with_self() {
        let g = build_grid_graph(2, 2, Neighborhood::Cross4, true).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (4, 12));
        assert!(g.degrees().iter().all(|&d| d == 3));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(build_grid_graph(0, 3, Neighborhood::Full8, false).is_err());
        assert!(build_grid_graph(3, 0, Neighborhood::Cross4, true).is_err());
    }

    #[test]
    fn full24_interior_degree_and_positions() {
        let g = build_grid_graph(7, 6, Neighborhood::Full24, false).unwrap();
        let center = 3 * 7 + 3;
        assert_eq!(g.degree(center), 24);
        assert_eq!(g.num_edges(), g.degrees().iter().sum::<usize>());
        let pos = g.positions().unwrap();
        assert_eq!(pos.row(center), &[3.0, 3.0]);
        assert_eq!(pos.row(7), &[0.0, 1.0]);
    }

    #[test]
    fn full8_interior_degree_is_eight() {
        let g = build_grid_graph(5, 4, Neighborhood::Full8, false).unwrap();
        for y in 1..3 {
            for x in 1..4 {
                assert_eq!(g.degree(y * 5 + x), 8);
            }
        }
        // symmetric adjacency
        for (i, j) in g.edges() {
            assert!(g.has_edge(j, i));
        }
    }
}
