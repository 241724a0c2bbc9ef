//! ASCII OFF triangle meshes as embedded 3D graphs.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{read_to_string, Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::tensor::Matrix;

pub fn load_off_mesh(path: &Path) -> Result<Graph> {
    parse_off_mesh(&read_to_string(path)?)
}

struct Tokens<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    /// Whitespace tokens tagged with their 1-based line, `#` comments removed.
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> =
            Box::new(text.lines().enumerate().flat_map(|(k, line)| {
                let line = line.split('#').next().unwrap_or("");
                line.split_whitespace().map(move |t| (k + 1, t))
            }));
        Tokens {
            inner: it.peekable(),
            last_line: text.lines().count().max(1),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .ok_or_else(|| Error::parse(self.last_line, format!("unexpected end of file, expected {what}")))
    }

    fn int(&mut self, what: &str) -> Result<(usize, usize)> {
        let (ln, t) = self.next(what)?;
        let v = t
            .parse::<usize>()
            .map_err(|_| Error::parse(ln, format!("{what} `{t}` is not a non-negative integer")))?;
        Ok((ln, v))
    }

    fn skip_rest_of_line(&mut self, line: usize) {
        while self.inner.next_if(|&(l, _)| l == line).is_some() {}
    }
}

/// Parses an ASCII OFF file.
///
/// Vertices become nodes with 3D positions and a single constant feature
/// of 1. Every face side `{a, b}` contributes the directed edges `(a, b)`
/// and `(b, a)` once. Only triangular faces are accepted.
pub fn parse_off_mesh(text: &str) -> Result<Graph> {
    let mut toks = Tokens::new(text);
    let (ln, magic) = toks.next("OFF header")?;
    if magic != "OFF" {
        return Err(Error::parse(ln, format!("missing `OFF` magic, found `{magic}`")));
    }
    let (_, nv) = toks.int("vertex count")?;
    let (_, nf) = toks.int("face count")?;
    toks.int("edge count")?;

    let mut coords = Vec::new();
    for _ in 0..nv {
        for _ in 0..3 {
            let (ln, t) = toks.next("vertex coordinate")?;
            let v: f64 = t
                .parse()
                .map_err(|_| Error::parse(ln, format!("coordinate `{t}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(ln, format!("coordinate `{t}` is not finite")));
            }
            coords.push(v);
        }
    }

    let mut edges = BTreeSet::new();
    for _ in 0..nf {
        let (ln, t) = toks.next("face vertex count")?;
        if t != "3" {
            return Err(Error::parse(ln, format!("only triangular faces are supported, found `{t}` vertices")));
        }
        let mut face = [0usize; 3];
        for slot in &mut face {
            let (ln, v) = toks.int("face index")?;
            if v >= nv {
                return Err(Error::parse(ln, format!("face index {v} outside [0, {nv})")));
            }
            *slot = v;
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(Error::parse(ln, format!("degenerate face {face:?}")));
        }
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            edges.insert((a, b));
            edges.insert((b, a));
        }
        // optional per-face colors
        toks.skip_rest_of_line(ln);
    }

    Graph::new(GraphParts {
        num_nodes: nv,
        edges: edges.into_iter().collect(),
        features: Matrix::from_vec(nv, 1, vec![1.0; nv])?,
        positions: Some(Matrix::from_vec(nv, 3, coords)?),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let g = parse_off_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 6));
        assert_eq!(g.positions().unwrap().row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn tetrahedron_dedups_shared_sides() {
        let text = "OFF\n# tetra\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n\
                    3 0 1 2\n3 0 1 3\n3 1 2 3\n3 0 2 3\n";
        let g = parse_off_mesh(text).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (4, 12));
        for (a, b) in g.edges() {
            assert_ne!(a, b);
            assert!(g.has_edge(b, a));
        }
    }

    #[test]
    fn face_colors_are_ignored() {
        let g = parse_off_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n").unwrap();
        assert_eq!(g.num_edges(), 6);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(parse_off_mesh("3 1 0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_off_mesh("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n").is_err());
        assert!(parse_off_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n").is_err());
        assert!(parse_off_mesh("OFF\n3 1\n").is_err());
        assert!(parse_off_mesh("OFF\n3 1 0\n0 0 0\n1 0\n").is_err());
        assert!(parse_off_mesh("OFF\nx 1 0\n").is_err());
    }
}
