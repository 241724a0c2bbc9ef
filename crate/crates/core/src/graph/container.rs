//! Line-based text container for lists of graphs.
//!
//! ```text
//! GRAPHS <count>
//! GRAPH <N> <E> <d> <M_in> <dim_pos> <has_labels:0|1>
//! NODE <M_in floats> [label] <dim_pos floats>      (N lines)
//! EDGE <origin> <target> [<d floats>]              (E lines)
//! ```
//!
//! `d = 0` means the graph carries no pseudo-coordinates; otherwise every
//! edge line holds exactly `d` values in `[0, 1]`. Lines starting with `#`
//! and blank lines are ignored. Floats are written with 17 significant
//! digits so a save/load cycle is bit-exact. An empty file is an empty list.

use std::fmt::Write as _;
use std::path::Path;
use std::str::SplitWhitespace;

use crate::error::{read_to_string, write_string, Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::tensor::Matrix;

pub fn load_graph_container(path: &Path) -> Result<Vec<Graph>> {
    parse_graph_container(&read_to_string(path)?)
}

pub fn save_graph_container(path: &Path, graphs: &[Graph]) -> Result<()> {
    write_string(path, &write_graph_container(graphs))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next meaningful line as `(line_number, tokens)`.
    fn next(&mut self) -> Option<(usize, SplitWhitespace<'a>)> {
        for (k, line) in self.inner.by_ref() {
            self.last = k + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((k + 1, t.split_whitespace()));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, SplitWhitespace<'a>)> {
        self.next()
            .ok_or_else(|| Error::parse(self.last + 1, format!("unexpected end of file, expected {what}")))
    }
}

fn keyword(line: usize, toks: &mut SplitWhitespace, kw: &str) -> Result<()> {
    match toks.next() {
        Some(t) if t == kw => Ok(()),
        Some(t) => Err(Error::parse(line, format!("expected `{kw}`, found `{t}`"))),
        None => Err(Error::parse(line, format!("expected `{kw}`"))),
    }
}

fn count(line: usize, toks: &mut SplitWhitespace, what: &str) -> Result<usize> {
    let t = toks
        .next()
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    t.parse()
        .map_err(|_| Error::parse(line, format!("{what} `{t}` is not a non-negative integer")))
}

fn real(line: usize, toks: &mut SplitWhitespace, what: &str) -> Result<f64> {
    let t = toks
        .next()
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    let v: f64 = t
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} `{t}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what} `{t}` is not finite")));
    }
    Ok(v)
}

fn flag(line: usize, toks: &mut SplitWhitespace, what: &str) -> Result<bool> {
    match toks.next() {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        Some(t) => Err(Error::parse(line, format!("{what} must be 0 or 1, found `{t}`"))),
        None => Err(Error::parse(line, format!("missing {what}"))),
    }
}

fn end(line: usize, mut toks: SplitWhitespace) -> Result<()> {
    match toks.next() {
        None => Ok(()),
        Some(t) => Err(Error::parse(line, format!("unexpected trailing token `{t}`"))),
    }
}

pub fn parse_graph_container(text: &str) -> Result<Vec<Graph>> {
    let mut lines = Lines::new(text);
    let Some((ln, mut toks)) = lines.next() else {
        return Ok(Vec::new());
    };
    keyword(ln, &mut toks, "GRAPHS")?;
    let n_graphs = count(ln, &mut toks, "graph count")?;
    end(ln, toks)?;

    let mut graphs = Vec::new();
    for _ in 0..n_graphs {
        graphs.push(parse_graph(&mut lines)?);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(ln, format!("content after the declared {n_graphs} graphs")));
    }
    Ok(graphs)
}

fn parse_graph(lines: &mut Lines) -> Result<Graph> {
    let (hl, mut toks) = lines.expect("GRAPH header")?;
    keyword(hl, &mut toks, "GRAPH")?;
    let n = count(hl, &mut toks, "node count")?;
    let e = count(hl, &mut toks, "edge count")?;
    let d = count(hl, &mut toks, "pseudo dimension")?;
    let m_in = count(hl, &mut toks, "feature count")?;
    let dim_pos = count(hl, &mut toks, "position dimension")?;
    let has_labels = flag(hl, &mut toks, "has_labels")?;
    end(hl, toks)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut positions = Vec::new();
    for _ in 0..n {
        let (ln, mut toks) = lines.expect("NODE line")?;
        keyword(ln, &mut toks, "NODE")?;
        for _ in 0..m_in {
            features.push(real(ln, &mut toks, "feature")?);
        }
        if has_labels {
            labels.push(count(ln, &mut toks, "label")?);
        }
        for _ in 0..dim_pos {
            positions.push(real(ln, &mut toks, "position")?);
        }
        end(ln, toks)?;
    }

    let mut edges = Vec::new();
    let mut pseudo = Vec::new();
    for _ in 0..e {
        let (ln, mut toks) = lines.expect("EDGE line")?;
        keyword(ln, &mut toks, "EDGE")?;
        let a = count(ln, &mut toks, "origin")?;
        let b = count(ln, &mut toks, "target")?;
        if a >= n || b >= n {
            return Err(Error::parse(ln, format!("edge ({a}, {b}) references a node outside [0, {n})")));
        }
        for _ in 0..d {
            let u = real(ln, &mut toks, "pseudo-coordinate")?;
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::parse(ln, format!("pseudo-coordinate {u} outside [0, 1]")));
            }
            pseudo.push(u);
        }
        end(ln, toks)?;
        edges.push((a, b));
    }

    let parts = GraphParts {
        num_nodes: n,
        pseudo: if d > 0 { Some(Matrix::from_vec(e, d, pseudo)?) } else { None },
        features: Matrix::from_vec(n, m_in, features)?,
        labels: has_labels.then_some(labels),
        positions: if dim_pos > 0 {
            Some(Matrix::from_vec(n, dim_pos, positions)?)
        } else {
            None
        },
        edges,
    };
    Graph::new(parts).map_err(|err| Error::parse(hl, format!("invalid graph: {err}")))
}

pub fn write_graph_container(graphs: &[Graph]) -> String {
    let mut out = String::new();
    writeln!(out, "GRAPHS {}", graphs.len()).unwrap();
    for g in graphs {
        let d = g.pseudo_dim();
        writeln!(
            out,
            "GRAPH {} {} {} {} {} {}",
            g.num_nodes(),
            g.num_edges(),
            d,
            g.feature_dim(),
            g.position_dim(),
            u8::from(g.labels().is_some())
        )
        .unwrap();
        for i in 0..g.num_nodes() {
            out.push_str("NODE");
            for &x in g.features().row(i) {
                write!(out, " {x:.16e}").unwrap();
            }
            if let Some(labels) = g.labels() {
                write!(out, " {}", labels[i]).unwrap();
            }
            if let Some(pos) = g.positions() {
                for &x in pos.row(i) {
                    write!(out, " {x:.16e}").unwrap();
                }
            }
            out.push('\n');
        }
        for (e, (a, b)) in g.edges().enumerate() {
            write!(out, "EDGE {a} {b}").unwrap();
            if let Some(p) = g.pseudo() {
                for &u in p.row(e) {
                    write!(out, " {u:.16e}").unwrap();
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "\
# two graphs
GRAPHS 2
GRAPH 2 1 1 1 2 1
NODE 0.5 3 0 0
NODE -1.25 1 1 0
EDGE 0 1 0.25
GRAPH 1 0 0 2 0 0
NODE 1 2
";

    #[test]
    fn parses_two_graphs() {
        let gs = parse_graph_container(TWO).unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!(gs[0].labels(), Some(&[3, 1][..]));
        assert_eq!(gs[0].pseudo().unwrap().as_slice(), &[0.25]);
        assert_eq!(gs[0].positions().unwrap().row(1), &[1.0, 0.0]);
        assert_eq!(gs[1].features().row(0), &[1.0, 2.0]);
        assert!(gs[1].pseudo().is_none());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let gs = parse_graph_container(TWO).unwrap();
        let text = write_graph_container(&gs);
        assert_eq!(parse_graph_container(&text).unwrap(), gs);
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_graph_container("").unwrap().is_empty());
        assert!(parse_graph_container("# nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn edge_out_of_range_names_line() {
        let text = "GRAPHS 1\nGRAPH 2 1 0 0 0 0\nNODE\nNODE\nEDGE 0 2\n";
        match parse_graph_container(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_out_of_range_rejected() {
        let text = "GRAPHS 1\nGRAPH 2 1 1 0 0 0\nNODE\nNODE\nEDGE 0 1 1.5\n";
        assert!(matches!(parse_graph_container(text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn malformed_lines_rejected() {
        for bad in [
            "GRAPH 1\n",
            "GRAPHS x\n",
            "GRAPHS 1\n",
            "GRAPHS 1\nGRAPH 1 0 0 1 0 0\nNODE\n",
            "GRAPHS 1\nGRAPH 1 0 0 0 0 2\nNODE\n",
            "GRAPHS 1\nGRAPH 1 0 0 1 0 0\nNODE nan\n",
            "GRAPHS 1\nGRAPH 1 0 0 0 0 0\nNODE extra\n",
            "GRAPHS 0\nGRAPH 1 0 0 0 0 0\n",
            "GRAPHS 1\nGRAPH 2 2 0 0 0 0\nNODE\nNODE\nEDGE 0 1\nEDGE 0 1\n",
        ] {
            assert!(parse_graph_container(bad).is_err(), "accepted {bad:?}");
        }
    }
}
