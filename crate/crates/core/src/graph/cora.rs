//! Citation graphs in the `cora.content` / `cora.cites` layout.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read_to_string, Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::tensor::Matrix;

pub const CORA_NODES: usize = 2708;
pub const CORA_FEATURES: usize = 1433;

#[derive(Clone, Debug)]
pub struct CoraData {
    /// Nodes in content-file order, features and labels attached, no pseudo.
    pub graph: Graph,
    /// Class names; label `c` refers to `classes[c]`. Sorted.
    pub classes: Vec<String>,
    pub paper_ids: Vec<String>,
    /// Citation lines naming a paper absent from the content file.
    pub skipped_unknown: usize,
    /// Citation lines where a paper cites itself.
    pub skipped_self: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn load_cora(
    content_path: &Path,
    cites_path: &Path,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<(CoraData, NodeSplit)> {
    let data = parse_cora(&read_to_string(content_path)?, &read_to_string(cites_path)?)?;
    let split = split_nodes(data.graph.num_nodes(), train_count, test_count, seed)?;
    Ok((data, split))
}

/// Parses content (`<id> <features...> <label>`) and cites
/// (`<cited> <citing>`) text.
///
/// Each distinct undirected citation becomes two directed edges. Unknown
/// ids and self-citations are skipped and counted.
pub fn parse_cora(content: &str, cites: &str) -> Result<CoraData> {
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width: Option<usize> = None;
    for (k, line) in content.lines().enumerate() {
        let ln = k + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(Error::parse(ln, "expected `<id> <features...> <label>`"));
        }
        let m = toks.len() - 2;
        match width {
            None => width = Some(m),
            Some(w) if w != m => {
                return Err(Error::parse(ln, format!("{m} features, previous lines have {w}")));
            }
            _ => {}
        }
        for t in &toks[1..toks.len() - 1] {
            let v: f64 = t
                .parse()
                .map_err(|_| Error::parse(ln, format!("feature `{t}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(ln, format!("feature `{t}` is not finite")));
            }
            features.push(v);
        }
        if index.insert(toks[0].to_string(), ids.len()).is_some() {
            return Err(Error::parse(ln, format!("duplicate paper id `{}`", toks[0])));
        }
        ids.push(toks[0].to_string());
        raw_labels.push(toks[toks.len() - 1].to_string());
    }

    let classes: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();

    let mut pairs = BTreeSet::new();
    let mut skipped_unknown = 0;
    let mut skipped_self = 0;
    for (k, line) in cites.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(Error::parse(k + 1, "expected `<cited> <citing>`"));
        }
        match (index.get(toks[0]), index.get(toks[1])) {
            (Some(&a), Some(&b)) if a == b => skipped_self += 1,
            (Some(&a), Some(&b)) => {
                pairs.insert((a.min(b), a.max(b)));
            }
            _ => skipped_unknown += 1,
        }
    }
    if skipped_unknown > 0 {
        log::warn!("skipped {skipped_unknown} citations with unknown paper ids");
    }
    let mut edges = Vec::with_capacity(2 * pairs.len());
    for (a, b) in pairs {
        edges.push((a, b));
        edges.push((b, a));
    }

    let n = ids.len();
    let graph = Graph::new(GraphParts {
        num_nodes: n,
        edges,
        features: Matrix::from_vec(n, width.unwrap_or(0), features)?,
        labels: Some(labels),
        ..Default::default()
    })?;
    Ok(CoraData {
        graph,
        classes,
        paper_ids: ids,
        skipped_unknown,
        skipped_self,
    })
}

/// Seeded uniform split into disjoint train and test node sets.
pub fn split_nodes(n: usize, train_count: usize, test_count: usize, seed: u64) -> Result<NodeSplit> {
    if train_count + test_count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} nodes into {train_count} train and {test_count} test"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..train_count].to_vec();
    let mut test = order[train_count..train_count + test_count].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(NodeSplit { train, test })
}
