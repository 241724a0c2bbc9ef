//! Conversion of raw datasets into the graph container format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{build_grid_graph, load_idx_images, Graph, Neighborhood};
use crate::pseudo::{fit_and_apply, PseudoKind};
use crate::tensor::Matrix;

/// Grid graphs of images `first..first + count` of an IDX file, one node
/// per pixel with its intensity in `[0, 1]` as feature and Cartesian
/// pseudo-coordinates.
pub fn image_graphs(
    path: &Path,
    first: usize,
    count: usize,
    neighborhood: Neighborhood,
    self_loops: bool,
) -> Result<Vec<Graph>> {
    let images = load_idx_images(path)?;
    if first + count > images.count {
        return Err(Error::InvalidArgument(format!(
            "images {first}..{} requested, file holds {}",
            first + count,
            images.count
        )));
    }
    let template = build_grid_graph(images.cols, images.rows, neighborhood, self_loops)?;
    let (template, _) = fit_and_apply(template, PseudoKind::Cartesian2)?;
    (first..first + count)
        .map(|k| {
            let px = images.image(k);
            let features = Matrix::from_fn(px.len(), 1, |i, _| px[i] as f64 / 255.0);
            template.clone().with_features(features)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_become_feature_grids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        bytes.extend([0, 51, 102, 153, 204, 255, 1, 2, 3, 4, 5, 6]);
        std::fs::write(&path, bytes).unwrap();
        let gs = image_graphs(&path, 1, 1, Neighborhood::Cross4, false).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].num_nodes(), 6);
        assert_eq!(gs[0].features().as_slice()[5], 6.0 / 255.0);
        assert_eq!(gs[0].num_edges(), 14);
        assert!(image_graphs(&path, 1, 2, Neighborhood::Cross4, false).is_err());
    }
}
