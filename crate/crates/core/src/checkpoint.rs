//! Versioned JSON checkpoints of trained networks.
//!
//! ```json
//! {
//!   "format": "splinecnn-checkpoint",
//!   "version": 1,
//!   "architecture": "SConv((5,5),1,32) -> ...",
//!   "model": { "pseudo": "cartesian2", "degree": 1, "seed": 1, ... },
//!   "layers": [
//!     { "kind": "spline", "kernel_size": [5, 5], "closed": [false, false],
//!       "degree": 1, "in_features": 1, "out_features": 32,
//!       "weight": [...], "root": [...] },
//!     { "kind": "dense", "in_features": 3136, "out_features": 512,
//!       "weight": [...], "bias": [...] }
//!   ]
//! }
//! ```
//!
//! Spline weights are `K x M_in x M_out` row-major with the first kernel
//! dimension varying fastest in the flat control point index. Dense
//! weights are `in x out` row-major. Values are stored as the shortest
//! decimal that reads back to the same number.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conv::Strategy;
use crate::error::{read_to_string, write_string, Error, Result};
use crate::harness::arch::Architecture;
use crate::harness::network::{count_params, Layer, ModelOptions, Network};
use crate::pseudo::PseudoKind;
use crate::real::Real;

pub const FORMAT: &str = "splinecnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: String,
    pub model: ModelState,
    pub layers: Vec<LayerState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelState {
    pub pseudo: String,
    pub degree: usize,
    pub use_root: bool,
    pub normalize: bool,
    pub input_features: usize,
    pub num_classes: usize,
    pub nodes_per_level: Option<Vec<usize>>,
    /// Run seed that drew the pooling hierarchy and node split.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerState {
    Spline {
        kernel_size: Vec<usize>,
        closed: Vec<bool>,
        degree: usize,
        in_features: usize,
        out_features: usize,
        weight: Vec<f64>,
        root: Option<Vec<f64>>,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
}

fn widen<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|&x| Real::to_f64(x)).collect()
}

fn load_into<T: Real>(dst: &mut [T], src: &[f64], what: &str) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::ShapeMismatch(format!("{what}: {} values for {} parameters", src.len(), dst.len())));
    }
    if src.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: non-finite value")));
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = T::of(s);
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_network<T: Real>(net: &Network<T>, seed: u64) -> Checkpoint {
        let o = net.options();
        let layers = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Conv { conv, .. } => Some(LayerState::Spline {
                    kernel_size: conv.config().size().to_vec(),
                    closed: conv.config().closed().to_vec(),
                    degree: conv.config().degree(),
                    in_features: conv.in_features(),
                    out_features: conv.out_features(),
                    weight: widen(conv.weight()),
                    root: conv.root().map(widen),
                }),
                Layer::Dense { dense, .. } | Layer::Lin(dense) => Some(LayerState::Dense {
                    in_features: dense.in_features(),
                    out_features: dense.out_features(),
                    weight: widen(dense.weight().as_slice()),
                    bias: widen(dense.bias()),
                }),
                _ => None,
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            architecture: net.architecture().to_string(),
            model: ModelState {
                pseudo: o.pseudo.name().into(),
                degree: o.degree,
                use_root: o.use_root,
                normalize: o.normalize,
                input_features: o.input_features,
                num_classes: o.num_classes,
                nodes_per_level: o.nodes_per_level.clone(),
                seed,
            },
            layers,
        }
    }

    /// Rebuilds the network and loads the stored weights.
    pub fn to_network<T: Real>(&self, strategy: Strategy) -> Result<Network<T>> {
        let arch: Architecture = self.architecture.parse()?;
        let m = &self.model;
        let options = ModelOptions {
            pseudo: PseudoKind::from_key(&m.pseudo, 0)?,
            degree: m.degree,
            use_root: m.use_root,
            normalize: m.normalize,
            strategy,
            input_features: m.input_features,
            num_classes: m.num_classes,
            nodes_per_level: m.nodes_per_level.clone(),
        };
        let stored: usize = self
            .layers
            .iter()
            .map(|l| match l {
                LayerState::Spline { weight, root, .. } => weight.len() + root.as_ref().map_or(0, Vec::len),
                LayerState::Dense { weight, bias, .. } => weight.len() + bias.len(),
            })
            .sum();
        let needed = count_params(&arch, &options)?;
        if needed != stored {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {needed} parameters, checkpoint stores {stored}"
            )));
        }
        let mut net = Network::new(&arch, options, 0)?;
        let mut states = self.layers.iter();
        for (idx, layer) in net.layers_mut().iter_mut().enumerate() {
            let what = format!("layer {idx}");
            match layer {
                Layer::Conv { conv, .. } => {
                    let Some(LayerState::Spline { kernel_size, closed, degree, weight, root, .. }) = states.next() else {
                        return Err(Error::InvalidArgument(format!("{what}: expected a spline layer entry")));
                    };
                    let c = conv.config();
                    if c.size() != kernel_size.as_slice() || c.closed() != closed.as_slice() || c.degree() != *degree {
                        return Err(Error::ShapeMismatch(format!("{what}: kernel configuration differs")));
                    }
                    load_into(conv.weight_mut(), weight, &what)?;
                    match (conv.root_mut(), root) {
                        (Some(dst), Some(src)) => load_into(dst, src, &what)?,
                        (None, None) => {}
                        _ => return Err(Error::ShapeMismatch(format!("{what}: root weights disagree"))),
                    }
                }
                Layer::Dense { dense, .. } | Layer::Lin(dense) => {
                    let Some(LayerState::Dense { weight, bias, .. }) = states.next() else {
                        return Err(Error::InvalidArgument(format!("{what}: expected a dense layer entry")));
                    };
                    load_into(dense.weight_mut().as_mut_slice(), weight, &what)?;
                    load_into(dense.bias_mut(), bias, &what)?;
                }
                _ => {}
            }
        }
        if states.next().is_some() {
            return Err(Error::InvalidArgument("checkpoint has more layer entries than the architecture".into()));
        }
        Ok(net)
    }

    pub fn parse(text: &str) -> Result<Checkpoint> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::InvalidArgument(format!("not a checkpoint (format `{}`)", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::InvalidArgument(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints serialize")
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::parse(&read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network<f32> {
        let arch: Architecture = "SConv((3,3),2,4) -> ELU -> MaxP(2) -> FC(5) -> Dropout(0.5) -> FC(3)".parse().unwrap();
        let options = ModelOptions {
            pseudo: PseudoKind::Polar2,
            degree: 2,
            use_root: true,
            normalize: false,
            strategy: Strategy::Auto,
            input_features: 2,
            num_classes: 3,
            nodes_per_level: Some(vec![16, 8]),
        };
        Network::new(&arch, options, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let c = Checkpoint::from_network(&n, 7);
        let back = Checkpoint::parse(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let restored: Network<f32> = back.to_network(Strategy::Auto).unwrap();
        assert_eq!(restored, n);
    }

    #[test]
    fn rejects_mismatches() {
        let c = Checkpoint::from_network(&net(), 7);
        let mut bad = c.clone();
        bad.version = 2;
        assert!(Checkpoint::parse(&bad.to_json()).is_err());
        let mut bad = c.clone();
        bad.format = "other".into();
        assert!(Checkpoint::parse(&bad.to_json()).is_err());
        let mut bad = c.clone();
        if let LayerState::Dense { weight, .. } = &mut bad.layers[1] {
            weight.pop();
        }
        assert!(bad.to_network::<f32>(Strategy::Auto).is_err());
        let mut bad = c.clone();
        bad.layers.swap(0, 1);
        assert!(bad.to_network::<f32>(Strategy::Auto).is_err());
        let mut bad = c;
        bad.layers.pop();
        assert!(bad.to_network::<f32>(Strategy::Auto).is_err());
        assert!(Checkpoint::parse("{").is_err());
        assert!(Checkpoint::parse("[]").is_err());
    }
}
