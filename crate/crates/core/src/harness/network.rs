//! Networks assembled from an [`Architecture`], and the multi-resolution
//! graph structure they run on.
//!
//! Every `MaxP` layer moves to the next coarser level of a [`Hierarchy`].
//! A batch concatenates the hierarchies of its examples level by level
//! into a [`Structure`], which also holds the basis plans of every kernel
//! used at each level.

use rand_chacha::ChaCha8Rng;

use crate::conv::{ConvCache, SplineConv, Strategy};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Graph};
use crate::harness::arch::{Architecture, LayerSpec};
use crate::kernel::{compute_plan, BasisPlan, KernelConfig};
use crate::nn::{
    coarsen, dropout, dropout_backward, elu, elu_backward, global_avg_pool, global_avg_pool_backward,
    max_pool, max_pool_backward, Dense, VisitOrder,
};
use crate::pseudo::PseudoKind;
use crate::real::Real;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    pub pseudo: PseudoKind,
    pub degree: usize,
    pub use_root: bool,
    pub normalize: bool,
    pub strategy: Strategy,
    pub input_features: usize,
    pub num_classes: usize,
    /// Nodes per example at each level, required by `FC` on node features.
    pub nodes_per_level: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv { conv: SplineConv<T>, level: usize },
    Pool { cluster_size: usize, level: usize },
    Dense { dense: Dense<T>, flatten: bool },
    Lin(Dense<T>),
    AvgPool { level: usize },
    Elu,
    Dropout(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    options: ModelOptions,
    layers: Vec<Layer<T>>,
}

/// Number of matching levels realizing a cluster size.
pub fn matching_levels(cluster_size: usize) -> Result<usize> {
    match cluster_size {
        2 => Ok(1),
        4 => Ok(2),
        c => Err(Error::InvalidConfig(format!("cluster size must be 2 or 4, got {c}"))),
    }
}

/// Layer of a network before its parameters are allocated.
#[derive(Clone, Debug)]
enum Shape {
    Conv { cfg: KernelConfig, m_in: usize, m_out: usize, level: usize },
    Pool { cluster_size: usize, level: usize },
    Dense { fan_in: usize, out: usize, flatten: bool },
    Lin { fan_in: usize, out: usize },
    AvgPool { level: usize },
    Elu,
    Dropout(f64),
}

/// Checks that layer widths chain and resolves every layer's shape.
fn shapes(arch: &Architecture, options: &ModelOptions) -> Result<Vec<Shape>> {
    let fail =
        |idx: usize, spec: &LayerSpec, msg: String| Error::InvalidConfig(format!("layer {idx} ({spec}): {msg}"));
    let mut width = options.input_features;
    let mut on_nodes = true;
    let mut level = 0;
    let mut out = Vec::with_capacity(arch.0.len());
    for (idx, spec) in arch.0.iter().enumerate() {
        let shape = match spec {
            LayerSpec::SConv { kernel, m_in, m_out } => {
                if !on_nodes {
                    return Err(fail(idx, spec, "convolution after features were pooled per example".into()));
                }
                if *m_in != width {
                    return Err(fail(idx, spec, format!("expects {m_in} input features but receives {width}")));
                }
                if kernel.len() != options.pseudo.dim() {
                    return Err(fail(
                        idx,
                        spec,
                        format!("kernel has {} dimensions, pseudo-coordinates have {}", kernel.len(), options.pseudo.dim()),
                    ));
                }
                let cfg = KernelConfig::new(options.degree, kernel.clone(), options.pseudo.closed_dims())
                    .map_err(|e| fail(idx, spec, e.to_string()))?;
                width = *m_out;
                Shape::Conv { cfg, m_in: *m_in, m_out: *m_out, level }
            }
            LayerSpec::MaxP(c) => {
                if !on_nodes {
                    return Err(fail(idx, spec, "pooling after features were pooled per example".into()));
                }
                matching_levels(*c).map_err(|e| fail(idx, spec, e.to_string()))?;
                level += 1;
                Shape::Pool { cluster_size: *c, level: level - 1 }
            }
            LayerSpec::Fc(o) => {
                let (fan_in, flatten) = if on_nodes {
                    let Some(n) = options.nodes_per_level.as_ref().and_then(|v| v.get(level)) else {
                        return Err(fail(idx, spec, "flattening node features needs a fixed node count per example".into()));
                    };
                    let fan_in = n.checked_mul(width).ok_or_else(|| fail(idx, spec, "input width overflows".into()))?;
                    (fan_in, true)
                } else {
                    (width, false)
                };
                on_nodes = false;
                width = *o;
                Shape::Dense { fan_in, out: *o, flatten }
            }
            LayerSpec::Lin(o) => {
                let fan_in = width;
                width = *o;
                Shape::Lin { fan_in, out: *o }
            }
            LayerSpec::AvgP => {
                if !on_nodes {
                    return Err(fail(idx, spec, "features are already pooled per example".into()));
                }
                on_nodes = false;
                Shape::AvgPool { level }
            }
            LayerSpec::Elu => Shape::Elu,
            LayerSpec::Dropout(p) => Shape::Dropout(*p),
        };
        out.push(shape);
    }
    if width != options.num_classes {
        return Err(Error::InvalidConfig(format!(
            "network produces {width} outputs but there are {} classes",
            options.num_classes
        )));
    }
    Ok(out)
}

/// Number of trainable values of the network `arch` would build, without
/// allocating it.
pub fn count_params(arch: &Architecture, options: &ModelOptions) -> Result<usize> {
    let overflow = || Error::InvalidConfig("parameter count overflows".into());
    let mut total = 0usize;
    for shape in shapes(arch, options)? {
        let n = match shape {
            Shape::Conv { cfg, m_in, m_out, .. } => {
                let pair = m_in.checked_mul(m_out).ok_or_else(overflow)?;
                let root = if options.use_root { pair } else { 0 };
                cfg.num_weights().checked_mul(pair).and_then(|w| w.checked_add(root)).ok_or_else(overflow)?
            }
            Shape::Dense { fan_in, out, .. } | Shape::Lin { fan_in, out } => {
                fan_in.checked_mul(out).and_then(|w| w.checked_add(out)).ok_or_else(overflow)?
            }
            _ => 0,
        };
        total = total.checked_add(n).ok_or_else(overflow)?;
    }
    Ok(total)
}

impl<T: Real> Network<T> {
    /// Builds and initializes a network, checking that layer widths chain.
    pub fn new(arch: &Architecture, options: ModelOptions, seed: u64) -> Result<Network<T>> {
        let mut layers = Vec::with_capacity(arch.0.len());
        for (idx, shape) in shapes(arch, &options)?.into_iter().enumerate() {
            let layer_seed = seed.wrapping_mul(1000).wrapping_add(idx as u64);
            let layer = match shape {
                Shape::Conv { cfg, m_in, m_out, level } => {
                    let mut conv = SplineConv::new(cfg, m_in, m_out, options.use_root, options.normalize)?;
                    conv.set_strategy(options.strategy);
                    conv.init_weights(layer_seed);
                    Layer::Conv { conv, level }
                }
                Shape::Pool { cluster_size, level } => Layer::Pool { cluster_size, level },
                Shape::Dense { fan_in, out, flatten } => {
                    let mut dense = Dense::new(fan_in, out)?;
                    dense.init_weights(layer_seed);
                    Layer::Dense { dense, flatten }
                }
                Shape::Lin { fan_in, out } => {
                    let mut dense = Dense::new(fan_in, out)?;
                    dense.init_weights(layer_seed);
                    Layer::Lin(dense)
                }
                Shape::AvgPool { level } => Layer::AvgPool { level },
                Shape::Elu => Layer::Elu,
                Shape::Dropout(p) => Layer::Dropout(p),
            };
            layers.push(layer);
        }
        Ok(Network { arch: arch.clone(), options, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Cluster sizes of the pooling layers in order.
    pub fn pool_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Pool { cluster_size, .. } => Some(*cluster_size),
                _ => None,
            })
            .collect()
    }

    /// Distinct kernel configurations used at each level.
    pub fn kernel_configs(&self) -> Vec<Vec<KernelConfig>> {
        let mut out = vec![Vec::new(); self.pool_sizes().len() + 1];
        for l in &self.layers {
            if let Layer::Conv { conv, level } = l {
                if !out[*level].contains(conv.config()) {
                    out[*level].push(conv.config().clone());
                }
            }
        }
        out
    }

    /// True when the output has one row per node rather than per example.
    pub fn classifies_nodes(&self) -> bool {
        !self
            .layers
            .iter()
            .any(|l| matches!(l, Layer::AvgPool { .. } | Layer::Dense { flatten: true, .. }))
    }

    pub fn spline_layers(&self) -> Vec<&SplineConv<T>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv { conv, .. } => Some(conv),
                _ => None,
            })
            .collect()
    }

    pub fn params_and_grads(&mut self) -> Vec<(&mut [T], &[T])> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { conv, .. } => out.extend(conv.params_and_grads()),
                Layer::Dense { dense, .. } | Layer::Lin(dense) => out.extend(dense.params_and_grads()),
                _ => {}
            }
        }
        out
    }

    pub fn num_params(&mut self) -> usize {
        self.params_and_grads().iter().map(|(p, _)| p.len()).sum()
    }

    /// All parameters flattened in [`Network::params_and_grads`] order.
    pub fn param_vector(&mut self) -> Vec<T> {
        self.params_and_grads().iter().flat_map(|(p, _)| p.iter().copied()).collect()
    }

    pub fn grad_vector(&mut self) -> Vec<T> {
        self.params_and_grads().iter().flat_map(|(_, g)| g.iter().copied()).collect()
    }

    pub fn set_param_vector(&mut self, values: &[T]) -> Result<()> {
        let mut groups = self.params_and_grads();
        let total: usize = groups.iter().map(|(p, _)| p.len()).sum();
        if total != values.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {total} parameters", values.len())));
        }
        let mut offset = 0;
        for (p, _) in groups.iter_mut() {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            match l {
                Layer::Conv { conv, .. } => conv.zero_grad(),
                Layer::Dense { dense, .. } | Layer::Lin(dense) => dense.zero_grad(),
                _ => {}
            }
        }
    }

    /// Inference pass; dropout is the identity.
    pub fn predict(&self, s: &Structure<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.run(s, x, None, None)
    }

    /// Training pass recording what [`Network::backward`] needs.
    pub fn forward(&self, s: &Structure<T>, x: &Matrix<T>, rng: &mut ChaCha8Rng) -> Result<(Matrix<T>, Tape<T>)> {
        let mut tape = Vec::with_capacity(self.layers.len());
        let out = self.run(s, x, Some(&mut tape), Some(rng))?;
        Ok((out, Tape(tape)))
    }

    fn run(
        &self,
        s: &Structure<T>,
        x: &Matrix<T>,
        mut tape: Option<&mut Vec<Saved<T>>>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Matrix<T>> {
        if x.rows() != s.levels[0].graph.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} rows for {} nodes",
                x.rows(),
                s.levels[0].graph.num_nodes()
            )));
        }
        if s.levels.len() != self.pool_sizes().len() + 1 {
            return Err(Error::ShapeMismatch("structure has the wrong number of levels".into()));
        }
        let mut h = x.clone();
        for layer in &self.layers {
            let (next, saved) = match layer {
                Layer::Conv { conv, level } => {
                    let lv = &s.levels[*level];
                    let plan = lv.plan(conv.config())?;
                    if tape.is_some() {
                        let (y, cache) = conv.forward_train(&lv.graph, plan, &h)?;
                        (y, Saved::Conv(cache))
                    } else {
                        (conv.forward(&lv.graph, plan, &h)?, Saved::None)
                    }
                }
                Layer::Pool { level, .. } => {
                    let (assign, count) = &s.pools[*level];
                    let (y, argmax) = max_pool(&h, assign, *count)?;
                    let rows = h.rows();
                    (y, Saved::Pool { argmax, rows })
                }
                Layer::Dense { dense, flatten } => {
                    let shape = h.shape();
                    let input = if *flatten {
                        let b = s.examples;
                        if b == 0 || h.rows() % b != 0 || (h.rows() / b) * h.cols() != dense.in_features() {
                            return Err(Error::ShapeMismatch(format!(
                                "cannot flatten {}x{} node features of {b} examples into {} inputs",
                                h.rows(),
                                h.cols(),
                                dense.in_features()
                            )));
                        }
                        h.reshape(b, dense.in_features())?
                    } else {
                        h
                    };
                    let y = dense.forward(&input)?;
                    (y, Saved::Dense { input, shape })
                }
                Layer::Lin(dense) => {
                    let y = dense.forward(&h)?;
                    let shape = h.shape();
                    (y, Saved::Dense { input: h, shape })
                }
                Layer::AvgPool { level } => (global_avg_pool(&h, &s.levels[*level].offsets)?, Saved::None),
                Layer::Elu => {
                    let y = elu(&h);
                    (y, Saved::Elu(h))
                }
                Layer::Dropout(p) => match rng.as_deref_mut() {
                    Some(r) => {
                        let (y, mask) = dropout(&h, *p, true, r)?;
                        (y, Saved::Dropout(mask))
                    }
                    None => (h, Saved::None),
                },
            };
            if let Some(t) = tape.as_deref_mut() {
                t.push(saved);
            }
            h = next;
        }
        Ok(h)
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, s: &Structure<T>, tape: Tape<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        if tape.0.len() != self.layers.len() {
            return Err(Error::ShapeMismatch("tape does not belong to this network".into()));
        }
        let mut g = grad_out.clone();
        for (layer, saved) in self.layers.iter_mut().zip(tape.0).rev() {
            g = match (layer, saved) {
                (Layer::Conv { conv, level }, Saved::Conv(cache)) => {
                    let lv = &s.levels[*level];
                    conv.backward(&lv.graph, lv.plan(conv.config())?, &cache, &g)?
                }
                (Layer::Pool { .. }, Saved::Pool { argmax, rows }) => max_pool_backward(&g, &argmax, rows),
                (Layer::Dense { dense, .. } | Layer::Lin(dense), Saved::Dense { input, shape }) => {
                    dense.backward(&input, &g)?.reshape(shape.0, shape.1)?
                }
                (Layer::AvgPool { level }, Saved::None) => global_avg_pool_backward(&g, &s.levels[*level].offsets)?,
                (Layer::Elu, Saved::Elu(x)) => elu_backward(&x, &g),
                (Layer::Dropout(_), Saved::Dropout(mask)) => dropout_backward(&g, mask.as_deref()),
                _ => return Err(Error::ShapeMismatch("tape entry does not match its layer".into())),
            };
        }
        Ok(g)
    }
}

enum Saved<T> {
    None,
    Conv(ConvCache<T>),
    Pool { argmax: Vec<usize>, rows: usize },
    Dense { input: Matrix<T>, shape: (usize, usize) },
    Elu(Matrix<T>),
    Dropout(Option<Vec<T>>),
}

/// Intermediate values of one training forward pass.
pub struct Tape<T>(Vec<Saved<T>>);

/// Per-example graphs at every resolution level and the cluster maps
/// between consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    levels: Vec<Graph>,
    assigns: Vec<Vec<usize>>,
}

impl Hierarchy {
    /// Coarsens `graph`, which must carry pseudo-coordinates of kind
    /// `pseudo`, once per entry of `pool_sizes`.
    pub fn build(graph: Graph, pool_sizes: &[usize], pseudo: PseudoKind, order: VisitOrder) -> Result<Hierarchy> {
        if graph.pseudo_dim() != pseudo.dim() {
            return Err(Error::MissingData(format!("graph needs {}-dimensional pseudo-coordinates", pseudo.dim())));
        }
        let mut levels = vec![graph];
        let mut assigns = Vec::new();
        for (t, &c) in pool_sizes.iter().enumerate() {
            let order = match order {
                VisitOrder::Ascending => VisitOrder::Ascending,
                VisitOrder::Seeded(s) => VisitOrder::Seeded(s.wrapping_add(1_000_003 * t as u64)),
            };
            let r = coarsen(&levels[t], matching_levels(c)?, order, Some(pseudo))?;
            assigns.push(r.cluster_assign);
            levels.push(r.graph);
        }
        Ok(Hierarchy { levels, assigns })
    }

    pub fn levels(&self) -> &[Graph] {
        &self.levels
    }

    pub fn assigns(&self) -> &[Vec<usize>] {
        &self.assigns
    }

    pub fn nodes_per_level(&self) -> Vec<usize> {
        self.levels.iter().map(Graph::num_nodes).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Level<T> {
    pub graph: Graph,
    pub offsets: Vec<usize>,
    plans: Vec<(KernelConfig, BasisPlan<T>)>,
}

impl<T: Real> Level<T> {
    pub fn plan(&self, config: &KernelConfig) -> Result<&BasisPlan<T>> {
        self.plans
            .iter()
            .find(|(c, _)| c == config)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::MissingData("no basis plan for this kernel at this level".into()))
    }
}

/// A batch of hierarchies merged level by level.
#[derive(Clone, Debug)]
pub struct Structure<T> {
    pub levels: Vec<Level<T>>,
    /// Batched cluster map from level `t` to `t + 1`, with the cluster count.
    pub pools: Vec<(Vec<usize>, usize)>,
    pub examples: usize,
}

impl<T: Real> Structure<T> {
    pub fn new(parts: &[&Hierarchy], configs: &[Vec<KernelConfig>]) -> Result<Structure<T>> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("a batch needs at least one example".into()));
        };
        let depth = first.levels.len();
        if parts.iter().any(|h| h.levels.len() != depth) || configs.len() != depth {
            return Err(Error::ShapeMismatch("examples disagree on the number of levels".into()));
        }
        let mut levels = Vec::with_capacity(depth);
        for t in 0..depth {
            let graphs: Vec<&Graph> = parts.iter().map(|h| &h.levels[t]).collect();
            let batch = batch_graphs(&graphs)?;
            let offsets = batch.node_offsets().to_vec();
            let graph = batch.into_graph();
            let mut plans = Vec::new();
            for cfg in &configs[t] {
                let pseudo = graph
                    .pseudo()
                    .ok_or_else(|| Error::MissingData(format!("level {t} has no pseudo-coordinates")))?;
                plans.push((cfg.clone(), compute_plan(pseudo, cfg)?));
            }
            levels.push(Level { graph, offsets, plans });
        }
        let mut pools = Vec::with_capacity(depth - 1);
        for t in 0..depth - 1 {
            let mut assign = Vec::with_capacity(levels[t].graph.num_nodes());
            let mut base = 0;
            for (k, h) in parts.iter().enumerate() {
                assign.extend(h.assigns[t].iter().map(|&c| c + base));
                base += levels[t + 1].offsets[k + 1] - levels[t + 1].offsets[k];
            }
            pools.push((assign, base));
        }
        Ok(Structure { levels, pools, examples: parts.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid_graph, Neighborhood};
    use crate::nn::softmax_cross_entropy;
    use crate::oracle::{finite_diff_grad, FdConfig};
    use crate::pseudo::fit_and_apply;
    use rand::{Rng, SeedableRng};

    fn grid_hierarchy(w: usize, h: usize, pools: &[usize], seed: u64) -> Hierarchy {
        let g = build_grid_graph(w, h, Neighborhood::Full8, false).unwrap();
        let (g, _) = fit_and_apply(g, PseudoKind::Cartesian2).unwrap();
        Hierarchy::build(g, pools, PseudoKind::Cartesian2, VisitOrder::Seeded(seed)).unwrap()
    }

    fn options(input: usize, classes: usize, nodes: Option<Vec<usize>>) -> ModelOptions {
        ModelOptions {
            pseudo: PseudoKind::Cartesian2,
            degree: 1,
            use_root: true,
            normalize: true,
            strategy: Strategy::Auto,
            input_features: input,
            num_classes: classes,
            nodes_per_level: nodes,
        }
    }

    #[test]
    fn counted_params_match_built_network() {
        let arch: Architecture = "SConv((3,3),2,4) -> ELU -> MaxP(2) -> SConv((3,3),4,3) -> FC(5) -> Lin(2)".parse().unwrap();
        let opts = options(2, 2, Some(vec![16, 4]));
        let mut net = Network::<f64>::new(&arch, opts.clone(), 1).unwrap();
        assert_eq!(count_params(&arch, &opts).unwrap(), net.num_params());
        let huge = options(2, 2, Some(vec![usize::MAX / 2, 4]));
        let arch: Architecture = "SConv((3,3),2,4) -> FC(2)".parse().unwrap();
        assert!(count_params(&arch, &huge).is_err());
    }

    #[test]
    fn shape_chain_errors_name_the_layer() {
        let arch: Architecture = "SConv((3,3),2,4) -> SConv((3,3),5,2)".parse().unwrap();
        let err = Network::<f64>::new(&arch, options(2, 2, None), 0).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        let arch: Architecture = "SConv((3,3),2,4) -> FC(3)".parse().unwrap();
        assert!(Network::<f64>::new(&arch, options(2, 3, None), 0).is_err());
        assert!(Network::<f64>::new(&arch, options(2, 3, Some(vec![9])), 0).is_ok());
        let arch: Architecture = "SConv((3),2,4)".parse().unwrap();
        assert!(Network::<f64>::new(&arch, options(2, 4, None), 0).is_err());
        let arch: Architecture = "AvgP -> SConv((3,3),2,4)".parse().unwrap();
        assert!(Network::<f64>::new(&arch, options(2, 4, None), 0).is_err());
        let arch: Architecture = "MaxP(3) -> Lin(2)".parse().unwrap();
        assert!(Network::<f64>::new(&arch, options(2, 2, None), 0).is_err());
        let arch: Architecture = "Lin(5)".parse().unwrap();
        assert!(Network::<f64>::new(&arch, options(2, 4, None), 0).is_err());
    }

    #[test]
    fn batched_structure_matches_single_examples() {
        let a = grid_hierarchy(4, 4, &[2, 4], 1);
        let b = grid_hierarchy(5, 3, &[2, 4], 2);
        let arch: Architecture =
            "SConv((3,3),1,3) -> ELU -> MaxP(2) -> SConv((3,3),3,3) -> MaxP(4) -> AvgP -> FC(2)".parse().unwrap();
        let net = Network::<f64>::new(&arch, options(1, 2, None), 3).unwrap();
        assert!(!net.classifies_nodes());
        let cfgs = net.kernel_configs();
        let both = Structure::<f64>::new(&[&a, &b], &cfgs).unwrap();
        let sa = Structure::<f64>::new(&[&a], &cfgs).unwrap();
        let sb = Structure::<f64>::new(&[&b], &cfgs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xa = Matrix::from_fn(16, 1, |_, _| rng.gen_range(-1.0..1.0));
        let xb = Matrix::from_fn(15, 1, |_, _| rng.gen_range(-1.0..1.0));
        let x = Matrix::vstack(&[&xa, &xb]).unwrap();
        let y = net.predict(&both, &x).unwrap();
        let ya = net.predict(&sa, &xa).unwrap();
        let yb = net.predict(&sb, &xb).unwrap();
        assert!(Matrix::vstack(&[&ya, &yb]).unwrap().max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn end_to_end_gradients() {
        let h = grid_hierarchy(4, 4, &[2], 5);
        let arch: Architecture = "SConv((3,3),2,3) -> ELU -> MaxP(2) -> FC(4) -> ELU -> FC(3)".parse().unwrap();
        let mut net = Network::<f64>::new(&arch, options(2, 3, Some(h.nodes_per_level())), 7).unwrap();
        let s = Structure::<f64>::new(&[&h], &net.kernel_configs()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_fn(16, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels = [2];
        let (logits, tape) = net.forward(&s, &x, &mut rng).unwrap();
        let (_, dl) = softmax_cross_entropy(&logits, &labels, None).unwrap();
        let dx = net.backward(&s, tape, &dl).unwrap();
        let analytic = net.grad_vector();
        let theta = net.param_vector();
        let fd = FdConfig::default();
        let mut probe = net.clone();
        let num = finite_diff_grad(
            &theta,
            |t| {
                probe.set_param_vector(t).unwrap();
                softmax_cross_entropy(&probe.predict(&s, &x).unwrap(), &labels, None).unwrap().0
            },
            &fd,
        )
        .unwrap();
        assert!(fd.max_relative_error(&analytic, &num) <= fd.tolerance);
        let num = finite_diff_grad(
            x.as_slice(),
            |v| {
                let xm = Matrix::from_vec(16, 2, v.to_vec()).unwrap();
                softmax_cross_entropy(&net.predict(&s, &xm).unwrap(), &labels, None).unwrap().0
            },
            &fd,
        )
        .unwrap();
        assert!(fd.max_relative_error(dx.as_slice(), &num) <= fd.tolerance);
    }

    #[test]
    fn dropout_only_in_training() {
        let h = grid_hierarchy(3, 3, &[], 0);
        let arch: Architecture = "Dropout(0.5) -> SConv((3,3),1,2)".parse().unwrap();
        let net = Network::<f64>::new(&arch, options(1, 2, None), 1).unwrap();
        assert!(net.classifies_nodes());
        let s = Structure::<f64>::new(&[&h], &net.kernel_configs()).unwrap();
        let x = Matrix::from_fn(9, 1, |i, _| i as f64 + 1.0);
        assert_eq!(net.predict(&s, &x).unwrap(), net.predict(&s, &x).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, _) = net.forward(&s, &x, &mut rng).unwrap();
        assert_ne!(a, net.predict(&s, &x).unwrap());
    }
}
