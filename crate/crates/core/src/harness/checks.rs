//! Gradient checks of every differentiable component against central
//! finite differences in double precision.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{SplineConv, Strategy};
use crate::error::Result;
use crate::graph::{build_grid_graph, Graph, GraphParts, Neighborhood};
use crate::harness::arch::Architecture;
use crate::harness::network::{Hierarchy, ModelOptions, Network, Structure};
use crate::kernel::{compute_plan, KernelConfig};
use crate::nn::{softmax_cross_entropy, VisitOrder};
use crate::oracle::{finite_diff_grad, FdConfig};
use crate::pseudo::{fit_and_apply, PseudoKind};
use crate::tensor::Matrix;

/// Relative errors of one gradient tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Errors {
    /// Denominators floored at the finite-difference resolution.
    pub relative: f64,
    /// Denominators floored only by the absolute floor.
    pub elementwise: f64,
}

impl Errors {
    fn of(fd: &FdConfig, analytic: &[f64], numeric: &[f64], loss: f64) -> Errors {
        Errors {
            relative: fd.max_resolved_error(analytic, numeric, loss),
            elementwise: fd.max_relative_error(analytic, numeric),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub errors: Errors,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checks: Vec<GradCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.errors.relative).fold(0.0, f64::max)
    }

    pub fn text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{:<36} max_rel_err={:.3e} elementwise={:.3e} tolerance={:.0e} {}\n",
                    c.name,
                    c.errors.relative,
                    c.errors.elementwise,
                    self.tolerance,
                    if c.passed { "PASS" } else { "FAIL" }
                )
            })
            .collect()
    }
}

/// `e` distinct random edges over `n` nodes with uniform pseudo-coordinates.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, e: usize, d: usize) -> Result<Graph> {
    let mut edges = BTreeSet::new();
    while edges.len() < e {
        edges.insert((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    Graph::new(GraphParts {
        num_nodes: n,
        edges: edges.into_iter().collect(),
        pseudo: Some(Matrix::from_fn(e, d, |_, _| rng.gen_range(0.0..=1.0))),
        features: Matrix::zeros(n, 0),
        ..Default::default()
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Checks weight, root and input gradients of one spline layer on a
/// random graph with 12 nodes and 30 edges, 3 input and 4 output features.
/// The loss is `sum(c * out)` for a random `c`.
pub fn check_spline_conv(config: &KernelConfig, strategy: Strategy, seed: u64, fd: &FdConfig) -> Result<[Errors; 3]> {
    let (n, e, mi, mo) = (12, 30, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(&mut rng, n, e, config.dim())?;
    let plan = compute_plan(g.pseudo().expect("pseudo set"), config)?;
    let mut layer = SplineConv::<f64>::new(config.clone(), mi, mo, true, true)?;
    layer.init_weights(seed);
    layer.set_strategy(strategy);
    let x = random_matrix(&mut rng, n, mi);
    let c = random_matrix(&mut rng, n, mo);
    let (_, cache) = layer.forward_train(&g, &plan, &x)?;
    let dx = layer.backward(&g, &plan, &cache, &c)?;
    let loss = |l: &SplineConv<f64>, x: &Matrix<f64>| l.forward(&g, &plan, x).map(|y| y.dot(&c)).unwrap_or(f64::NAN);

    let f = loss(&layer, &x);
    let mut probe = layer.clone();
    let num_w = finite_diff_grad(
        layer.weight(),
        |w| {
            probe.weight_mut().copy_from_slice(w);
            loss(&probe, &x)
        },
        fd,
    )?;
    let mut probe = layer.clone();
    let num_r = finite_diff_grad(
        layer.root().expect("root enabled"),
        |r| {
            probe.root_mut().expect("root enabled").copy_from_slice(r);
            loss(&probe, &x)
        },
        fd,
    )?;
    let num_x = finite_diff_grad(
        x.as_slice(),
        |v| Matrix::from_vec(n, mi, v.to_vec()).map(|xm| loss(&layer, &xm)).unwrap_or(f64::NAN),
        fd,
    )?;
    Ok([
        Errors::of(fd, layer.grad_weight(), &num_w, f),
        Errors::of(fd, layer.grad_root().expect("root enabled"), &num_r, f),
        Errors::of(fd, dx.as_slice(), &num_x, f),
    ])
}

/// Checks parameter and input gradients of a small grid classifier under
/// softmax cross-entropy. Returns `[params, input]` errors.
pub fn check_network(arch: &str, seed: u64, fd: &FdConfig) -> Result<[Errors; 2]> {
    let arch: Architecture = arch.parse()?;
    let (w, h, mi) = (4, 4, 2);
    let g = build_grid_graph(w, h, Neighborhood::Full8, false)?;
    let (g, _) = fit_and_apply(g, PseudoKind::Cartesian2)?;
    let pools: Vec<usize> = arch
        .layers()
        .iter()
        .filter_map(|l| match l {
            crate::harness::arch::LayerSpec::MaxP(c) => Some(*c),
            _ => None,
        })
        .collect();
    let hier = Hierarchy::build(g, &pools, PseudoKind::Cartesian2, VisitOrder::Seeded(seed))?;
    let options = ModelOptions {
        pseudo: PseudoKind::Cartesian2,
        degree: 2,
        use_root: true,
        normalize: true,
        strategy: Strategy::Auto,
        input_features: mi,
        num_classes: 3,
        nodes_per_level: Some(hier.nodes_per_level()),
    };
    let mut net = Network::<f64>::new(&arch, options, seed)?;
    let s = Structure::<f64>::new(&[&hier, &hier], &net.kernel_configs())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, 2 * w * h, mi);
    let labels = [2, 0];
    let (logits, tape) = net.forward(&s, &x, &mut rng)?;
    let (_, dl) = softmax_cross_entropy(&logits, &labels, None)?;
    let dx = net.backward(&s, tape, &dl)?;
    let analytic = net.grad_vector();
    let theta = net.param_vector();
    let loss = |n: &Network<f64>, x: &Matrix<f64>| {
        n.predict(&s, x)
            .and_then(|y| softmax_cross_entropy(&y, &labels, None))
            .map(|r| r.0)
            .unwrap_or(f64::NAN)
    };
    let mut probe = net.clone();
    let num = finite_diff_grad(
        &theta,
        |t| match probe.set_param_vector(t) {
            Ok(()) => loss(&probe, &x),
            Err(_) => f64::NAN,
        },
        fd,
    )?;
    let f = loss(&net, &x);
    let params = Errors::of(fd, &analytic, &num, f);
    let num = finite_diff_grad(
        x.as_slice(),
        |v| Matrix::from_vec(x.rows(), mi, v.to_vec()).map(|xm| loss(&net, &xm)).unwrap_or(f64::NAN),
        fd,
    )?;
    Ok([params, Errors::of(fd, dx.as_slice(), &num, f)])
}

/// Composed models exercising spline, ELU, pooling, dense and loss
/// backward passes together.
pub const CHECK_ARCHITECTURES: [(&str, &str); 2] = [
    ("graclus_fc", "SConv((3,3),2,3) -> ELU -> MaxP(2) -> SConv((3,3),3,3) -> ELU -> FC(4) -> ELU -> FC(3)"),
    ("avgpool_lin", "SConv((3,3),2,4) -> ELU -> Lin(3) -> ELU -> AvgP -> FC(3)"),
];

/// Runs every check with the given step and tolerance.
pub fn run_grad_checks(seed: u64, fd: &FdConfig) -> Result<GradCheckReport> {
    let mut checks = Vec::new();
    let mut push =
        |name: String, errors: Errors| checks.push(GradCheck { name, errors, passed: errors.relative <= fd.tolerance });
    for m in 1..=3 {
        let cfg = KernelConfig::new(m, vec![m + 2, m + 1], vec![false, true])?;
        for strategy in [Strategy::EdgeParallel, Strategy::NodeTransform] {
            let [w, r, x] = check_spline_conv(&cfg, strategy, seed + m as u64, fd)?;
            let tag = format!("spline_m{m}_{}", strategy.name());
            push(format!("{tag}/weight"), w);
            push(format!("{tag}/root"), r);
            push(format!("{tag}/input"), x);
        }
    }
    for (name, arch) in CHECK_ARCHITECTURES {
        let [p, x] = check_network(arch, seed, fd)?;
        push(format!("{name}/params"), p);
        push(format!("{name}/input"), x);
    }
    Ok(GradCheckReport { tolerance: fd.tolerance, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_detects_a_wrong_gradient() {
        let fd = FdConfig::default();
        let report = run_grad_checks(1, &fd).unwrap();
        assert_eq!(report.checks.len(), 3 * 2 * 3 + 4);
        assert!(report.passed(), "{}", report.text());

        let analytic = [1.0, 2.0];
        let num = finite_diff_grad(&[0.5, -1.0], |t| t[0] + 2.0 * t[1] + 1e-3 * t[1] * t[1], &fd).unwrap();
        assert!(fd.max_relative_error(&analytic, &num) > fd.tolerance);
    }
}
