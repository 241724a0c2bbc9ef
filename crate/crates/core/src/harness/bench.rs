//! Forward-pass timing sweeps over kernel size, depth and edge count.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{SplineConv, Strategy};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphParts};
use crate::harness::config::ExperimentConfig;
use crate::kernel::{compute_plan, KernelConfig};
use crate::tensor::Matrix;

/// Largest accepted spread of kernel-sweep medians, relative to the fastest.
pub const MAX_KERNEL_VARIATION: f64 = 0.25;
pub const MIN_DEPTH_R2: f64 = 0.98;
pub const EDGE_RATIO_RANGE: (f64, f64) = (1.6, 2.6);

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub sweep: &'static str,
    pub value: usize,
    pub edges: usize,
    pub features: usize,
    pub kernel_weights: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub timings: Vec<Timing>,
}

impl BenchReport {
    fn sweep(&self, name: &str) -> Vec<&Timing> {
        self.timings.iter().filter(|t| t.sweep == name).collect()
    }

    /// `(max - min) / min` of the kernel-sweep medians.
    pub fn kernel_variation(&self) -> Option<f64> {
        let m: Vec<f64> = self.sweep("kernel").iter().map(|t| t.median).collect();
        let lo = m.iter().copied().reduce(f64::min)?;
        let hi = m.iter().copied().reduce(f64::max)?;
        Some((hi - lo) / lo)
    }

    /// Coefficient of determination of a least-squares line through the
    /// depth-sweep medians.
    pub fn depth_r2(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.sweep("depth").iter().map(|t| (t.value as f64, t.median)).collect();
        r_squared(&pts)
    }

    /// Median ratios between consecutive edge-sweep entries.
    pub fn edge_ratios(&self) -> Vec<f64> {
        self.sweep("edges").windows(2).map(|w| w[1].median / w[0].median).collect()
    }

    /// One line per check: `name value bound PASS|FAIL`.
    pub fn checks(&self) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        if let Some(v) = self.kernel_variation() {
            let ok = v < MAX_KERNEL_VARIATION;
            out.push((format!("kernel_variation={v:.4} bound<{MAX_KERNEL_VARIATION}"), ok));
        }
        if let Some(r2) = self.depth_r2() {
            let ok = r2 >= MIN_DEPTH_R2;
            out.push((format!("depth_r2={r2:.4} bound>={MIN_DEPTH_R2}"), ok));
        }
        let (lo, hi) = EDGE_RATIO_RANGE;
        for (k, r) in self.edge_ratios().into_iter().enumerate() {
            out.push((format!("edge_ratio_{k}={r:.3} bound=[{lo},{hi}]"), (lo..=hi).contains(&r)));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, ok)| *ok)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("sweep,value,edges,features,kernel_weights,median_s,min_s,max_s,reps\n");
        for t in &self.timings {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e},{}\n",
                t.sweep, t.value, t.edges, t.features, t.kernel_weights, t.median, t.min, t.max, t.reps
            ));
        }
        s
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for t in &self.timings {
            s.push_str(&format!(
                "{:<6} {:>7} E={:<7} M={:<3} K={:<4} median={:.3}ms [{:.3}, {:.3}]\n",
                t.sweep,
                t.value,
                t.edges,
                t.features,
                t.kernel_weights,
                t.median * 1e3,
                t.min * 1e3,
                t.max * 1e3
            ));
        }
        for (line, ok) in self.checks() {
            s.push_str(&format!("{line} {}\n", if ok { "PASS" } else { "FAIL" }));
        }
        s
    }
}

/// Least-squares `R^2` of `y` against `x`; `None` with fewer than 3 points
/// or constant `y`.
pub fn r_squared(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Random graph with `edges` edges, `avg_degree` distinct neighbors per
/// node and uniform pseudo-coordinates in `[0, 1)^dim`.
pub fn random_graph(edges: usize, avg_degree: usize, dim: usize, seed: u64) -> Result<Graph> {
    if avg_degree == 0 || edges < avg_degree || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot build a graph with {edges} edges, degree {avg_degree}, dimension {dim}"
        )));
    }
    let n = edges.div_ceil(avg_degree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = Vec::with_capacity(edges);
    for i in 0..n {
        let deg = avg_degree.min(edges - list.len()).min(n);
        let mut t = sample(&mut rng, n, deg).into_vec();
        t.sort_unstable();
        list.extend(t.into_iter().map(|j| (i, j)));
    }
    let pseudo = Matrix::from_fn(list.len(), dim, |_, _| rng.gen_range(0.0..1.0));
    let features = Matrix::from_fn(n, 0, |_, _| 0.0);
    Graph::new(GraphParts { num_nodes: n, edges: list, pseudo: Some(pseudo), features, ..Default::default() })
}

type Case<'a> = Box<dyn FnMut() -> Result<()> + 'a>;

/// Times every case `reps` times, cycling through the cases so that slow
/// phases of the machine spread over all of them. Returns `(median, min,
/// max)` per case.
fn time_interleaved(reps: usize, warmup: usize, cases: &mut [Case<'_>]) -> Result<Vec<(f64, f64, f64)>> {
    for case in cases.iter_mut() {
        for _ in 0..warmup {
            case()?;
        }
    }
    let mut times = vec![Vec::with_capacity(reps); cases.len()];
    for _ in 0..reps.max(1) {
        for (case, t) in cases.iter_mut().zip(&mut times) {
            let start = Instant::now();
            case()?;
            t.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(times
        .into_iter()
        .map(|mut t| {
            t.sort_by(f64::total_cmp);
            let mid = t.len() / 2;
            let median = if t.len() % 2 == 0 { (t[mid - 1] + t[mid]) / 2.0 } else { t[mid] };
            (median, t[0], t[t.len() - 1])
        })
        .collect())
}

fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn layer(cfg: &KernelConfig, features: usize, seed: u64) -> Result<SplineConv<f32>> {
    let mut conv = SplineConv::new(cfg.clone(), features, features, true, true)?;
    conv.set_strategy(Strategy::EdgeParallel);
    conv.init_weights(seed);
    Ok(conv)
}

/// Runs the kernel-size, depth and edge-count sweeps with edge-parallel
/// execution.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let b = &cfg.bench;
    let seed = cfg.experiment.seed;
    let mut timings = Vec::new();

    let g = random_graph(b.edges, b.avg_degree, b.dim, seed)?;
    let x = random_input(g.num_nodes(), b.features, seed);
    let mut setups = Vec::new();
    for &k in &b.kernel_sizes {
        let kc = KernelConfig::open(b.degree, vec![k; b.dim])?;
        let plan = compute_plan::<f32>(g.pseudo().expect("random graph has pseudo"), &kc)?;
        let conv = layer(&kc, b.features, seed)?;
        setups.push((k, kc.num_weights(), plan, conv));
    }
    let mut cases: Vec<Case<'_>> = setups
        .iter()
        .map(|(_, _, plan, conv)| Box::new(|| conv.forward(&g, plan, &x).map(drop)) as Case<'_>)
        .collect();
    let stats = time_interleaved(b.reps, b.warmup, &mut cases)?;
    drop(cases);
    for ((k, weights, _, _), (median, min, max)) in setups.iter().zip(stats) {
        log::info!("kernel {k}^{}: {:.3} ms", b.dim, median * 1e3);
        timings.push(Timing {
            sweep: "kernel",
            value: *k,
            edges: g.num_edges(),
            features: b.features,
            kernel_weights: *weights,
            median,
            min,
            max,
            reps: b.reps,
        });
    }

    let mid = b.kernel_sizes.get(b.kernel_sizes.len() / 2).copied().unwrap_or(5).max(b.degree + 1);
    let kc = KernelConfig::open(b.degree, vec![mid; b.dim])?;
    if b.depth_max > 0 {
        let g = random_graph(b.depth_edges, b.avg_degree, b.dim, seed)?;
        let plan = compute_plan::<f32>(g.pseudo().expect("random graph has pseudo"), &kc)?;
        let x = random_input(g.num_nodes(), b.depth_features, seed);
        let layers: Vec<SplineConv<f32>> =
            (0..b.depth_max).map(|l| layer(&kc, b.depth_features, seed + l as u64)).collect::<Result<_>>()?;
        let mut cases: Vec<Case<'_>> = (1..=b.depth_max)
            .map(|depth| {
                let (g, plan, x, layers) = (&g, &plan, &x, &layers);
                Box::new(move || {
                    let mut h = x.clone();
                    for conv in &layers[..depth] {
                        h = conv.forward(g, plan, &h)?;
                    }
                    Ok(())
                }) as Case<'_>
            })
            .collect();
        let stats = time_interleaved(b.reps, b.warmup, &mut cases)?;
        for (depth, (median, min, max)) in (1..=b.depth_max).zip(stats) {
            timings.push(Timing {
                sweep: "depth",
                value: depth,
                edges: g.num_edges(),
                features: b.depth_features,
                kernel_weights: kc.num_weights(),
                median,
                min,
                max,
                reps: b.reps,
            });
        }
    }

    let mut setups = Vec::new();
    for &e in &b.edge_sweep {
        let g = random_graph(e, b.avg_degree, b.dim, seed)?;
        let plan = compute_plan::<f32>(g.pseudo().expect("random graph has pseudo"), &kc)?;
        let x = random_input(g.num_nodes(), b.edge_features, seed);
        let conv = layer(&kc, b.edge_features, seed)?;
        setups.push((g, plan, x, conv));
    }
    let mut cases: Vec<Case<'_>> = setups
        .iter()
        .map(|(g, plan, x, conv)| Box::new(|| conv.forward(g, plan, x).map(drop)) as Case<'_>)
        .collect();
    let stats = time_interleaved(b.reps, b.warmup, &mut cases)?;
    drop(cases);
    for ((g, _, _, _), (median, min, max)) in setups.iter().zip(stats) {
        log::info!("edges {}: {:.3} ms", g.num_edges(), median * 1e3);
        timings.push(Timing {
            sweep: "edges",
            value: g.num_edges(),
            edges: g.num_edges(),
            features: b.edge_features,
            kernel_weights: kc.num_weights(),
            median,
            min,
            max,
            reps: b.reps,
        });
    }
    Ok(BenchReport { timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentKind;

    #[test]
    fn r_squared_of_lines_and_noise() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        assert!((r_squared(&line).unwrap() - 1.0).abs() < 1e-12);
        let zigzag = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)];
        assert!((r_squared(&zigzag).unwrap() - 0.2).abs() < 1e-12);
        assert!(r_squared(&line[..2]).is_none());
        assert!(r_squared(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).is_none());
    }

    #[test]
    fn random_graph_has_requested_shape() {
        let g = random_graph(1000, 10, 3, 4).unwrap();
        assert_eq!(g.num_edges(), 1000);
        assert_eq!(g.num_nodes(), 100);
        assert!(g.degrees().iter().all(|&d| d == 10));
        assert_eq!(g.pseudo_dim(), 3);
        assert_eq!(random_graph(1000, 10, 3, 4).unwrap(), g);
        assert!(random_graph(5, 10, 3, 4).is_err());
    }

    #[test]
    fn small_sweep_reports_every_point() {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Bench);
        let b = &mut cfg.bench;
        b.edges = 2000;
        b.features = 4;
        b.kernel_sizes = vec![3, 4];
        b.depth_max = 3;
        b.depth_edges = 500;
        b.depth_features = 4;
        b.edge_sweep = vec![500, 1000];
        b.edge_features = 4;
        b.reps = 3;
        b.warmup = 1;
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.timings.len(), 2 + 3 + 2);
        assert!(r.timings.iter().all(|t| t.min <= t.median && t.median <= t.max));
        assert_eq!(r.edge_ratios().len(), 1);
        assert_eq!(r.csv().lines().count(), 8);
        assert_eq!(r.checks().len(), 3);
    }
}
