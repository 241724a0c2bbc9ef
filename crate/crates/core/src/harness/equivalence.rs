//! Spline convolution on pixel grids against dense image cross-correlation.
//!
//! With linear splines, `k = 2r + 1` control points per axis and Cartesian
//! pseudo-coordinates, the neighbor at offset `(dx, dy)` lands exactly on
//! control point `(dx + r, dy + r)`. Positions are `(x, y) = (column, row)`
//! and the first pseudo dimension varies fastest, so dense tap `K[a][b]`
//! (row offset `a - r`, column offset `b - r`) is spline weight
//! `W[b + (2r + 1) a]`:
//!
//! ```text
//!   3x3 taps K[a][b]        spline weights W[q]
//!   a\b  0   1   2          q =  0  1  2     (dy = -1)
//!    0   .   .   .               3  4  5     (dy =  0)
//!    1   .   c   .               6  7  8     (dy = +1)
//!    2   .   .   .          dx: -1  0 +1
//! ```

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::SplineConv;
use crate::error::{Error, Result};
use crate::graph::{build_grid_graph, Graph, Neighborhood};
use crate::harness::config::ExperimentConfig;
use crate::kernel::{compute_plan, BasisPlan, KernelConfig};
use crate::oracle::dense_conv2d;
use crate::pseudo::{fit_and_apply, PseudoKind};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceCase {
    pub name: String,
    pub images: usize,
    /// Largest interior deviation from the dense reference.
    pub max_abs_diff: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub tolerance: f64,
    pub cases: Vec<EquivalenceCase>,
    pub seconds: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn text(&self, with_times: bool) -> String {
        let mut s = String::new();
        for c in &self.cases {
            s.push_str(&format!(
                "{:<16} images={:<3} max_abs_diff={:.3e} tolerance={:.0e} {}\n",
                c.name,
                c.images,
                c.max_abs_diff,
                self.tolerance,
                if c.passed { "PASS" } else { "FAIL" }
            ));
        }
        if with_times {
            s.push_str(&format!("seconds={:.3}\n", self.seconds));
        }
        s
    }
}

/// Spline weights reproducing the square `kernel` as a cross-correlation.
pub fn kernel_to_weights(kernel: &Matrix<f64>) -> Vec<f64> {
    let k = kernel.rows();
    let mut w = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            w[b + k * a] = kernel.get(a, b);
        }
    }
    w
}

/// Grid graph, plan and layer equivalent to a `(2r+1)^2` dense kernel.
pub struct GridConv {
    pub graph: Graph,
    pub plan: BasisPlan<f32>,
    pub conv: SplineConv<f32>,
    pub radius: usize,
    width: usize,
    height: usize,
}

impl GridConv {
    pub fn new(width: usize, height: usize, neighborhood: Neighborhood) -> Result<GridConv> {
        let radius = neighborhood.radius();
        let g = build_grid_graph(width, height, neighborhood, true)?;
        let (graph, _) = fit_and_apply(g, PseudoKind::Cartesian2)?;
        let k = 2 * radius + 1;
        let cfg = KernelConfig::open(1, vec![k, k])?;
        let plan = compute_plan(graph.pseudo().expect("pseudo fitted"), &cfg)?;
        let conv = SplineConv::new(cfg, 1, 1, false, false)?;
        Ok(GridConv { graph, plan, conv, radius, width, height })
    }

    /// Output image for `image` convolved with `kernel`.
    pub fn apply(&mut self, image: &Matrix<f64>, kernel: &Matrix<f64>) -> Result<Matrix<f64>> {
        let k = 2 * self.radius + 1;
        if kernel.shape() != (k, k) || image.shape() != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "expected a {k}x{k} kernel and a {}x{} image",
                self.height, self.width
            )));
        }
        for (dst, src) in self.conv.weight_mut().iter_mut().zip(kernel_to_weights(kernel)) {
            *dst = src as f32;
        }
        let x: Matrix<f32> = image.cast();
        let x = x.reshape(self.width * self.height, 1)?;
        let y = self.conv.forward(&self.graph, &self.plan, &x)?;
        Ok(y.cast::<f64>().reshape(self.height, self.width)?)
    }

    /// Largest difference over pixels whose whole neighborhood is inside.
    pub fn interior_max_diff(&self, a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        let r = self.radius;
        let mut worst = 0.0f64;
        for y in r..self.height.saturating_sub(r) {
            for x in r..self.width.saturating_sub(r) {
                worst = worst.max((a.get(y, x) - b.get(y, x)).abs());
            }
        }
        worst
    }
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    // values exactly representable in single precision
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi) as f32 as f64)
}

fn random_case(
    name: &str,
    neighborhood: Neighborhood,
    images: usize,
    size: usize,
    tolerance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EquivalenceCase> {
    let mut gc = GridConv::new(size, size, neighborhood)?;
    let k = 2 * gc.radius + 1;
    let mut worst = 0.0f64;
    for _ in 0..images {
        let image = random_matrix(size, size, 0.0, 1.0, rng);
        let kernel = random_matrix(k, k, -1.0, 1.0, rng);
        let got = gc.apply(&image, &kernel)?;
        worst = worst.max(gc.interior_max_diff(&got, &dense_conv2d(&image, &kernel)?));
    }
    Ok(EquivalenceCase { name: name.into(), images, max_abs_diff: worst, passed: worst <= tolerance })
}

fn constant_case(size: usize, tolerance: f64, rng: &mut ChaCha8Rng) -> Result<EquivalenceCase> {
    let mut gc = GridConv::new(size, size, Neighborhood::Full8)?;
    let c = rng.gen_range(0.0..1.0f32) as f64;
    let image = Matrix::from_fn(size, size, |_, _| c);
    let kernel = random_matrix(3, 3, -1.0, 1.0, rng);
    let got = gc.apply(&image, &kernel)?;
    let expect = c * kernel.as_slice().iter().sum::<f64>();
    let flat = Matrix::from_fn(size, size, |_, _| expect);
    let worst = gc.interior_max_diff(&got, &flat);
    Ok(EquivalenceCase { name: "constant_3x3".into(), images: 1, max_abs_diff: worst, passed: worst <= tolerance })
}

/// Runs the 3x3, 5x5 and constant-image comparisons.
pub fn run_grid_equivalence(cfg: &ExperimentConfig) -> Result<EquivalenceReport> {
    let e = &cfg.equivalence;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.experiment.seed);
    let cases = vec![
        random_case("dense_3x3", Neighborhood::Full8, e.images, e.size, e.tolerance, &mut rng)?,
        random_case("dense_5x5", Neighborhood::Full24, e.images, e.size, e.tolerance, &mut rng)?,
        constant_case(e.size, e.tolerance, &mut rng)?,
    ];
    Ok(EquivalenceReport { tolerance: e.tolerance, cases, seconds: started.elapsed().as_secs_f64() })
}
