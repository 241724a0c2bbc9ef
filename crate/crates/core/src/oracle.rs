//! Brute-force references: the spline convolution summed over every control
//! point, dense 2D cross-correlation and central finite differences.
//!
//! Everything here is single-threaded and double precision, and shares no
//! evaluation code with the fast paths.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernel::KernelConfig;
use crate::tensor::Matrix;

/// Upper bound on `K * E * M_in * M_out` for [`naive_spline_conv`].
pub const NAIVE_WORK_LIMIT: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Smallest denominator used by [`FdConfig::relative_error`].
    pub floor: f64,
    /// Rounding errors assumed per loss evaluation, in units of
    /// `f64::EPSILON * max(|f|, 1)`; see [`FdConfig::resolution`].
    pub noise_ulps: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step: 1e-6, tolerance: 1e-5, floor: 1e-8, noise_ulps: 4.0 }
    }
}

impl FdConfig {
    pub fn new(step: f64, tolerance: f64) -> Result<FdConfig> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
        }
        Ok(FdConfig { step, tolerance, ..FdConfig::default() })
    }

    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, analytic: f64, numeric: f64) -> f64 {
        relative(analytic, numeric, self.floor)
    }

    /// Largest entrywise relative error.
    pub fn max_relative_error(&self, analytic: &[f64], numeric: &[f64]) -> f64 {
        assert_eq!(analytic.len(), numeric.len());
        max_relative(analytic, numeric, self.floor)
    }

    /// Gradient magnitude below which rounding noise in the central
    /// difference of a loss of size `loss` alone reaches the tolerance.
    pub fn resolution(&self, loss: f64) -> f64 {
        self.noise_ulps * f64::EPSILON * loss.abs().max(1.0) / (self.step * self.tolerance)
    }

    /// Largest entrywise relative error with denominators floored at
    /// [`FdConfig::resolution`].
    pub fn max_resolved_error(&self, analytic: &[f64], numeric: &[f64], loss: f64) -> f64 {
        assert_eq!(analytic.len(), numeric.len());
        max_relative(analytic, numeric, self.floor.max(self.resolution(loss)))
    }
}

fn relative(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn max_relative(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic.iter().zip(numeric).map(|(&a, &n)| relative(a, n, floor)).fold(0.0, f64::max)
}

/// Cardinal B-spline of degree `m` supported on `[0, m + 1)`, by the
/// Cox-de Boor recursion.
pub fn cardinal_bspline(m: usize, x: f64) -> f64 {
    if m == 0 {
        return if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
    }
    let mf = m as f64;
    (x * cardinal_bspline(m - 1, x) + (mf + 1.0 - x) * cardinal_bspline(m - 1, x - 1.0)) / mf
}

fn basis_value(q: usize, u: f64, k: usize, m: usize, closed: bool) -> f64 {
    let q = q as f64;
    let mf = m as f64;
    if closed {
        let kf = k as f64;
        let v = u * kf;
        (-2..=2).map(|n| cardinal_bspline(m, v - q + mf + n as f64 * kf)).sum()
    } else {
        cardinal_bspline(m, u * (k - m) as f64 - q + mf)
    }
}

/// Value of every one of the `K` tensor-product basis functions at `u`,
/// indexed by flat control point index.
pub fn dense_basis(config: &KernelConfig, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), config.dim());
    let m = config.degree();
    let mut out = vec![1.0; config.num_weights()];
    let mut stride = 1;
    for (a, (&k, &closed)) in config.size().iter().zip(config.closed()).enumerate() {
        let values: Vec<f64> = (0..k).map(|q| basis_value(q, u[a], k, m, closed)).collect();
        for (flat, slot) in out.iter_mut().enumerate() {
            *slot *= values[(flat / stride) % k];
        }
        stride *= k;
    }
    out
}

/// Literal evaluation of the spline convolution: for every edge and
/// feature pair, the kernel is summed over all `K` control points.
pub fn naive_spline_conv(
    graph: &Graph,
    config: &KernelConfig,
    weight: &[f64],
    root: Option<&[f64]>,
    input: &Matrix<f64>,
    normalize: bool,
) -> Result<Matrix<f64>> {
    let (n, m_in) = input.shape();
    let k = config.num_weights();
    if weight.len() % (k * m_in.max(1)) != 0 || m_in == 0 {
        return Err(Error::ShapeMismatch("weights do not match kernel and input width".into()));
    }
    let m_out = weight.len() / (k * m_in);
    if n != graph.num_nodes() {
        return Err(Error::ShapeMismatch(format!("input has {n} rows for {} nodes", graph.num_nodes())));
    }
    let work = k
        .saturating_mul(graph.num_edges())
        .saturating_mul(m_in)
        .saturating_mul(m_out);
    if work > NAIVE_WORK_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "instance needs {work} kernel terms, above the limit of {NAIVE_WORK_LIMIT}"
        )));
    }
    let pseudo = graph
        .pseudo()
        .ok_or_else(|| Error::MissingData("graph has no pseudo-coordinates".into()))?;
    let mut out = Matrix::zeros(n, m_out);
    for (e, (i, j)) in graph.edges().enumerate() {
        let basis = dense_basis(config, pseudo.row(e));
        let norm = if normalize { 1.0 / graph.degree(i) as f64 } else { 1.0 };
        for o in 0..m_out {
            let mut acc = 0.0;
            for l in 0..m_in {
                let g: f64 = (0..k).map(|q| weight[(q * m_in + l) * m_out + o] * basis[q]).sum();
                acc += input.get(j, l) * g;
            }
            out.set(i, o, out.get(i, o) + norm * acc);
        }
    }
    if let Some(root) = root {
        if root.len() != m_in * m_out {
            return Err(Error::ShapeMismatch("root weights do not match feature widths".into()));
        }
        for i in 0..n {
            for o in 0..m_out {
                let r: f64 = (0..m_in).map(|l| input.get(i, l) * root[l * m_out + o]).sum();
                out.set(i, o, out.get(i, o) + r);
            }
        }
    }
    Ok(out)
}

/// Zero-padded cross-correlation:
/// `out[y][x] = sum_{a,b} kernel[a][b] * image[y + a - r][x + b - r]`.
pub fn dense_conv2d(image: &Matrix<f64>, kernel: &Matrix<f64>) -> Result<Matrix<f64>> {
    let (kh, kw) = kernel.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel must be square with odd size, got {kh}x{kw}")));
    }
    let r = (kh / 2) as isize;
    let (h, w) = image.shape();
    let mut out = Matrix::zeros(h, w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for a in 0..kh as isize {
                for b in 0..kw as isize {
                    let (yy, xx) = (y + a - r, x + b - r);
                    if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                        acc += kernel.get(a as usize, b as usize) * image.get(yy as usize, xx as usize);
                    }
                }
            }
            out.set(y as usize, x as usize, acc);
        }
    }
    Ok(out)
}

/// Central differences `(f(theta + h e_i) - f(theta - h e_i)) / 2h`.
pub fn finite_diff_grad(
    params: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    config: &FdConfig,
) -> Result<Vec<f64>> {
    let h = config.step;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = loss(&theta);
        theta[i] = orig - h;
        let minus = loss(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::InvalidArgument(format!("loss is not finite when perturbing parameter {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
