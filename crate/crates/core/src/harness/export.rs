//! Sampling learned kernel functions on a regular grid for plotting.

use crate::checkpoint::{Checkpoint, LayerState};
use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, KernelConfig};

/// CSV of `g_l,o(u)` for every input/output pair of spline layer `layer`
/// (counting spline layers only), with `resolution` samples per axis at
/// `u = i / (resolution - 1)`. Header `u_1,..,u_d,l,o,g`; the first
/// coordinate varies fastest.
pub fn export_kernels(checkpoint: &Checkpoint, layer: usize, resolution: usize) -> Result<String> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!("resolution must be at least 2, got {resolution}")));
    }
    let splines: Vec<&LayerState> =
        checkpoint.layers.iter().filter(|l| matches!(l, LayerState::Spline { .. })).collect();
    let Some(LayerState::Spline { kernel_size, closed, degree, in_features, out_features, weight, .. }) =
        splines.get(layer)
    else {
        return Err(Error::InvalidArgument(format!(
            "spline layer {layer} requested, checkpoint has {}",
            splines.len()
        )));
    };
    let cfg = KernelConfig::new(*degree, kernel_size.clone(), closed.clone())?;
    let d = cfg.dim();
    let mut out: String = (1..=d).map(|i| format!("u_{i},")).collect();
    out.push_str("l,o,g\n");
    let points = resolution.pow(d as u32);
    let mut u = vec![0.0; d];
    for l in 0..*in_features {
        for o in 0..*out_features {
            for p in 0..points {
                let mut rest = p;
                for slot in u.iter_mut() {
                    *slot = (rest % resolution) as f64 / (resolution - 1) as f64;
                    rest /= resolution;
                }
                let g = eval_kernel(&cfg, weight, *in_features, *out_features, &u, l, o)?;
                for v in &u {
                    out.push_str(&format!("{v},"));
                }
                out.push_str(&format!("{l},{o},{g}\n"));
            }
        }
    }
    Ok(out)
}
