use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

/// Mean cross-entropy of the row softmax against integer labels.
///
/// With `mask`, only the listed rows contribute and the gradient of all
/// other rows is zero. Returns the loss and the gradient w.r.t. `logits`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
    mask: Option<&[usize]>,
) -> Result<(f64, Matrix<T>)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    let all: Vec<usize>;
    let rows = match mask {
        Some(m) => m,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    if rows.is_empty() {
        return Err(Error::InvalidArgument("cross-entropy over an empty set of rows".into()));
    }
    let count = rows.len() as f64;
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    for &r in rows {
        if r >= n {
            return Err(Error::InvalidArgument(format!("mask row {r} out of range for {n} rows")));
        }
        let y = labels[r];
        if y >= c {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.to_f64()));
        let sum: f64 = row.iter().map(|&v| (v.to_f64() - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y].to_f64();
        let g = grad.row_mut(r);
        for (k, slot) in g.iter_mut().enumerate() {
            let p = (row[k].to_f64() - log_z).exp();
            let t = if k == y { 1.0 } else { 0.0 };
            *slot = T::of((p - t) / count);
        }
    }
    Ok((loss / count, grad))
}
