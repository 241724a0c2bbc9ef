use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

pub const ELU_ALPHA: f64 = 1.0;

/// `x` for positive inputs, `alpha (e^x - 1)` otherwise.
pub fn elu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let a = T::of(ELU_ALPHA);
    x.map(|v| if v > T::zero() { v } else { a * v.exp_m1() })
}

pub fn elu_backward<T: Real>(x: &Matrix<T>, grad_out: &Matrix<T>) -> Matrix<T> {
    assert_eq!(x.shape(), grad_out.shape(), "shape mismatch in elu_backward");
    let a = T::of(ELU_ALPHA);
    let data = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { g * a * v.exp() })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// Inverted dropout. Returns the output and, in training mode, the scaled
/// keep mask needed by [`dropout_backward`].
pub fn dropout<T: Real, R: Rng>(
    x: &Matrix<T>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Matrix<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let scale = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.as_slice().len())
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { scale })
        .collect();
    let data = x.as_slice().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Matrix::from_vec(x.rows(), x.cols(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad_out: &Matrix<T>, mask: Option<&[T]>) -> Matrix<T> {
    match mask {
        None => grad_out.clone(),
        Some(mask) => {
            let data = grad_out.as_slice().iter().zip(mask).map(|(&g, &m)| g * m).collect();
            Matrix::from_vec(grad_out.rows(), grad_out.cols(), data).expect("same shape")
        }
    }
}
