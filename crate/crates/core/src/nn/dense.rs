use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Matrix};

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    weight: Matrix<T>,
    bias: Vec<T>,
    grad_weight: Matrix<T>,
    grad_bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(in_features: usize, out_features: usize) -> Result<Dense<T>> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidConfig(format!(
                "dense layer widths must be positive, got {in_features} -> {out_features}"
            )));
        }
        Ok(Dense {
            weight: Matrix::zeros(in_features, out_features),
            bias: vec![T::zero(); out_features],
            grad_weight: Matrix::zeros(in_features, out_features),
            grad_bias: vec![T::zero(); out_features],
        })
    }

    pub fn from_parts(weight: Matrix<T>, bias: Vec<T>) -> Result<Dense<T>> {
        if bias.len() != weight.cols() {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weight.cols()
            )));
        }
        let mut d = Dense::new(weight.rows(), weight.cols())?;
        d.weight = weight;
        d.bias = bias;
        Ok(d)
    }

    /// Uniform `(-b, b)` weights with `b = in^(-1/2)`, zero bias.
    pub fn init_weights(&mut self, seed: u64) {
        let b = 1.0 / (self.in_features() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in self.weight.as_mut_slice() {
            *w = T::of(rng.gen_range(-b..b));
        }
        self.bias.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn in_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn grad_weight(&self) -> &Matrix<T> {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[T] {
        &self.grad_bias
    }

    pub fn params_and_grads(&mut self) -> Vec<(&mut [T], &[T])> {
        vec![
            (self.weight.as_mut_slice(), self.grad_weight.as_slice()),
            (self.bias.as_mut_slice(), self.grad_bias.as_slice()),
        ]
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(T::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut y = matmul(x, &self.weight)?;
        for r in 0..y.rows() {
            for (v, &b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        if grad_out.shape() != (x.rows(), self.out_features()) {
            return Err(Error::ShapeMismatch(format!(
                "output gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                self.out_features()
            )));
        }
        self.grad_weight.add_assign(&matmul_tn(x, grad_out)?);
        for r in 0..grad_out.rows() {
            for (g, &d) in self.grad_bias.iter_mut().zip(grad_out.row(r)) {
                *g += d;
            }
        }
        matmul_nt(grad_out, &self.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{finite_diff_grad, FdConfig};

    #[test]
    fn identity_and_bias() {
        let eye = Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let d = Dense::from_parts(eye, vec![0.0; 3]).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(d.forward(&x).unwrap(), x);
        let d = Dense::from_parts(Matrix::from_fn(3, 2, |i, j| (i + j) as f64), vec![1.5, -2.0]).unwrap();
        let y = d.forward(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(y.as_slice(), &[1.5, -2.0, 1.5, -2.0]);
        assert!(d.forward(&Matrix::zeros(2, 4)).is_err());
        assert!(Dense::<f64>::from_parts(Matrix::zeros(2, 2), vec![0.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut d = Dense::<f64>::new(5, 3).unwrap();
        d.init_weights(3);
        d.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = Matrix::from_fn(4, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let c = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.71).cos());
        let dx = d.backward(&x, &c).unwrap();
        let fd = FdConfig::default();
        let loss = |d: &Dense<f64>, x: &Matrix<f64>| d.forward(x).unwrap().dot(&c);
        let num = finite_diff_grad(
            d.weight().as_slice(),
            |w| {
                let mut p = d.clone();
                p.weight_mut().as_mut_slice().copy_from_slice(w);
                loss(&p, &x)
            },
            &fd,
        )
        .unwrap();
        assert!(fd.max_relative_error(d.grad_weight().as_slice(), &num) <= fd.tolerance);
        let num = finite_diff_grad(
            d.bias(),
            |b| {
                let mut p = d.clone();
                p.bias_mut().copy_from_slice(b);
                loss(&p, &x)
            },
            &fd,
        )
        .unwrap();
        assert!(fd.max_relative_error(d.grad_bias(), &num) <= fd.tolerance);
        let num = finite_diff_grad(x.as_slice(), |v| loss(&d, &Matrix::from_vec(4, 5, v.to_vec()).unwrap()), &fd)
            .unwrap();
        assert!(fd.max_relative_error(dx.as_slice(), &num) <= fd.tolerance);
    }
}
