//! Dense row-major matrices.

use crate::error::{Error, Result};
use crate::real::Real;
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the buffer with a new shape of the same size.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        Matrix::from_vec(rows, cols, self.data)
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {} columns onto {cols}",
                    m.cols
                )));
            }
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

impl<T: Real> Matrix<T> {
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        self.map(|x| U::of(x.to_f64()))
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry in each row (first one on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_assign");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_inner(what: &str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::ShapeMismatch(format!("{what}: inner dimensions {left} and {right} differ")));
    }
    Ok(())
}

/// `a * b`
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_inner("matmul", a.cols, b.rows)?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    if b.cols == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(b.cols)
        .zip(a.data.par_chunks(a.cols.max(1)))
        .for_each(|(o, ar)| {
            for (k, &x) in ar.iter().enumerate() {
                if x != T::zero() {
                    axpy(x, b.row(k), o);
                }
            }
        });
    Ok(out)
}

/// `a^T * b`
pub fn matmul_tn<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_inner("matmul_tn", a.rows, b.rows)?;
    let mut out = Matrix::zeros(a.cols, b.cols);
    if b.cols == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(b.cols).enumerate().for_each(|(k, o)| {
        for i in 0..a.rows {
            let x = a.data[i * a.cols + k];
            if x != T::zero() {
                axpy(x, b.row(i), o);
            }
        }
    });
    Ok(out)
}

/// `a * b^T`
pub fn matmul_nt<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_inner("matmul_nt", a.cols, b.cols)?;
    let mut out = Matrix::zeros(a.rows, b.rows);
    if b.rows == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(b.rows).enumerate().for_each(|(i, o)| {
        let ar = a.row(i);
        for (j, slot) in o.iter_mut().enumerate() {
            *slot = ar.iter().zip(b.row(j)).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_len() {
        assert!(Matrix::<f64>::from_vec(2, 3, vec![0.0; 5]).is_err());
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn vstack_and_select() {
        let a = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = Matrix::vstack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert_eq!(s.select_rows(&[2, 0]).as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        let c = Matrix::<f64>::zeros(1, 3);
        assert!(Matrix::vstack(&[&a, &c]).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 3.0, 3.0, -1.0, -2.0, -3.0]).unwrap();
        assert_eq!(m.argmax_rows(), vec![1, 0]);
    }

    #[test]
    fn products_agree() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        let b = Matrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.5);
        let ab = matmul(&a, &b).unwrap();
        assert_eq!(ab.get(0, 0), (0..4).map(|k| a.get(0, k) * b.get(k, 0)).sum::<f64>());
        let bt = Matrix::from_fn(2, 4, |i, j| b.get(j, i));
        assert_eq!(matmul_nt(&a, &bt).unwrap(), ab);
        let at = Matrix::from_fn(4, 3, |i, j| a.get(j, i));
        assert_eq!(matmul_tn(&at, &b).unwrap(), ab);
        assert!(matmul(&a, &a).is_err());
    }
}
