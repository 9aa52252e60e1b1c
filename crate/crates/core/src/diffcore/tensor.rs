//! Dense row-major `f64` arrays of rank 0 to 3.

use serde::{Deserialize, Serialize};

use super::DiffError;

/// Dense row-major array. Rank 0 is a scalar, rank 2 the common case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        if shape.len() > 3 {
            return Err(DiffError::Rank { got: shape.len() });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(DiffError::Length {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DiffError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(DiffError::Shape {
                    op: "from_rows",
                    lhs: vec![rows.len(), cols],
                    rhs: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` for a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), DiffError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(DiffError::Rank {
                got: self.shape.len(),
            }),
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64, DiffError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(DiffError::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    /// Element `(i, j)` of a rank-2 tensor. Panics out of range.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        let cols = self.shape[self.shape.len() - 1];
        self.data[i * cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self, DiffError> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn transpose(&self) -> Result<Self, DiffError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }

    /// Plain (non-recorded) matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Self, DiffError> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(DiffError::Shape {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, false, &other.data, false, &mut out, 0.0);
        Self::new(vec![m, n], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `c = beta * c + op(a) * op(b)` where `op` optionally transposes.
///
/// `a` is logically `m x k` and `b` is `k x n` after the optional transpose;
/// both are stored row-major in their untransposed layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // Stored layouts: a is (m x k) or, if transposed, (k x m); same for b.
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
