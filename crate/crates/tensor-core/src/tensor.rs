//! Dense row-major matrices of `f64`.

use std::fmt;

use crate::TensorError;

/// A rank-2 dense array. Vectors are stored as `1×n` rows, scalars as `1×1`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn row(values: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row_slice(r).to_vec()).collect()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.check_same(other, "add")?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.check_same(other, "sub")?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.check_same(other, "mul")?;
        Ok(self.zip(other, |a, b| a * b))
    }

    /// Elementwise quotient.
    pub fn divide(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.check_same(other, "div")?;
        Ok(self.zip(other, |a, b| a / b))
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn transpose(&self) -> Tensor {
        let mut t = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, n, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let orow = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            rows: m,
            cols: p,
            data: out,
        })
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols != other.cols {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, n, p) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let a = &self.data[i * n..(i + 1) * n];
            for j in 0..p {
                let b = &other.data[j * n..(j + 1) * n];
                out[i * p + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(Tensor {
            rows: m,
            cols: p,
            data: out,
        })
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.rows != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * p];
        for k in 0..n {
            let arow = &self.data[k * m..(k + 1) * m];
            let brow = &other.data[k * p..(k + 1) * p];
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[i * p..(i + 1) * p];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            rows: m,
            cols: p,
            data: out,
        })
    }

    /// Euclidean norm of each column, as a `1×cols` row.
    pub fn column_norms(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row_slice(r)) {
                *o += x * x;
            }
        }
        Tensor::row(out.into_iter().map(f64::sqrt).collect())
    }

    /// Sum over rows, as a `1×cols` row.
    pub fn column_sums(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row_slice(r)) {
                *o += x;
            }
        }
        Tensor::row(out)
    }

    /// Columns `start..start + width`.
    pub fn columns(&self, start: usize, width: usize) -> Tensor {
        let mut t = Tensor::zeros(self.rows, width);
        for r in 0..self.rows {
            t.row_slice_mut(r)
                .copy_from_slice(&self.row_slice(r)[start..start + width]);
        }
        t
    }

    /// Row-wise softmax, stabilized by subtracting the row maximum. With
    /// `causal`, entry (i, j) for j > i is masked out.
    pub fn softmax_rows(&self, causal: bool) -> Result<Tensor, TensorError> {
        if !self.is_finite() {
            return Err(TensorError::NonFiniteInput("softmax_rows"));
        }
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let limit = if causal {
                (r + 1).min(self.cols)
            } else {
                self.cols
            };
            let row = &self.row_slice(r)[..limit];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = out.row_slice_mut(r);
            let mut sum = 0.0;
            for (dst, &x) in o.iter_mut().zip(row) {
                *dst = (x - max).exp();
                sum += *dst;
            }
            for dst in &mut o[..limit] {
                *dst /= sum;
            }
        }
        Ok(out)
    }
}
