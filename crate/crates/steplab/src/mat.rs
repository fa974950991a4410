//! Dense row-major matrix kernels shared by the rest of the crate.
//!
//! Everything is computed in f64 even where inputs originate as f32 files;
//! the tight gradient-check tolerances elsewhere depend on it.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense f64 matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::DimensionMismatch(format!(
                "expected {} values for {}x{}, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatError> {
        if rows.is_empty() {
            return Err(MatError::EmptyInput("from_rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MatError::DimensionMismatch(format!(
                    "ragged rows: {} vs {}",
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn check_finite(&self) -> Result<(), MatError> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatError::NonFinite {
                    row: i / self.cols.max(1),
                    col: i % self.cols.max(1),
                });
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// self (m x k) times rhs (k x n).
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        // ikj order keeps the inner loop contiguous on both operands.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self (m x k) times rhs' (n x k), i.e. matmul with the transpose of rhs.
    pub fn matmul_transposed(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.cols,
            "matmul_transposed shape mismatch: {}x{} * ({}x{})^T",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                let b_row = rhs.row(j);
                let mut acc = 0.0;
                for (a, b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Adds a 1 x cols bias row to every row.
    pub fn add_row_broadcast(&mut self, bias: &DenseMatrix) {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[r * self.cols + c] += bias.data[c];
            }
        }
    }

    /// Stacks `top` over `bottom` along the row axis.
    pub fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
        assert_eq!(top.cols, bottom.cols);
        let mut data = Vec::with_capacity((top.rows + bottom.rows) * top.cols);
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        DenseMatrix {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    /// Splits off the first `n` rows, returning (first n, remainder).
    pub fn split_rows(&self, n: usize) -> (DenseMatrix, DenseMatrix) {
        assert!(n <= self.rows);
        let top = DenseMatrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        };
        let bottom = DenseMatrix {
            rows: self.rows - n,
            cols: self.cols,
            data: self.data[n * self.cols..].to_vec(),
        };
        (top, bottom)
    }
}

/// Scales every row to unit Euclidean norm; all-zero rows pass through unchanged.
pub fn l2_normalize_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row {
                *v /= norm;
            }
        }
    }
    out
}

/// Row-wise softmax of m / temperature, with per-row max subtraction.
pub fn row_softmax(m: &DenseMatrix, temperature: f64) -> Result<DenseMatrix, MatError> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(MatError::NonPositiveTemperature(temperature));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row
            .iter()
            .map(|v| v / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v / temperature - max).exp();
            sum += *v;
        }
        for v in row {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Pairwise cosine similarities between rows of `a` and rows of `b`.
/// Zero rows on either side give similarity 0.
pub fn cosine_similarity_matrix(
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> Result<DenseMatrix, MatError> {
    if a.cols() != b.cols() {
        return Err(MatError::DimensionMismatch(format!(
            "cosine: {} vs {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let an = l2_normalize_rows(a);
    let bn = l2_normalize_rows(b);
    Ok(an.matmul_transposed(&bn))
}

/// Elementwise arithmetic mean of same-shape matrices.
pub fn mean_pool_matrices(ms: &[DenseMatrix]) -> Result<DenseMatrix, MatError> {
    let first = ms.first().ok_or(MatError::EmptyInput("mean_pool_matrices"))?;
    let mut out = first.clone();
    for m in &ms[1..] {
        if (m.rows(), m.cols()) != (first.rows(), first.cols()) {
            return Err(MatError::DimensionMismatch(format!(
                "mean pool: {}x{} vs {}x{}",
                m.rows(),
                m.cols(),
                first.rows(),
                first.cols()
            )));
        }
        out.add_assign(m);
    }
    out.scale(1.0 / ms.len() as f64);
    Ok(out)
}

/// Affinely maps each row onto [0, 1]; a constant row becomes all 0.5.
pub fn row_minmax_normalize(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            let span = max - min;
            for v in row {
                *v = (*v - min) / span;
            }
        } else {
            for v in row {
                *v = 0.5;
            }
        }
    }
    out
}
