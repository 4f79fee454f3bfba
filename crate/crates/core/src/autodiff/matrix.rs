use super::real::Real;

/// Dense row-major matrix; rows index batch entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self::from_vec(rows, cols, data.iter().map(|&v| T::lift(v)).collect())
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_assign(&mut self, o: &Matrix<T>) {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a = *a + b;
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn columns(&self, start: usize, len: usize) -> Self {
        let mut out = Self::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + len]);
        }
        out
    }

    /// Side-by-side concatenation.
    pub fn hcat(parts: &[&Matrix<T>]) -> Self {
        let rows = parts.first().map_or(0, |m| m.rows);
        assert!(parts.iter().all(|m| m.rows == rows), "hcat row mismatch");
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            let dst = out.row_mut(r);
            for m in parts {
                dst[c0..c0 + m.cols].copy_from_slice(m.row(r));
                c0 += m.cols;
            }
        }
        out
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(self.rows, self.cols, rhs.cols, &self.data, false, &rhs.data, false, T::zero(), &mut out.data);
        out
    }
}
