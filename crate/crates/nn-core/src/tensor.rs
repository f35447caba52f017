//! Dense rank-3 array (depth x height x width) and a small row-major matrix.

use crate::error::NnError;
use crate::scalar::Scalar;

/// Dense rank-3 numeric array in row-major order: depth outer, then row, then column.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    depth: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(depth: usize, height: usize, width: usize) -> Self {
        Self {
            depth,
            height,
            width,
            values: vec![T::zero(); depth * height * width],
        }
    }

    /// Builds a tensor from a flat row-major vector, rejecting length mismatches.
    pub fn from_vec(
        depth: usize,
        height: usize,
        width: usize,
        values: Vec<T>,
    ) -> Result<Self, NnError> {
        if depth == 0 || height == 0 || width == 0 {
            return Err(NnError::InvalidGeometry(format!(
                "tensor dimensions must be >= 1, got {depth}x{height}x{width}"
            )));
        }
        if values.len() != depth * height * width {
            return Err(NnError::LengthMismatch {
                expected: depth * height * width,
                got: values.len(),
            });
        }
        Ok(Self {
            depth,
            height,
            width,
            values,
        })
    }

    /// Single-channel helper for tests and image ingestion.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, NnError> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(height * width);
        for row in rows {
            if row.len() != width {
                return Err(NnError::LengthMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(1, height, width, values)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn flat_index(&self, d: usize, r: usize, c: usize) -> usize {
        (d * self.height + r) * self.width + c
    }

    #[inline]
    pub fn get(&self, d: usize, r: usize, c: usize) -> T {
        self.values[self.flat_index(d, r, c)]
    }

    #[inline]
    pub fn set(&mut self, d: usize, r: usize, c: usize, v: T) {
        let i = self.flat_index(d, r, c);
        self.values[i] = v;
    }

    /// Reads position (d, r, c) of the tensor padded with `padding` rings of
    /// zeros; (r, c) are padded coordinates.
    #[inline]
    pub fn get_padded(&self, d: usize, r: usize, c: usize, padding: usize) -> T {
        if r < padding || c < padding {
            return T::zero();
        }
        let (r, c) = (r - padding, c - padding);
        if r >= self.height || c >= self.width {
            return T::zero();
        }
        self.get(d, r, c)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row-major matrix for fully-connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self, NnError> {
        if values.len() != rows * cols {
            return Err(NnError::LengthMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }
}
