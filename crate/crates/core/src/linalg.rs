//! Minimal dense linear algebra: row-major matrices and Cholesky solves.
//!
//! The systems solved here are small (k x k local kriging systems, capped
//! train covariances), so a straightforward hand-rolled factorization keeps
//! the whole stack generic over [`Scalar`] without pulling in a matrix crate.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} non-positive)")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is not positive definite even after diagonal jitter up to {max_jitter}")]
    JitterExhausted { max_jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    data: Vec<F>,
    rows: usize,
    cols: usize,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { data: vec![F::zero(); rows * cols], rows, cols }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { data, rows, cols }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix<F> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Maximum absolute difference from the transpose, relative to the largest
    /// absolute entry.
    pub fn asymmetry(&self) -> F {
        let mut max_diff = F::zero();
        let mut max_abs = F::zero();
        for i in 0..self.rows {
            for j in 0..i {
                let d = (self.get(i, j) - self.get(j, i)).abs();
                if d > max_diff {
                    max_diff = d;
                }
            }
            for j in 0..self.cols {
                let a = self.get(i, j).abs();
                if a > max_abs {
                    max_abs = a;
                }
            }
        }
        if max_abs > F::zero() {
            max_diff / max_abs
        } else {
            F::zero()
        }
    }
}

/// Lower-triangular Cholesky factor L with A = L * L^T.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<F> {
    l: Matrix<F>,
}

impl<F: Scalar> CholeskyFactor<F> {
    pub fn lower(&self) -> &Matrix<F> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves A x = b by forward then backward substitution.
    pub fn solve(&self, b: &[F]) -> Result<Vec<F>, LinalgError> {
        let n = self.l.rows;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut x = b.to_vec();
        // L y = b
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.l.get(j, i) * x[j];
            }
            x[i] = s / self.l.get(i, i);
        }
        Ok(x)
    }

    pub fn smallest_pivot(&self) -> F {
        (0..self.l.rows)
            .map(|i| self.l.get(i, i))
            .fold(F::infinity(), |a, b| if b < a { b } else { a })
    }

    /// L * L^T, for factorization round-trip checks.
    pub fn reconstruct(&self) -> Matrix<F> {
        let n = self.l.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let m = i.min(j);
                let mut s = F::zero();
                for k in 0..=m {
                    s += self.l.get(i, k) * self.l.get(j, k);
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Plain Cholesky factorization of a symmetric matrix. Only the lower
/// triangle of `a` is read.
pub fn cholesky<F: Scalar>(a: &Matrix<F>) -> Result<CholeskyFactor<F>, LinalgError> {
    cholesky_in_place(a.clone())
}

/// Cholesky reusing the input's buffer: L overwrites the lower triangle,
/// anything above the diagonal is left untouched and never read back.
pub fn cholesky_in_place<F: Scalar>(mut a: Matrix<F>) -> Result<CholeskyFactor<F>, LinalgError> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let cols = a.cols;
    let l = &mut a.data;
    for i in 0..n {
        for j in 0..=i {
            let mut s = l[i * cols + j];
            // entries (i, 0..j) and (j, 0..j) already hold L
            for k in 0..j {
                s -= l[i * cols + k] * l[j * cols + k];
            }
            l[i * cols + j] = if i == j {
                if s <= F::zero() || !s.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { pivot: i });
                }
                s.sqrt()
            } else {
                s / l[j * cols + j]
            };
        }
    }
    Ok(CholeskyFactor { l: a })
}

/// Cholesky with escalating diagonal jitter on failure.
///
/// Starts at `1e-8 * unit`, escalates by x10 up to `1e-4 * unit`, then gives
/// up. Returns the factor together with the total jitter added.
pub fn cholesky_jittered<F: Scalar>(
    a: &Matrix<F>,
    unit: F,
) -> Result<(CholeskyFactor<F>, F), LinalgError> {
    if let Ok(f) = cholesky(a) {
        return Ok((f, F::zero()));
    }
    let mut jitter = F::from_f64(1e-8).unwrap() * unit;
    let max_jitter = F::from_f64(1e-4).unwrap() * unit;
    loop {
        let mut jittered = a.clone();
        for i in 0..a.rows {
            jittered.set(i, i, a.get(i, i) + jitter);
        }
        if let Ok(f) = cholesky(&jittered) {
            return Ok((f, jitter));
        }
        jitter = jitter * F::from_f64(10.0).unwrap();
        if jitter > max_jitter {
            return Err(LinalgError::JitterExhausted {
                max_jitter: max_jitter.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut s = F::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x - *y;
        s += d * d;
    }
    s
}

#[inline]
pub fn euclidean<F: Scalar>(a: &[F], b: &[F]) -> F {
    sq_dist(a, b).sqrt()
}
