//! Dense complex linear algebra used as an independent oracle for the
//! sparse solver paths. Deliberately hand-rolled (partial-pivot LU with
//! no blocking) so it shares no code with the production solves.

use num_complex::Complex64;

use crate::error::{EfwiError, Result};
use crate::linalg::C64;

/// Row-major dense complex matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![C64::ZERO; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_sparse(a: &faer::sparse::SparseColMat<usize, C64>) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        let sym = a.symbolic();
        let vals = a.val();
        for j in 0..a.ncols() {
            let range = sym.col_range(j);
            for (i, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
                m[(*i, j)] += *v;
            }
        }
        m
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                (0..self.n_cols)
                    .map(|j| self[(i, j)] * x[j])
                    .sum::<C64>()
            })
            .collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Self {
        assert_eq!(self.n_cols, rhs.n_rows);
        let mut out = Self::zeros(self.n_rows, rhs.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let aik = self[(i, k)];
                if aik == C64::ZERO {
                    continue;
                }
                for j in 0..rhs.n_cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Solves a square dense system by LU with partial pivoting.
///
/// Intended for oracle checks only; refuses systems above 5000 unknowns.
pub fn dense_oracle_solve(a: &DenseMatrix, rhs: &[C64]) -> Result<Vec<C64>> {
    let n = a.n_rows;
    if a.n_cols != n || rhs.len() != n {
        return Err(EfwiError::DimensionMismatch(format!(
            "dense solve: {}x{} matrix with rhs of length {}",
            a.n_rows,
            a.n_cols,
            rhs.len()
        )));
    }
    if n > 5000 {
        return Err(EfwiError::OracleTooLarge(n));
    }

    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let at = |data: &[Complex64], i: usize, j: usize| data[i * n + j];

    for k in 0..n {
        // pivot selection
        let (mut pivot_row, mut pivot_mag) = (k, at(&lu, k, k).norm());
        for i in (k + 1)..n {
            let mag = at(&lu, i, k).norm();
            if mag > pivot_mag {
                pivot_row = i;
                pivot_mag = mag;
            }
        }
        if pivot_mag == 0.0 {
            return Err(EfwiError::SingularMatrix {
                freq_hz: f64::NAN,
                detail: format!("dense oracle: zero pivot at column {k}"),
            });
        }
        if pivot_row != k {
            for j in 0..n {
                lu.swap(k * n + j, pivot_row * n + j);
            }
            perm.swap(k, pivot_row);
        }
        let pivot = at(&lu, k, k);
        for i in (k + 1)..n {
            let factor = at(&lu, i, k) / pivot;
            lu[i * n + k] = factor;
            if factor != C64::ZERO {
                for j in (k + 1)..n {
                    let v = at(&lu, k, j);
                    lu[i * n + j] -= factor * v;
                }
            }
        }
    }

    // forward substitution on the permuted rhs
    let mut x: Vec<C64> = perm.iter().map(|&p| rhs[p]).collect();
    for i in 1..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= at(&lu, i, j) * x[j];
        }
        x[i] = acc;
    }
    // back substitution
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= at(&lu, i, j) * x[j];
        }
        x[i] = acc / at(&lu, i, i);
    }
    Ok(x)
}

/// Dense least-squares solve min ‖A x − b‖₂ via normal equations,
/// used as an oracle for the blocky model-update solver.
pub fn dense_least_squares(a: &DenseMatrix, b: &[C64]) -> Result<Vec<C64>> {
    let ah = a.adjoint();
    let normal = ah.matmul(a);
    let rhs = ah.apply(b);
    dense_oracle_solve(&normal, &rhs)
}
