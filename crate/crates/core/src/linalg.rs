//! Shared sparse/dense kernels: a row-major sparse matrix for operator
//! application and row surgery, complex vector helpers, and conversions
//! into the column-major form consumed by the direct solvers.

use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::error::{EfwiError, Result};

pub type C64 = Complex64;

/// Row-major sparse matrix with complex entries. Rows are built once and
/// never mutated; all consumers iterate rows or apply the full operator.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, C64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(EfwiError::DimensionMismatch(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if prev == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                prev = Some((r, c));
            }
            indptr[r + 1] = indices.len();
        }
        // empty rows inherit the running offset
        for r in 0..nrows {
            indptr[r + 1] = indptr[r + 1].max(indptr[r]);
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds row by row from a generator returning each row's entries.
    pub fn from_rows(
        nrows: usize,
        ncols: usize,
        mut row_fn: impl FnMut(usize, &mut Vec<(usize, C64)>),
    ) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, C64)> = Vec::with_capacity(16);
        indptr.push(0);
        for r in 0..nrows {
            buf.clear();
            row_fn(r, &mut buf);
            buf.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in buf.iter() {
                debug_assert!(c < ncols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.nrows)
            .map(|r| self.indptr[r + 1] - self.indptr[r])
            .max()
            .unwrap_or(0)
    }

    /// y = A x
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols, "apply: dimension mismatch");
        let mut y = vec![C64::ZERO; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = C64::ZERO;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        y
    }

    /// Unconjugated transpose.
    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((*c, r, *v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets).expect("valid transpose")
    }

    pub fn scale(&mut self, factor: C64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Maximum absolute row sum (the operator infinity norm).
    pub fn infinity_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Column-major copy for the direct solvers.
    pub fn to_col_major(&self) -> Result<SparseColMat<usize, C64>> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push(Triplet::new(r, *c, *v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| EfwiError::SolverFailure(format!("sparse conversion: {e:?}")))
    }
}

/// y = A x for a column-major sparse matrix.
pub fn spmv(a: &SparseColMat<usize, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(x.len(), a.ncols(), "spmv: dimension mismatch");
    let mut y = vec![C64::ZERO; a.nrows()];
    let sym = a.symbolic();
    let vals = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == C64::ZERO {
            continue;
        }
        let range = sym.col_range(j);
        let rows = &sym.row_idx()[range.clone()];
        for (i, v) in rows.iter().zip(&vals[range]) {
            y[*i] += v * xj;
        }
    }
    y
}

/// Hermitian inner product Σ conj(a_i) b_i.
pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Bilinear (unconjugated) inner product Σ a_i b_i.
pub fn dot_t(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm2_real(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// a - b elementwise.
pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// a + b elementwise.
pub fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}
