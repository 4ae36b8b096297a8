//! Linear solves: plain forward modeling, the data-assimilated
//! (augmented) reconstruction, and adjoint solves for the reduced-space
//! baseline.
//!
//! The augmented system solves the normal equations
//! `[β AᴴA + PᵀP] u = β Aᴴ (b + s) + Pᵀ d`, whose solution minimizes
//! `β ‖A u − (b+s)‖² + ‖P u − d‖²`. One factorization serves every
//! source at a given frequency and iteration.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::SparseColMat;
use faer::Side;

use crate::acquisition::{SamplingOperator, SourceSet};
use crate::error::{EfwiError, Result};
use crate::impedance::ImpedanceMatrix;
use crate::linalg::{add, norm2, spmv, sub, C64};

/// Forward solves must reach this relative residual.
pub const FORWARD_RTOL: f64 = 1e-10;
/// Augmented (normal-equation) solves must reach this relative residual.
pub const AUGMENTED_RTOL: f64 = 1e-8;

/// Complex displacement pair for one source at one frequency, stacked
/// as (u_x; u_z).
#[derive(Debug, Clone)]
pub struct Wavefield {
    pub values: Vec<C64>,
    pub source: usize,
    pub freq_hz: f64,
}

impl Wavefield {
    pub fn ux(&self) -> &[C64] {
        &self.values[..self.values.len() / 2]
    }

    pub fn uz(&self) -> &[C64] {
        &self.values[self.values.len() / 2..]
    }
}

fn col_from_slice(x: &[C64]) -> Mat<C64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

fn slice_from_col(m: &Mat<C64>) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// Sparse LU of an impedance matrix, reusable across right-hand sides.
/// Immutable and shareable once built.
pub struct Factorization {
    lu: Lu<usize, C64>,
    mat: SparseColMat<usize, C64>,
    freq_hz: f64,
    provenance: u64,
}

impl Factorization {
    pub fn new(a: &ImpedanceMatrix) -> Result<Self> {
        Self::from_matrix(a.matrix().clone(), a.freq_hz(), a.provenance())
    }

    /// Factorization of an arbitrary square sparse matrix; `freq_hz` is
    /// only used for error reporting.
    pub fn from_matrix(
        mat: SparseColMat<usize, C64>,
        freq_hz: f64,
        provenance: u64,
    ) -> Result<Self> {
        let lu = mat.sp_lu().map_err(|e| EfwiError::SingularMatrix {
            freq_hz,
            detail: format!("{e:?}"),
        })?;
        Ok(Self {
            lu,
            mat,
            freq_hz,
            provenance,
        })
    }

    pub fn provenance(&self) -> u64 {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    fn residual_ok(&self, x: &[C64], rhs: &[C64], adjoint: bool, rtol: f64) -> bool {
        let ax = if adjoint {
            spmv_adjoint(&self.mat, x)
        } else {
            spmv(&self.mat, x)
        };
        norm2(&sub(&ax, rhs)) <= rtol * norm2(rhs).max(f64::MIN_POSITIVE)
    }

    fn solve_checked(&self, rhs: &[C64], adjoint: bool) -> Result<Vec<C64>> {
        let b = col_from_slice(rhs);
        let mut x = if adjoint {
            slice_from_col(&self.lu.solve_adjoint(&b))
        } else {
            slice_from_col(&self.lu.solve(&b))
        };
        if !self.residual_ok(&x, rhs, adjoint, FORWARD_RTOL) {
            // one step of iterative refinement before giving up
            let ax = if adjoint {
                spmv_adjoint(&self.mat, &x)
            } else {
                spmv(&self.mat, &x)
            };
            let r = col_from_slice(&sub(rhs, &ax));
            let dx = if adjoint {
                slice_from_col(&self.lu.solve_adjoint(&r))
            } else {
                slice_from_col(&self.lu.solve(&r))
            };
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            if !self.residual_ok(&x, rhs, adjoint, FORWARD_RTOL) {
                return Err(EfwiError::SingularMatrix {
                    freq_hz: self.freq_hz,
                    detail: "solve did not reach the required residual".into(),
                });
            }
        }
        Ok(x)
    }

    /// Solves A x = rhs to [`FORWARD_RTOL`].
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        self.solve_checked(rhs, false)
    }

    /// Solves Aᴴ x = rhs to [`FORWARD_RTOL`].
    pub fn solve_adjoint(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        self.solve_checked(rhs, true)
    }
}

/// y = Aᴴ x computed directly from the column-major storage.
pub fn spmv_adjoint(a: &SparseColMat<usize, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(x.len(), a.nrows(), "spmv_adjoint: dimension mismatch");
    let sym = a.symbolic();
    let vals = a.val();
    let mut y = vec![C64::ZERO; a.ncols()];
    for j in 0..a.ncols() {
        let range = sym.col_range(j);
        let mut acc = C64::ZERO;
        for (i, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
            acc += v.conj() * x[*i];
        }
        y[j] = acc;
    }
    y
}

/// A u_j = b_j for every source column, sharing one factorization.
pub fn forward_solve(a: &ImpedanceMatrix, sources: &SourceSet) -> Result<Vec<Wavefield>> {
    let fact = Factorization::new(a)?;
    forward_solve_with(&fact, a, sources)
}

/// Forward solves against an existing factorization of `a`.
pub fn forward_solve_with(
    fact: &Factorization,
    a: &ImpedanceMatrix,
    sources: &SourceSet,
) -> Result<Vec<Wavefield>> {
    if sources.grid() != a.grid() {
        return Err(EfwiError::DimensionMismatch(
            "sources and matrix live on different grids".into(),
        ));
    }
    let freq_hz = a.freq_hz();
    (0..sources.n_sources())
        .map(|j| {
            let b = sources.column(j);
            let values = fact.solve(&b)?;
            Ok(Wavefield {
                values,
                source: j,
                freq_hz,
            })
        })
        .collect()
}

/// Cholesky factorization of the augmented normal matrix
/// `β AᴴA + PᵀP`, with the pieces needed to form right-hand sides.
pub struct AugmentedFactorization {
    llt: Llt<usize, C64>,
    normal: SparseColMat<usize, C64>,
    a_adjoint: SparseColMat<usize, C64>,
    beta: f64,
    freq_hz: f64,
}

impl AugmentedFactorization {
    pub fn new(a: &ImpedanceMatrix, p: &SamplingOperator, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(EfwiError::InvalidConfig("beta must be positive".into()));
        }
        if p.grid() != a.grid() {
            return Err(EfwiError::DimensionMismatch(
                "sampling operator grid does not match the matrix".into(),
            ));
        }
        let dim = a.dim();
        let a_adjoint = a
            .matrix()
            .adjoint()
            .to_col_major()
            .map_err(|e| EfwiError::SolverFailure(format!("adjoint: {e:?}")))?;
        let mut normal = &a_adjoint * a.matrix();
        for v in normal.val_mut() {
            *v *= beta;
        }
        let ptp = {
            let diag = p.ptp_diagonal();
            let triplets: Vec<faer::sparse::Triplet<usize, usize, C64>> = diag
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| faer::sparse::Triplet::new(i, i, C64::new(v, 0.0)))
                .collect();
            SparseColMat::try_new_from_triplets(dim, dim, &triplets)
                .map_err(|e| EfwiError::SolverFailure(format!("PᵀP assembly: {e:?}")))?
        };
        let normal = &normal + &ptp;
        let llt = normal
            .sp_cholesky(Side::Lower)
            .map_err(|e| EfwiError::SingularMatrix {
                freq_hz: a.freq_hz(),
                detail: format!("augmented normal matrix: {e:?}"),
            })?;
        Ok(Self {
            llt,
            normal,
            a_adjoint,
            beta,
            freq_hz: a.freq_hz(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Reconstructs one wavefield from the summed source term `b + s`
    /// and observed data `d`.
    pub fn solve(&self, b_plus_s: &[C64], d: &[C64], p: &SamplingOperator) -> Result<Vec<C64>> {
        let mut rhs = spmv(&self.a_adjoint, b_plus_s);
        for v in &mut rhs {
            *v *= self.beta;
        }
        let ptd = p.apply_transpose(d);
        let rhs = add(&rhs, &ptd);

        let mut u = slice_from_col(&self.llt.solve(&col_from_slice(&rhs)));
        let ok = |u: &[C64]| {
            let r = sub(&spmv(&self.normal, u), &rhs);
            norm2(&r) <= AUGMENTED_RTOL * norm2(&rhs).max(f64::MIN_POSITIVE)
        };
        if !ok(&u) {
            let r = sub(&rhs, &spmv(&self.normal, &u));
            let du = slice_from_col(&self.llt.solve(&col_from_slice(&r)));
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui += di;
            }
            if !ok(&u) {
                return Err(EfwiError::SolverFailure(format!(
                    "augmented solve at {} Hz did not reach {AUGMENTED_RTOL:.0e}",
                    self.freq_hz
                )));
            }
        }
        Ok(u)
    }
}

/// One-shot augmented reconstruction. `b_aug` must already hold b + s.
pub fn augmented_solve(
    a: &ImpedanceMatrix,
    p: &SamplingOperator,
    b_aug: &[C64],
    d: &[C64],
    beta: f64,
) -> Result<Wavefield> {
    let fact = AugmentedFactorization::new(a, p, beta)?;
    let values = fact.solve(b_aug, d, p)?;
    Ok(Wavefield {
        values,
        source: 0,
        freq_hz: a.freq_hz(),
    })
}

/// Solves Aᴴ v = rhs, reusing the forward factorization.
pub fn adjoint_solve(fact: &Factorization, rhs: &[C64]) -> Result<Vec<C64>> {
    fact.solve_adjoint(rhs)
}
