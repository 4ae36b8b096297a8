//! Assembly of the sparse complex impedance matrix.
//!
//! The operator couples horizontal and vertical displacements through
//! 2×2 blocks of scaled difference operators:
//!
//! ```text
//! | ω² diag(ρ) + diag(ϖ) ∂xx + diag(μ) ∂zz        diag(λ+μ) ∂xz |
//! | diag(λ+μ) ∂xz         ω² diag(ρ) + diag(ϖ) ∂zz + diag(μ) ∂xx |
//! ```
//!
//! with ϖ = λ + 2μ. Coefficients multiply from the left (non-conservative
//! form). PML stretching arrives pre-folded in the [`OperatorBundle`];
//! when the top edge is a free surface, both top-node rows are replaced
//! by the stress-free conditions σ_xz = 0 and σ_zz = 0, discretized with
//! the bundle's one-sided first derivatives and scaled by 1/dx so they
//! sit at the magnitude of the rows they replace.

use std::hash::{Hash, Hasher};

use faer::sparse::{SparseColMat, Triplet};

use crate::boundary::BoundarySpec;
use crate::error::{EfwiError, Result};
use crate::grid::GridGeometry;
use crate::linalg::{spmv, C64};
use crate::model::ElasticModel;
use crate::stencil::OperatorBundle;

/// Sparse complex wave operator at one frequency.
#[derive(Debug, Clone)]
pub struct ImpedanceMatrix {
    mat: SparseColMat<usize, C64>,
    omega: f64,
    grid: GridGeometry,
    bc: BoundarySpec,
    provenance: u64,
}

impl ImpedanceMatrix {
    pub fn matrix(&self) -> &SparseColMat<usize, C64> {
        &self.mat
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn freq_hz(&self) -> f64 {
        self.omega / (2.0 * std::f64::consts::PI)
    }

    pub fn grid(&self) -> GridGeometry {
        self.grid
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.bc
    }

    /// Hash of the model values, frequency, and boundary spec that
    /// produced this matrix. Provenance only, not cryptographic.
    pub fn provenance(&self) -> u64 {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// y = A x.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        spmv(&self.mat, x)
    }

    /// Maximum absolute row sum.
    pub fn infinity_norm(&self) -> f64 {
        let mut row_sums = vec![0.0f64; self.mat.nrows()];
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        for j in 0..self.mat.ncols() {
            let range = sym.col_range(j);
            for (i, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
                row_sums[*i] += v.norm();
            }
        }
        row_sums.into_iter().fold(0.0, f64::max)
    }

    /// Copy with every entry multiplied by `factor`. Used for equation
    /// scaling in the inversion driver; the physics is unchanged when
    /// the right-hand side is scaled identically.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut mat = self.mat.clone();
        for v in mat.val_mut() {
            *v *= factor;
        }
        Self {
            mat,
            omega: self.omega,
            grid: self.grid,
            bc: self.bc,
            provenance: self.provenance,
        }
    }
}

fn hash_f64s<H: Hasher>(state: &mut H, values: &[f64]) {
    for v in values {
        v.to_bits().hash(state);
    }
}

fn provenance_hash(model: &ElasticModel, bundle: &OperatorBundle) -> u64 {
    let mut h = std::hash::DefaultHasher::new();
    hash_f64s(&mut h, model.field1().values());
    hash_f64s(&mut h, model.field2().values());
    hash_f64s(&mut h, model.rho().values());
    bundle.omega().to_bits().hash(&mut h);
    bundle.grid().nz.hash(&mut h);
    bundle.grid().nx.hash(&mut h);
    format!("{:?}", bundle.boundary()).hash(&mut h);
    h.finish()
}

/// Assembles A(m) at the bundle's frequency and boundary treatment.
pub fn assemble_impedance(
    model: &ElasticModel,
    bundle: &OperatorBundle,
) -> Result<ImpedanceMatrix> {
    let grid = bundle.grid();
    if model.grid() != grid {
        return Err(EfwiError::DimensionMismatch(
            "model and operators live on different grids".into(),
        ));
    }
    let n = grid.n();
    let omega = bundle.omega();
    if !(omega > 0.0) {
        return Err(EfwiError::InvalidConfig("omega must be positive".into()));
    }
    let (lambda, mu) = model.lame_values()?;
    let rho = model.rho().values();
    let omega2 = omega * omega;
    let fs_top = bundle.free_surface_top();
    let fs_scale = bundle.free_surface_row_scale();

    // ~12 entries per row across both blocks
    let mut triplets: Vec<Triplet<usize, usize, C64>> = Vec::with_capacity(24 * n);
    fn push_row(
        triplets: &mut Vec<Triplet<usize, usize, C64>>,
        row: usize,
        col_offset: usize,
        cols: &[usize],
        vals: &[C64],
        coeff: C64,
    ) {
        for (c, v) in cols.iter().zip(vals) {
            triplets.push(Triplet::new(row, col_offset + c, coeff * v));
        }
    }

    for i in 0..n {
        let (iz, _ix) = grid.iz_ix(i);
        let varpi = C64::new(lambda[i] + 2.0 * mu[i], 0.0);
        let mu_i = C64::new(mu[i], 0.0);
        let lam_mu = C64::new(lambda[i] + mu[i], 0.0);
        let lam_i = C64::new(lambda[i], 0.0);
        let mass = C64::new(omega2 * rho[i], 0.0);

        if fs_top && iz == 0 {
            // σ_xz = μ (∂z u_x + ∂x u_z) = 0
            let s = C64::new(fs_scale, 0.0);
            let (c, v) = bundle.dz1.row(i);
            push_row(&mut triplets, i, 0, c, v, mu_i * s);
            let (c, v) = bundle.dx1.row(i);
            push_row(&mut triplets, i, n, c, v, mu_i * s);
            // σ_zz = λ ∂x u_x + ϖ ∂z u_z = 0
            let (c, v) = bundle.dx1.row(i);
            push_row(&mut triplets, n + i, 0, c, v, lam_i * s);
            let (c, v) = bundle.dz1.row(i);
            push_row(&mut triplets, n + i, n, c, v, varpi * s);
            continue;
        }

        // x-equation row
        triplets.push(Triplet::new(i, i, mass));
        let (c, v) = bundle.dxx.row(i);
        push_row(&mut triplets, i, 0, c, v, varpi);
        let (c, v) = bundle.dzz.row(i);
        push_row(&mut triplets, i, 0, c, v, mu_i);
        let (c, v) = bundle.dxz.row(i);
        push_row(&mut triplets, i, n, c, v, lam_mu);

        // z-equation row
        triplets.push(Triplet::new(n + i, n + i, mass));
        let (c, v) = bundle.dzz.row(i);
        push_row(&mut triplets, n + i, n, c, v, varpi);
        let (c, v) = bundle.dxx.row(i);
        push_row(&mut triplets, n + i, n, c, v, mu_i);
        let (c, v) = bundle.dxz.row(i);
        push_row(&mut triplets, n + i, 0, c, v, lam_mu);
    }

    let mat = SparseColMat::try_new_from_triplets(2 * n, 2 * n, &triplets)
        .map_err(|e| EfwiError::SolverFailure(format!("impedance assembly: {e:?}")))?;
    Ok(ImpedanceMatrix {
        mat,
        omega,
        grid,
        bc: bundle.boundary(),
        provenance: provenance_hash(model, bundle),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::field::{ParameterField, Unit};
    use crate::model::Parameterization;
    use crate::stencil::build_difference_operators;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn homogeneous(grid: GridGeometry, vp: f64, vs: f64, rho: f64) -> ElasticModel {
        ElasticModel::homogeneous(grid, vp, vs, rho).unwrap()
    }

    fn no_bc() -> BoundarySpec {
        BoundarySpec::absorbing(0, 0.0)
    }

    #[test]
    fn triplet_duplicates_are_summed_by_construction() {
        // ω²ρ, ϖ Dxx and μ Dzz all hit the diagonal; verify against a
        // directly computed row application.
        let g = GridGeometry::new(7, 7, 10.0, 10.0).unwrap();
        let m = homogeneous(g, 3000.0, 1700.0, 2000.0);
        let bundle = OperatorBundle::new(g, no_bc(), 2.0 * std::f64::consts::PI * 5.0).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();

        let (lambda, mu) = m.lame_values().unwrap();
        let rho = m.rho().values();
        let omega2 = bundle.omega() * bundle.omega();
        let n = g.n();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<C64> = (0..2 * n)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let au = a.apply(&u);

        let ux = &u[..n];
        let uz = &u[n..];
        let dxx_ux = bundle.dxx.apply(ux);
        let dzz_ux = bundle.dzz.apply(ux);
        let dxz_uz = bundle.dxz.apply(uz);
        for i in 0..n {
            let expect = C64::new(omega2 * rho[i], 0.0) * ux[i]
                + C64::new(lambda[i] + 2.0 * mu[i], 0.0) * dxx_ux[i]
                + C64::new(mu[i], 0.0) * dzz_ux[i]
                + C64::new(lambda[i] + mu[i], 0.0) * dxz_uz[i];
            assert!((au[i] - expect).norm() <= 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn plane_wave_dispersion_residual_is_second_order() {
        // Interior x-rows applied to e^{ikx} with k = ω/V_P leave a
        // residual ≈ ϖ k⁴ h²/12; halving h divides it by ~4.
        let vp = 3000.0;
        let vs = 1700.0;
        let rho = 2000.0;
        let omega = 2.0 * std::f64::consts::PI * 5.0;
        let k = omega / vp;
        let mut residuals = Vec::new();
        for &h in &[25.0f64, 12.5] {
            let nx = (600.0 / h) as usize + 1;
            let g = GridGeometry::new(9, nx, h, h).unwrap();
            let m = homogeneous(g, vp, vs, rho);
            let bundle = OperatorBundle::new(g, no_bc(), omega).unwrap();
            let a = assemble_impedance(&m, &bundle).unwrap();
            let n = g.n();
            let mut u = vec![C64::ZERO; 2 * n];
            for ix in 0..g.nx {
                for iz in 0..g.nz {
                    let x = ix as f64 * h;
                    u[g.idx(iz, ix)] = C64::new(0.0, k * x).exp();
                }
            }
            let au = a.apply(&u);
            let mut worst = 0.0f64;
            for ix in 2..g.nx - 2 {
                for iz in 2..g.nz - 2 {
                    worst = worst.max(au[g.idx(iz, ix)].norm());
                }
            }
            residuals.push((h, worst));
        }
        let varpi = rho * vp * vp;
        for &(h, r) in &residuals {
            let predicted = varpi * k.powi(4) * h * h / 12.0;
            assert!(
                (r - predicted).abs() <= 0.2 * predicted,
                "h={h}: residual {r}, predicted {predicted}"
            );
        }
        let ratio = residuals[0].1 / residuals[1].1;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn acoustic_degeneration_mu_zero() {
        // μ = 0, constant λ: off-diagonal blocks reduce to diag(λ) ∂xz and
        // the x-equation on (u_x, 0) to a scalar Helmholtz-like operator.
        let g = GridGeometry::new(8, 8, 15.0, 15.0).unwrap();
        let lambda0 = 4.0e9;
        let rho0 = 1000.0;
        let lam = ParameterField::constant(g, Unit::Pascal, lambda0).unwrap();
        let mu = ParameterField::constant(g, Unit::Pascal, 0.0).unwrap();
        let rho = ParameterField::constant(g, Unit::KilogramsPerCubicMeter, rho0).unwrap();
        let m = ElasticModel::new(Parameterization::Lame, lam, mu, rho).unwrap();
        let omega = 2.0 * std::f64::consts::PI * 4.0;
        let bundle = OperatorBundle::new(g, no_bc(), omega).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();

        let n = g.n();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let field: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();

        // x-equation on (u_x, 0): ω²ρ u + λ ∂xx u
        let mut u = vec![C64::ZERO; 2 * n];
        u[..n].copy_from_slice(&field);
        let au = a.apply(&u);
        let dxx = bundle.dxx.apply(&field);
        for i in 0..n {
            let expect = C64::new(omega * omega * rho0, 0.0) * field[i]
                + C64::new(lambda0, 0.0) * dxx[i];
            assert!((au[i] - expect).norm() <= 1e-10 * expect.norm().max(1.0));
        }

        // off-diagonal action on (0, u_z): diag(λ) ∂xz u_z
        let mut u = vec![C64::ZERO; 2 * n];
        u[n..].copy_from_slice(&field);
        let au = a.apply(&u);
        let dxz = bundle.dxz.apply(&field);
        for i in 0..n {
            let expect = C64::new(lambda0, 0.0) * dxz[i];
            assert!((au[i] - expect).norm() <= 1e-10 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn assembly_invariant_under_parameterization_conversion() {
        let g = GridGeometry::new(10, 10, 20.0, 20.0).unwrap();
        let vp = ParameterField::from_fn(g, Unit::MetersPerSecond, |iz, ix| {
            2800.0 + 30.0 * iz as f64 + 10.0 * ix as f64
        })
        .unwrap();
        let vs = ParameterField::from_fn(g, Unit::MetersPerSecond, |iz, ix| {
            1500.0 + 12.0 * iz as f64 + 4.0 * ix as f64
        })
        .unwrap();
        let rho = ParameterField::constant(g, Unit::KilogramsPerCubicMeter, 2000.0).unwrap();
        let m = ElasticModel::new(Parameterization::Velocity, vp, vs, rho).unwrap();
        let omega = 2.0 * std::f64::consts::PI * 6.0;
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(2, 40.0), omega).unwrap();

        let a0 = assemble_impedance(&m, &bundle).unwrap();
        let a1 = assemble_impedance(&m.convert(Parameterization::Lame).unwrap(), &bundle).unwrap();
        let a2 = assemble_impedance(
            &m.convert(Parameterization::SquaredVelocity).unwrap(),
            &bundle,
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<C64> = (0..2 * g.n())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let y0 = a0.apply(&u);
        for other in [&a1, &a2] {
            let y = other.apply(&u);
            let num: f64 = y0
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let den: f64 = y0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(num <= 1e-12 * den, "relative deviation {}", num / den);
        }
    }

    #[test]
    fn bilinear_adjoint_identity() {
        // <A u, v> = <u, Aᵀ v> with the unconjugated pairing, PML on.
        let g = GridGeometry::new(9, 9, 12.0, 12.0).unwrap();
        let m = homogeneous(g, 3000.0, 1600.0, 2200.0);
        let omega = 2.0 * std::f64::consts::PI * 5.0;
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(3, 60.0), omega).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();

        let at = a
            .matrix()
            .transpose()
            .to_col_major()
            .expect("transpose conversion");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 2 * g.n();
        for _ in 0..4 {
            let u: Vec<C64> = (0..dim)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let v: Vec<C64> = (0..dim)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let lhs = crate::linalg::dot_t(&a.apply(&u), &v);
            let rhs = crate::linalg::dot_t(&u, &spmv(&at, &v));
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn interior_pattern_is_structurally_symmetric_without_pml() {
        let g = GridGeometry::new(8, 8, 10.0, 10.0).unwrap();
        let m = homogeneous(g, 3000.0, 1500.0, 2000.0);
        let bundle = OperatorBundle::new(g, no_bc(), 30.0).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();
        let n = g.n();
        let interior: Vec<bool> = (0..n)
            .map(|i| {
                let (iz, ix) = g.iz_ix(i);
                iz > 0 && iz + 1 < g.nz && ix > 0 && ix + 1 < g.nx
            })
            .collect();
        let sym = a.matrix().symbolic();
        let mut pattern = std::collections::BTreeSet::new();
        for j in 0..2 * n {
            for &i in &sym.row_idx()[sym.col_range(j)] {
                pattern.insert((i, j));
            }
        }
        for &(i, j) in &pattern {
            if interior[i % n] && interior[j % n] {
                assert!(pattern.contains(&(j, i)), "missing transpose of ({i},{j})");
            }
        }
    }

    #[test]
    fn free_surface_rows_are_traction_rows() {
        let g = GridGeometry::new(8, 8, 10.0, 10.0).unwrap();
        let m = homogeneous(g, 3000.0, 1500.0, 2000.0);
        let omega = 2.0 * std::f64::consts::PI * 5.0;
        let bundle = OperatorBundle::new(g, BoundarySpec::free_surface_top(0, 0.0), omega).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();
        let n = g.n();

        // constant displacement: zero stress, so free-surface rows vanish
        // (up to rounding relative to the row magnitude ~ ϖ/dx)
        let (lambda0, mu0) = m.lame_values().unwrap();
        let row_scale = (lambda0[0] + 2.0 * mu0[0]) / g.dx;
        let u = vec![C64::new(1.0, 0.0); 2 * n];
        let au = a.apply(&u);
        for ix in 0..g.nx {
            let i = g.idx(0, ix);
            assert!(au[i].norm() < 1e-12 * row_scale);
            assert!(au[n + i].norm() < 1e-12 * row_scale);
        }

        // uniform vertical strain u_z = z: σ_zz rows report ϖ ∂z u_z = ϖ,
        // scaled by 1/dx
        let mut u = vec![C64::ZERO; 2 * n];
        for ix in 0..g.nx {
            for iz in 0..g.nz {
                u[n + g.idx(iz, ix)] = C64::new(iz as f64 * g.dz, 0.0);
            }
        }
        let au = a.apply(&u);
        let (lambda, mu) = m.lame_values().unwrap();
        let varpi = lambda[0] + 2.0 * mu[0];
        for ix in 1..g.nx - 1 {
            let i = g.idx(0, ix);
            let expect = varpi / g.dx;
            assert!(
                (au[n + i].re - expect).abs() <= 1e-9 * expect,
                "row {}: {} vs {}",
                i,
                au[n + i].re,
                expect
            );
            assert!(au[i].norm() <= 1e-9 * expect); // σ_xz of this field is 0
        }
    }

    #[test]
    fn rejects_mismatched_grids_and_bad_omega() {
        let g1 = GridGeometry::new(8, 8, 10.0, 10.0).unwrap();
        let g2 = GridGeometry::new(9, 8, 10.0, 10.0).unwrap();
        let m = homogeneous(g2, 3000.0, 1500.0, 2000.0);
        let bundle = OperatorBundle::new(g1, no_bc(), 10.0).unwrap();
        assert!(assemble_impedance(&m, &bundle).is_err());
    }

    #[test]
    fn stencil_footprint_bounded_per_block() {
        let g = GridGeometry::new(12, 12, 10.0, 10.0).unwrap();
        let m = homogeneous(g, 3000.0, 1500.0, 2000.0);
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(3, 50.0), 31.0).unwrap();
        let a = assemble_impedance(&m, &bundle).unwrap();
        let n = g.n();
        let mut per_block_counts = vec![[0usize; 2]; 2 * n];
        let sym = a.matrix().symbolic();
        for j in 0..2 * n {
            for &i in &sym.row_idx()[sym.col_range(j)] {
                per_block_counts[i][j / n] += 1;
            }
        }
        for counts in per_block_counts {
            assert!(counts[0] <= 9 && counts[1] <= 9, "{counts:?}");
        }
    }

    #[test]
    fn difference_operators_build_standalone() {
        // the raw operator artifact stays available alongside the bundle
        let g = GridGeometry::new(6, 6, 10.0, 10.0).unwrap();
        let ops = build_difference_operators(g);
        assert_eq!(ops.dxx.nrows(), g.n());
        assert_eq!(ops.grid(), g);
    }
}
