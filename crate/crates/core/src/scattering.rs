//! Linearization of the wave-equation residual in the model parameters.
//!
//! For fixed wavefield u, the residual A(m) u − (b + s) is linear in the
//! model vector m for the Lamé and squared-velocity parameterizations:
//! `A(m) u − b − s = L(u) m − y(u)`, with L a 2×2 block matrix of
//! diagonals and `y = (b + s) − ω² ρ ∘ u`. Free-surface rows carry their
//! own coefficient pattern (traction instead of momentum balance) and
//! are overridden here with the same one-sided derivatives used in
//! assembly, so the identity holds row for row.

use crate::error::{EfwiError, Result};
use crate::linalg::C64;
use crate::model::{ElasticModel, Parameterization};
use crate::stencil::OperatorBundle;
use crate::wavefield::Wavefield;

/// Diagonal-block linearization for one (source, frequency) pair.
#[derive(Debug, Clone)]
pub struct ScatteringSystem {
    pub l11: Vec<C64>,
    pub l12: Vec<C64>,
    pub l21: Vec<C64>,
    pub l22: Vec<C64>,
    pub y_x: Vec<C64>,
    pub y_z: Vec<C64>,
    parameterization: Parameterization,
}

impl ScatteringSystem {
    /// Assembles a system directly from its diagonal blocks. Used by
    /// tests and synthetic benchmarks; the inversion path goes through
    /// [`build_scattering_system`].
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        l11: Vec<C64>,
        l12: Vec<C64>,
        l21: Vec<C64>,
        l22: Vec<C64>,
        y_x: Vec<C64>,
        y_z: Vec<C64>,
        parameterization: Parameterization,
    ) -> Self {
        Self {
            l11,
            l12,
            l21,
            l22,
            y_x,
            y_z,
            parameterization,
        }
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn n(&self) -> usize {
        self.l11.len()
    }

    /// L m − y for a stacked model vector (m1; m2); reproduces
    /// A(m) u − b − s.
    pub fn residual(&self, m1: &[f64], m2: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let n = self.n();
        let mut rx = vec![C64::ZERO; n];
        let mut rz = vec![C64::ZERO; n];
        for i in 0..n {
            rx[i] = self.l11[i] * m1[i] + self.l12[i] * m2[i] - self.y_x[i];
            rz[i] = self.l21[i] * m1[i] + self.l22[i] * m2[i] - self.y_z[i];
        }
        (rx, rz)
    }
}

/// Builds the linearized system for one wavefield. `b_plus_s` is the
/// (already summed, already scaled) source term; `scale` is the equation
/// scaling applied to A and b by the caller (1.0 for the raw operator).
pub fn build_scattering_system(
    u: &Wavefield,
    b_plus_s: &[C64],
    model_context: &ElasticModel,
    parameterization: Parameterization,
    bundle: &OperatorBundle,
    scale: f64,
) -> Result<ScatteringSystem> {
    if parameterization == Parameterization::Velocity {
        return Err(EfwiError::UnsupportedParameterization(
            "velocity parameterization updates go through the Gauss-Newton path".into(),
        ));
    }
    let grid = bundle.grid();
    let n = grid.n();
    if u.values.len() != 2 * n || b_plus_s.len() != 2 * n {
        return Err(EfwiError::DimensionMismatch(
            "wavefield / source length does not match the grid".into(),
        ));
    }
    if model_context.grid() != grid {
        return Err(EfwiError::DimensionMismatch(
            "model context grid does not match the operators".into(),
        ));
    }
    if !u.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(EfwiError::NonFinite("wavefield".into()));
    }

    let ux = u.ux();
    let uz = u.uz();
    let dxx_ux = bundle.dxx.apply(ux);
    let dzz_ux = bundle.dzz.apply(ux);
    let dxz_ux = bundle.dxz.apply(ux);
    let dxx_uz = bundle.dxx.apply(uz);
    let dzz_uz = bundle.dzz.apply(uz);
    let dxz_uz = bundle.dxz.apply(uz);

    let rho = model_context.rho().values();
    let omega2 = bundle.omega() * bundle.omega();
    let s = C64::new(scale, 0.0);

    let mut l11 = vec![C64::ZERO; n];
    let mut l12 = vec![C64::ZERO; n];
    let mut l21 = vec![C64::ZERO; n];
    let mut l22 = vec![C64::ZERO; n];
    let mut y_x = vec![C64::ZERO; n];
    let mut y_z = vec![C64::ZERO; n];

    match parameterization {
        Parameterization::Lame => {
            for i in 0..n {
                l11[i] = s * (dxx_ux[i] + dxz_uz[i]);
                l12[i] = s * (2.0 * dxx_ux[i] + dzz_ux[i] + dxz_uz[i]);
                l21[i] = s * (dzz_uz[i] + dxz_ux[i]);
                l22[i] = s * (2.0 * dzz_uz[i] + dxx_uz[i] + dxz_ux[i]);
            }
        }
        Parameterization::SquaredVelocity => {
            for i in 0..n {
                let r = rho[i];
                l11[i] = s * r * (dxx_ux[i] + dxz_uz[i]);
                l12[i] = s * r * (dzz_ux[i] - dxz_uz[i]);
                l21[i] = s * r * (dzz_uz[i] + dxz_ux[i]);
                l22[i] = s * r * (dxx_uz[i] - dxz_ux[i]);
            }
        }
        Parameterization::Velocity => unreachable!(),
    }
    for i in 0..n {
        y_x[i] = b_plus_s[i] - s * omega2 * rho[i] * ux[i];
        y_z[i] = b_plus_s[n + i] - s * omega2 * rho[i] * uz[i];
    }

    if bundle.free_surface_top() {
        let fs = C64::new(scale * bundle.free_surface_row_scale(), 0.0);
        let dz1_ux = bundle.dz1.apply(ux);
        let dx1_ux = bundle.dx1.apply(ux);
        let dz1_uz = bundle.dz1.apply(uz);
        let dx1_uz = bundle.dx1.apply(uz);
        for ix in 0..grid.nx {
            let i = grid.idx(0, ix);
            match parameterization {
                Parameterization::Lame => {
                    // σ_xz = μ (∂z u_x + ∂x u_z)
                    l11[i] = C64::ZERO;
                    l12[i] = fs * (dz1_ux[i] + dx1_uz[i]);
                    // σ_zz = λ (∂x u_x + ∂z u_z) + 2 μ ∂z u_z
                    l21[i] = fs * (dx1_ux[i] + dz1_uz[i]);
                    l22[i] = fs * 2.0 * dz1_uz[i];
                }
                Parameterization::SquaredVelocity => {
                    let r = rho[i];
                    l11[i] = C64::ZERO;
                    l12[i] = fs * r * (dz1_ux[i] + dx1_uz[i]);
                    // σ_zz = ρ m_p (∂x u_x + ∂z u_z) − 2 ρ m_s ∂x u_x
                    l21[i] = fs * r * (dx1_ux[i] + dz1_uz[i]);
                    l22[i] = fs * r * -2.0 * dx1_ux[i];
                }
                Parameterization::Velocity => unreachable!(),
            }
            // traction rows carry no inertia term
            y_x[i] = b_plus_s[i];
            y_z[i] = b_plus_s[n + i];
        }
    }

    Ok(ScatteringSystem {
        l11,
        l12,
        l21,
        l22,
        y_x,
        y_z,
        parameterization,
    })
}

/// Accumulated normal equations Σ LᴴL and Σ Lᴴy over sources and
/// frequencies. Memory stays O(n): the per-cell 2×2 Hermitian blocks are
/// three n-vectors (h12 carries the conjugate pair) plus the gradient.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    pub h11: Vec<f64>,
    pub h12: Vec<C64>,
    pub h22: Vec<f64>,
    pub g1: Vec<C64>,
    pub g2: Vec<C64>,
    pub y_norm_sq: f64,
    parameterization: Parameterization,
    count: usize,
}

impl NormalSystem {
    pub fn zeros(n: usize, parameterization: Parameterization) -> Self {
        Self {
            h11: vec![0.0; n],
            h12: vec![C64::ZERO; n],
            h22: vec![0.0; n],
            g1: vec![C64::ZERO; n],
            g2: vec![C64::ZERO; n],
            y_norm_sq: 0.0,
            parameterization,
            count: 0,
        }
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn n(&self) -> usize {
        self.h11.len()
    }

    /// Number of (source, frequency) systems accumulated.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate(&mut self, sys: &ScatteringSystem) -> Result<()> {
        if sys.n() != self.n() {
            return Err(EfwiError::DimensionMismatch(
                "scattering system size mismatch".into(),
            ));
        }
        if sys.parameterization() != self.parameterization {
            return Err(EfwiError::UnsupportedParameterization(format!(
                "cannot accumulate {} into {}",
                sys.parameterization(),
                self.parameterization
            )));
        }
        for i in 0..self.n() {
            let (l11, l12, l21, l22) = (sys.l11[i], sys.l12[i], sys.l21[i], sys.l22[i]);
            self.h11[i] += l11.norm_sqr() + l21.norm_sqr();
            self.h12[i] += l11.conj() * l12 + l21.conj() * l22;
            self.h22[i] += l12.norm_sqr() + l22.norm_sqr();
            self.g1[i] += l11.conj() * sys.y_x[i] + l21.conj() * sys.y_z[i];
            self.g2[i] += l12.conj() * sys.y_x[i] + l22.conj() * sys.y_z[i];
            self.y_norm_sq += sys.y_x[i].norm_sqr() + sys.y_z[i].norm_sqr();
        }
        self.count += 1;
        Ok(())
    }

    /// trace(LᴴL) / (2n) — the default penalty scale for the
    /// constrained model step.
    pub fn trace_scale(&self) -> f64 {
        let n = self.n();
        (self.h11.iter().sum::<f64>() + self.h22.iter().sum::<f64>()) / (2 * n) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{ForceComponent, SourceSet};
    use crate::boundary::BoundarySpec;
    use crate::field::{ParameterField, Unit};
    use crate::grid::GridGeometry;
    use crate::impedance::assemble_impedance;
    use crate::linalg::{norm2, sub};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    fn random_model(
        g: GridGeometry,
        parameterization: Parameterization,
        rng: &mut ChaCha8Rng,
    ) -> ElasticModel {
        let vp = ParameterField::from_fn(g, Unit::MetersPerSecond, |_, _| {
            2500.0 + 1000.0 * rng.random::<f64>()
        })
        .unwrap();
        let vs = ParameterField::from_fn(g, Unit::MetersPerSecond, |_, _| {
            1200.0 + 500.0 * rng.random::<f64>()
        })
        .unwrap();
        let rho = ParameterField::constant(g, Unit::KilogramsPerCubicMeter, 2000.0).unwrap();
        ElasticModel::new(Parameterization::Velocity, vp, vs, rho)
            .unwrap()
            .convert(parameterization)
            .unwrap()
    }

    fn check_identity(bc: BoundarySpec, parameterization: Parameterization, seed: u64) {
        let g = GridGeometry::new(8, 8, 20.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bundle = OperatorBundle::new(g, bc, TWO_PI * 5.0).unwrap();
        let n = g.n();

        for _ in 0..5 {
            let model = random_model(g, parameterization, &mut rng);
            let a = assemble_impedance(&model, &bundle).unwrap();
            let u = Wavefield {
                values: (0..2 * n)
                    .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect(),
                source: 0,
                freq_hz: bundle.omega() / TWO_PI,
            };
            let b_plus_s: Vec<C64> = (0..2 * n)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();

            let sys =
                build_scattering_system(&u, &b_plus_s, &model, parameterization, &bundle, 1.0)
                    .unwrap();
            let (rx, rz) = sys.residual(model.field1().values(), model.field2().values());
            let mut lhs = rx;
            lhs.extend(rz);

            let au = a.apply(&u.values);
            let rhs = sub(&au, &b_plus_s);
            let scale = norm2(&au);
            let dev = norm2(&sub(&lhs, &rhs));
            assert!(
                dev <= 1e-10 * scale,
                "identity violated: {dev:.3e} vs scale {scale:.3e} ({parameterization})"
            );
        }
    }

    #[test]
    fn residual_identity_lame_absorbing() {
        check_identity(BoundarySpec::absorbing(2, 40.0), Parameterization::Lame, 21);
    }

    #[test]
    fn residual_identity_squared_velocity_absorbing() {
        check_identity(
            BoundarySpec::absorbing(2, 40.0),
            Parameterization::SquaredVelocity,
            22,
        );
    }

    #[test]
    fn residual_identity_with_free_surface() {
        check_identity(
            BoundarySpec::free_surface_top(2, 40.0),
            Parameterization::Lame,
            23,
        );
        check_identity(
            BoundarySpec::free_surface_top(2, 40.0),
            Parameterization::SquaredVelocity,
            24,
        );
    }

    #[test]
    fn zero_wavefield_gives_zero_blocks() {
        let g = GridGeometry::new(6, 6, 10.0, 10.0).unwrap();
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(0, 0.0), TWO_PI * 5.0).unwrap();
        let model = ElasticModel::homogeneous(g, 3000.0, 1500.0, 2000.0)
            .unwrap()
            .convert(Parameterization::Lame)
            .unwrap();
        let n = g.n();
        let src = SourceSet::point_forces(
            g,
            &[(30.0, 30.0)],
            ForceComponent::Vertical,
            C64::new(3.0, 1.0),
        )
        .unwrap();
        let b = src.column(0);
        let u = Wavefield {
            values: vec![C64::ZERO; 2 * n],
            source: 0,
            freq_hz: 5.0,
        };
        let sys =
            build_scattering_system(&u, &b, &model, Parameterization::Lame, &bundle, 1.0).unwrap();
        assert!(sys.l11.iter().all(|&v| v == C64::ZERO));
        assert!(sys.l22.iter().all(|&v| v == C64::ZERO));
        for i in 0..n {
            assert_eq!(sys.y_x[i], b[i]);
            assert_eq!(sys.y_z[i], b[n + i]);
        }
    }

    #[test]
    fn constant_wavefield_keeps_only_mass_term() {
        let g = GridGeometry::new(6, 6, 10.0, 10.0).unwrap();
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(0, 0.0), TWO_PI * 4.0).unwrap();
        let model = ElasticModel::homogeneous(g, 3000.0, 1500.0, 2000.0)
            .unwrap()
            .convert(Parameterization::SquaredVelocity)
            .unwrap();
        let n = g.n();
        let c = C64::new(0.7, -0.2);
        let u = Wavefield {
            values: vec![c; 2 * n],
            source: 0,
            freq_hz: 4.0,
        };
        let b = vec![C64::new(0.1, 0.0); 2 * n];
        let sys = build_scattering_system(
            &u,
            &b,
            &model,
            Parameterization::SquaredVelocity,
            &bundle,
            1.0,
        )
        .unwrap();
        let omega2 = bundle.omega() * bundle.omega();
        let rho = model.rho().values();
        for i in 0..n {
            assert!(sys.l11[i].norm() < 1e-10);
            assert!(sys.l12[i].norm() < 1e-10);
            let expect = b[i] - C64::new(omega2 * rho[i], 0.0) * c;
            assert!((sys.y_x[i] - expect).norm() <= 1e-12 * expect.norm());
        }
    }

    #[test]
    fn velocity_parameterization_is_rejected() {
        let g = GridGeometry::new(6, 6, 10.0, 10.0).unwrap();
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(0, 0.0), TWO_PI * 4.0).unwrap();
        let model = ElasticModel::homogeneous(g, 3000.0, 1500.0, 2000.0).unwrap();
        let u = Wavefield {
            values: vec![C64::ZERO; 2 * g.n()],
            source: 0,
            freq_hz: 4.0,
        };
        let b = vec![C64::ZERO; 2 * g.n()];
        assert!(matches!(
            build_scattering_system(&u, &b, &model, Parameterization::Velocity, &bundle, 1.0),
            Err(EfwiError::UnsupportedParameterization(_))
        ));
    }

    #[test]
    fn half_batches_accumulate_exactly() {
        let g = GridGeometry::new(7, 7, 15.0, 15.0).unwrap();
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(0, 0.0), TWO_PI * 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let model = random_model(g, Parameterization::SquaredVelocity, &mut rng);
        let n = g.n();
        let make_sys = |rng: &mut ChaCha8Rng| {
            let u = Wavefield {
                values: (0..2 * n)
                    .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect(),
                source: 0,
                freq_hz: 5.0,
            };
            let b: Vec<C64> = (0..2 * n)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            build_scattering_system(&u, &b, &model, Parameterization::SquaredVelocity, &bundle, 1.0)
                .unwrap()
        };
        let systems: Vec<_> = (0..4).map(|_| make_sys(&mut rng)).collect();

        let mut full = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        for s in &systems {
            full.accumulate(s).unwrap();
        }
        let mut halves = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        for s in &systems[..2] {
            halves.accumulate(s).unwrap();
        }
        for s in &systems[2..] {
            halves.accumulate(s).unwrap();
        }
        assert_eq!(full.h11, halves.h11);
        assert_eq!(full.h12, halves.h12);
        assert_eq!(full.h22, halves.h22);
        assert_eq!(full.g1, halves.g1);
        assert_eq!(full.g2, halves.g2);
        assert_eq!(full.count(), 4);
    }
}
