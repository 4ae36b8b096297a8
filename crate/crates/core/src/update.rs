//! Model updates from the accumulated normal system.
//!
//! The Gauss-Newton Hessian LᴴL is block diagonal with 2×2 Hermitian
//! cells, so the least-squares step m = [LᴴL]⁻¹ Lᴴy is a per-cell
//! closed form. The per-parameter update splits into the contribution
//! routed through the diagonal inverse-Hessian block and the one routed
//! through the off-diagonal block; their destructive sum is what
//! suppresses inter-parameter cross-talk, and both parts are kept for
//! diagnostics.

use crate::error::{EfwiError, Result};
use crate::linalg::C64;
use crate::model::{ElasticModel, Parameterization};
use crate::scattering::{build_scattering_system, NormalSystem, ScatteringSystem};
use crate::stencil::OperatorBundle;
use crate::wavefield::Wavefield;

/// Relative determinant floor for near-singular cells (never
/// illuminated nodes): ε = 1e-8 · max_cell(max(H11, H22)).
pub const TIKHONOV_REL_FLOOR: f64 = 1e-8;

/// Result of one least-squares model step, with the per-block
/// contribution fields of the inverse-Hessian decomposition.
#[derive(Debug, Clone)]
pub struct ModelUpdateResult {
    /// Updated first parameter class (real part of the per-cell solve).
    pub m1: Vec<f64>,
    /// Updated second parameter class.
    pub m2: Vec<f64>,
    /// Part of m1 routed through H⁻¹ block (1,1).
    pub m1_diag: Vec<f64>,
    /// Part of m1 routed through H⁻¹ block (1,2).
    pub m1_off: Vec<f64>,
    /// Part of m2 routed through H⁻¹ block (2,2).
    pub m2_diag: Vec<f64>,
    /// Part of m2 routed through H⁻¹ block (2,1).
    pub m2_off: Vec<f64>,
    /// Cells whose 2×2 determinant was floored.
    pub floored_cells: usize,
    /// √(Σ ‖L m − y‖²) at the returned (real) solution.
    pub residual_norm: f64,
    pub parameterization: Parameterization,
}

/// Per-parameter contribution grids for cross-talk inspection.
#[derive(Debug, Clone)]
pub struct CrossTalkReport {
    pub m1_total: Vec<f64>,
    pub m1_diag: Vec<f64>,
    pub m1_off: Vec<f64>,
    pub m2_total: Vec<f64>,
    pub m2_diag: Vec<f64>,
    pub m2_off: Vec<f64>,
}

/// Closed-form solve of the accumulated least-squares system.
pub fn solve_model_step(sys: &NormalSystem) -> Result<ModelUpdateResult> {
    let n = sys.n();
    if sys.count() == 0 {
        return Err(EfwiError::InvalidConfig(
            "model step requires at least one accumulated system".into(),
        ));
    }
    let h_max = sys
        .h11
        .iter()
        .zip(&sys.h22)
        .map(|(&a, &b)| a.max(b))
        .fold(0.0f64, f64::max);
    let eps = TIKHONOV_REL_FLOOR * h_max;

    let mut out = ModelUpdateResult {
        m1: vec![0.0; n],
        m2: vec![0.0; n],
        m1_diag: vec![0.0; n],
        m1_off: vec![0.0; n],
        m2_diag: vec![0.0; n],
        m2_off: vec![0.0; n],
        floored_cells: 0,
        residual_norm: 0.0,
        parameterization: sys.parameterization(),
    };

    let mut residual_sq = sys.y_norm_sq;
    for i in 0..n {
        let (mut h11, mut h22) = (sys.h11[i], sys.h22[i]);
        let h12 = sys.h12[i];
        let mut det = h11 * h22 - h12.norm_sqr();
        if det < eps * eps {
            h11 += eps;
            h22 += eps;
            det = h11 * h22 - h12.norm_sqr();
            out.floored_cells += 1;
        }
        let (g1, g2) = (sys.g1[i], sys.g2[i]);
        // inverse-Hessian blocks: [h22, -h12; -conj(h12), h11] / det
        let c1_diag = (g1 * h22 / det).re;
        let c1_off = (-(h12 * g2) / det).re;
        let c2_diag = (g2 * h11 / det).re;
        let c2_off = (-(h12.conj() * g1) / det).re;
        out.m1_diag[i] = c1_diag;
        out.m1_off[i] = c1_off;
        out.m2_diag[i] = c2_diag;
        out.m2_off[i] = c2_off;
        let m1 = c1_diag + c1_off;
        let m2 = c2_diag + c2_off;
        out.m1[i] = m1;
        out.m2[i] = m2;

        // ‖L m − y‖² = mᵀ H m − 2 Re(mᵀ g) + ‖y‖², with the original H
        let quad = sys.h11[i] * m1 * m1
            + 2.0 * (sys.h12[i] * m2).re * m1
            + sys.h22[i] * m2 * m2;
        residual_sq += quad - 2.0 * (m1 * g1.re + m2 * g2.re);
    }
    out.residual_norm = residual_sq.max(0.0).sqrt();
    Ok(out)
}

impl ModelUpdateResult {
    /// Wraps an externally produced update (the Gauss-Newton path) as a
    /// result whose contribution fields carry the whole step in the
    /// diagonal slot.
    pub fn from_model(updated: &ElasticModel, previous: &ElasticModel) -> Self {
        let m1 = updated.field1().values().to_vec();
        let m2 = updated.field2().values().to_vec();
        let m1_diag: Vec<f64> = m1
            .iter()
            .zip(previous.field1().values())
            .map(|(a, b)| a - b)
            .collect();
        let m2_diag: Vec<f64> = m2
            .iter()
            .zip(previous.field2().values())
            .map(|(a, b)| a - b)
            .collect();
        let n = m1.len();
        Self {
            m1,
            m2,
            m1_diag,
            m1_off: vec![0.0; n],
            m2_diag,
            m2_off: vec![0.0; n],
            floored_cells: 0,
            residual_norm: f64::NAN,
            parameterization: updated.parameterization(),
        }
    }
}

/// Least-squares step anchored at the current model: solves the shifted
/// per-cell system (H + floor) δ = g − H m_cur and returns m_cur + δ.
/// Wherever the floor is inactive this is exactly the closed form of
/// [`solve_model_step`]; floored (never-illuminated) cells keep their
/// current value instead of collapsing toward zero.
pub fn solve_model_step_from(
    sys: &NormalSystem,
    m1_cur: &[f64],
    m2_cur: &[f64],
) -> Result<ModelUpdateResult> {
    let n = sys.n();
    if m1_cur.len() != n || m2_cur.len() != n {
        return Err(EfwiError::DimensionMismatch(
            "anchor model does not match the normal system".into(),
        ));
    }
    if sys.count() == 0 {
        return Err(EfwiError::InvalidConfig(
            "model step requires at least one accumulated system".into(),
        ));
    }
    let h_max = sys
        .h11
        .iter()
        .zip(&sys.h22)
        .map(|(&a, &b)| a.max(b))
        .fold(0.0f64, f64::max);
    let eps = TIKHONOV_REL_FLOOR * h_max;

    let mut out = ModelUpdateResult {
        m1: vec![0.0; n],
        m2: vec![0.0; n],
        m1_diag: vec![0.0; n],
        m1_off: vec![0.0; n],
        m2_diag: vec![0.0; n],
        m2_off: vec![0.0; n],
        floored_cells: 0,
        residual_norm: 0.0,
        parameterization: sys.parameterization(),
    };

    let mut residual_sq = sys.y_norm_sq;
    for i in 0..n {
        let (mut h11, mut h22) = (sys.h11[i], sys.h22[i]);
        let h12 = sys.h12[i];
        let mut det = h11 * h22 - h12.norm_sqr();
        if det < eps * eps {
            h11 += eps;
            h22 += eps;
            det = h11 * h22 - h12.norm_sqr();
            out.floored_cells += 1;
        }
        // shifted gradient g' = g − H m_cur
        let g1 = sys.g1[i] - (sys.h11[i] * m1_cur[i] + sys.h12[i] * m2_cur[i]);
        let g2 = sys.g2[i] - (sys.h12[i].conj() * m1_cur[i] + sys.h22[i] * m2_cur[i]);
        let d1_diag = (g1 * h22 / det).re;
        let d1_off = (-(h12 * g2) / det).re;
        let d2_diag = (g2 * h11 / det).re;
        let d2_off = (-(h12.conj() * g1) / det).re;
        out.m1_diag[i] = d1_diag;
        out.m1_off[i] = d1_off;
        out.m2_diag[i] = d2_diag;
        out.m2_off[i] = d2_off;
        let m1 = m1_cur[i] + d1_diag + d1_off;
        let m2 = m2_cur[i] + d2_diag + d2_off;
        out.m1[i] = m1;
        out.m2[i] = m2;
        let quad = sys.h11[i] * m1 * m1
            + 2.0 * (sys.h12[i] * m2).re * m1
            + sys.h22[i] * m2 * m2;
        residual_sq += quad - 2.0 * (m1 * sys.g1[i].re + m2 * sys.g2[i].re);
    }
    out.residual_norm = residual_sq.max(0.0).sqrt();
    Ok(out)
}

/// Contribution grids of the inverse-Hessian block decomposition.
pub fn hessian_cross_talk_report(result: &ModelUpdateResult) -> CrossTalkReport {
    CrossTalkReport {
        m1_total: result.m1.clone(),
        m1_diag: result.m1_diag.clone(),
        m1_off: result.m1_off.clone(),
        m2_total: result.m2.clone(),
        m2_diag: result.m2_diag.clone(),
        m2_off: result.m2_off.clone(),
    }
}

/// Outcome of one Gauss-Newton step in the velocity parameterization.
#[derive(Debug, Clone)]
pub struct GnStepInfo {
    pub alpha: f64,
    pub stalled: bool,
    pub gradient_norm: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub floored_cells: usize,
}

/// Gradient of Φ(V) = ½ Σ ‖A(m(V)) u − b − s‖² with u frozen, via the
/// chain rule through the squared-velocity linearization: J = L ∘ 2V.
pub fn gn_gradient(
    systems: &[ScatteringSystem],
    vp: &[f64],
    vs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = vp.len();
    let mut g1 = vec![0.0; n];
    let mut g2 = vec![0.0; n];
    let mp: Vec<f64> = vp.iter().map(|v| v * v).collect();
    let ms: Vec<f64> = vs.iter().map(|v| v * v).collect();
    for sys in systems {
        if sys.parameterization() != Parameterization::SquaredVelocity {
            return Err(EfwiError::UnsupportedParameterization(
                "Gauss-Newton systems must be built in squared velocities".into(),
            ));
        }
        let (rx, rz) = sys.residual(&mp, &ms);
        for i in 0..n {
            let jp_x = sys.l11[i] * (2.0 * vp[i]);
            let js_x = sys.l12[i] * (2.0 * vs[i]);
            let jp_z = sys.l21[i] * (2.0 * vp[i]);
            let js_z = sys.l22[i] * (2.0 * vs[i]);
            g1[i] += (jp_x.conj() * rx[i] + jp_z.conj() * rz[i]).re;
            g2[i] += (js_x.conj() * rx[i] + js_z.conj() * rz[i]).re;
        }
    }
    Ok((g1, g2))
}

/// ½ Σ ‖L m_sq(V) − y‖² evaluated from the stored diagonal blocks.
pub fn gn_objective(systems: &[ScatteringSystem], vp: &[f64], vs: &[f64]) -> f64 {
    let mp: Vec<f64> = vp.iter().map(|v| v * v).collect();
    let ms: Vec<f64> = vs.iter().map(|v| v * v).collect();
    let mut phi = 0.0;
    for sys in systems {
        let (rx, rz) = sys.residual(&mp, &ms);
        phi += 0.5
            * (rx.iter().map(|v| v.norm_sqr()).sum::<f64>()
                + rz.iter().map(|v| v.norm_sqr()).sum::<f64>());
    }
    phi
}

/// Solves the per-cell 2×2 symmetric system H δ = −g, flooring
/// near-singular cells. Returns (δ1, δ2, floored count).
fn gn_direction(
    h11: &[f64],
    h12: &[f64],
    h22: &[f64],
    g1: &[f64],
    g2: &[f64],
) -> (Vec<f64>, Vec<f64>, usize) {
    let n = h11.len();
    let h_max = h11
        .iter()
        .zip(h22)
        .map(|(&a, &b)| a.max(b))
        .fold(0.0f64, f64::max);
    let eps = TIKHONOV_REL_FLOOR * h_max;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut floored = 0;
    for i in 0..n {
        let (mut a, mut c) = (h11[i], h22[i]);
        let b = h12[i];
        let mut det = a * c - b * b;
        if det < eps * eps {
            a += eps;
            c += eps;
            det = a * c - b * b;
            floored += 1;
        }
        if det <= 0.0 {
            // fully dark cell in an all-dark system; leave it unmoved
            continue;
        }
        d1[i] = -(c * g1[i] - b * g2[i]) / det;
        d2[i] = -(a * g2[i] - b * g1[i]) / det;
    }
    (d1, d2, floored)
}

/// One damped Gauss-Newton step for the (V_P, V_S) parameterization:
/// H δ = −g per cell with H = Re(JᴴJ), then a backtracking line search
/// on the frozen-u quadratic term (halve α until it decreases, at most
/// 8 halvings). A non-decreasing objective returns the model unchanged
/// with the stall flag set.
pub fn gauss_newton_step(
    systems: &[ScatteringSystem],
    model: &ElasticModel,
    step_length: f64,
) -> Result<(ElasticModel, GnStepInfo)> {
    if model.parameterization() != Parameterization::Velocity {
        return Err(EfwiError::UnsupportedParameterization(format!(
            "Gauss-Newton step expects a velocity model, got {}",
            model.parameterization()
        )));
    }
    if !(step_length > 0.0 && step_length <= 1.0) {
        return Err(EfwiError::InvalidConfig(
            "step_length must lie in (0, 1]".into(),
        ));
    }
    let vp = model.field1().values();
    let vs = model.field2().values();
    let n = vp.len();

    // accumulate the real Gauss-Newton system over all sources/frequencies
    let mut h11 = vec![0.0; n];
    let mut h12 = vec![0.0; n];
    let mut h22 = vec![0.0; n];
    for sys in systems {
        if sys.n() != n {
            return Err(EfwiError::DimensionMismatch(
                "scattering system does not match the model grid".into(),
            ));
        }
        for i in 0..n {
            let jp_x = sys.l11[i] * (2.0 * vp[i]);
            let js_x = sys.l12[i] * (2.0 * vs[i]);
            let jp_z = sys.l21[i] * (2.0 * vp[i]);
            let js_z = sys.l22[i] * (2.0 * vs[i]);
            h11[i] += jp_x.norm_sqr() + jp_z.norm_sqr();
            h12[i] += (jp_x.conj() * js_x + jp_z.conj() * js_z).re;
            h22[i] += js_x.norm_sqr() + js_z.norm_sqr();
        }
    }
    let (g1, g2) = gn_gradient(systems, vp, vs)?;
    let (d1, d2, floored_cells) = gn_direction(&h11, &h12, &h22, &g1, &g2);

    let phi0 = gn_objective(systems, vp, vs);
    let gradient_norm = (g1.iter().map(|v| v * v).sum::<f64>()
        + g2.iter().map(|v| v * v).sum::<f64>())
    .sqrt();

    let mut alpha = step_length;
    for _ in 0..=8 {
        let vp_new: Vec<f64> = vp.iter().zip(&d1).map(|(v, d)| v + alpha * d).collect();
        let vs_new: Vec<f64> = vs.iter().zip(&d2).map(|(v, d)| v + alpha * d).collect();
        let phi = gn_objective(systems, &vp_new, &vs_new);
        if phi < phi0 {
            let updated = model.with_fields(vp_new, vs_new)?;
            return Ok((
                updated,
                GnStepInfo {
                    alpha,
                    stalled: false,
                    gradient_norm,
                    objective_before: phi0,
                    objective_after: phi,
                    floored_cells,
                },
            ));
        }
        alpha *= 0.5;
    }
    Ok((
        model.clone(),
        GnStepInfo {
            alpha: 0.0,
            stalled: true,
            gradient_norm,
            objective_before: phi0,
            objective_after: phi0,
            floored_cells,
        },
    ))
}

/// Single-wavefield convenience wrapper around [`gauss_newton_step`].
pub fn gauss_newton_velocity_step(
    u: &Wavefield,
    b_plus_s: &[C64],
    model: &ElasticModel,
    bundle: &OperatorBundle,
    step_length: f64,
) -> Result<(ElasticModel, GnStepInfo)> {
    let sys = build_scattering_system(
        u,
        b_plus_s,
        model,
        Parameterization::SquaredVelocity,
        bundle,
        1.0,
    )?;
    gauss_newton_step(&[sys], model, step_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::dense::{dense_least_squares, DenseMatrix};
    use crate::field::{ParameterField, Unit};
    use crate::grid::GridGeometry;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    fn rand_c64(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    /// Synthetic diagonal-block system with a known consistent solution.
    fn synthetic_system(
        n: usize,
        m1: &[f64],
        m2: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> ScatteringSystem {
        let l11: Vec<C64> = (0..n).map(|_| rand_c64(rng)).collect();
        let l12: Vec<C64> = (0..n).map(|_| rand_c64(rng)).collect();
        let l21: Vec<C64> = (0..n).map(|_| rand_c64(rng)).collect();
        let l22: Vec<C64> = (0..n).map(|_| rand_c64(rng)).collect();
        let y_x: Vec<C64> = (0..n).map(|i| l11[i] * m1[i] + l12[i] * m2[i]).collect();
        let y_z: Vec<C64> = (0..n).map(|i| l21[i] * m1[i] + l22[i] * m2[i]).collect();
        ScatteringSystem::from_parts(
            l11,
            l12,
            l21,
            l22,
            y_x,
            y_z,
            Parameterization::SquaredVelocity,
        )
    }

    #[test]
    fn consistent_system_recovers_model() {
        let n = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let m1: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
        let m2: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        let mut normal = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        for _ in 0..3 {
            normal
                .accumulate(&synthetic_system(n, &m1, &m2, &mut rng))
                .unwrap();
        }
        let result = solve_model_step(&normal).unwrap();
        for i in 0..n {
            assert!((result.m1[i] - m1[i]).abs() <= 1e-10 * m1[i].abs());
            assert!((result.m2[i] - m2[i]).abs() <= 1e-10 * m2[i].abs());
        }
        assert_eq!(result.floored_cells, 0);
        // the quadratic-form residual cancels to rounding on consistent data
        assert!(result.residual_norm <= 1e-6 * normal.y_norm_sq.sqrt());
    }

    #[test]
    fn matches_dense_least_squares_oracle() {
        // 6-cell system, two accumulated right-hand sides, inconsistent y
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut normal = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        let mut stacked_rows: Vec<Vec<C64>> = Vec::new();
        let mut stacked_rhs: Vec<C64> = Vec::new();
        for _ in 0..2 {
            let l11: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            let l12: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            let l21: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            let l22: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            let y_x: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            let y_z: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
            for i in 0..n {
                let mut row_x = vec![C64::ZERO; 2 * n];
                row_x[i] = l11[i];
                row_x[n + i] = l12[i];
                stacked_rows.push(row_x);
                stacked_rhs.push(y_x[i]);
                let mut row_z = vec![C64::ZERO; 2 * n];
                row_z[i] = l21[i];
                row_z[n + i] = l22[i];
                stacked_rows.push(row_z);
                stacked_rhs.push(y_z[i]);
            }
            normal
                .accumulate(&ScatteringSystem::from_parts(
                    l11,
                    l12,
                    l21,
                    l22,
                    y_x,
                    y_z,
                    Parameterization::SquaredVelocity,
                ))
                .unwrap();
        }
        let result = solve_model_step(&normal).unwrap();

        let mut dense = DenseMatrix::zeros(stacked_rows.len(), 2 * n);
        for (r, row) in stacked_rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                dense[(r, c)] = v;
            }
        }
        let oracle = dense_least_squares(&dense, &stacked_rhs).unwrap();
        for i in 0..n {
            let scale = oracle[i].norm().max(1.0);
            assert!(
                (result.m1[i] - oracle[i].re).abs() <= 1e-10 * scale,
                "cell {i}: {} vs {}",
                result.m1[i],
                oracle[i].re
            );
            assert!((result.m2[i] - oracle[n + i].re).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn contributions_sum_to_total_exactly() {
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let m2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut normal = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        normal
            .accumulate(&synthetic_system(n, &m1, &m2, &mut rng))
            .unwrap();
        let result = solve_model_step(&normal).unwrap();
        let report = hessian_cross_talk_report(&result);
        for i in 0..n {
            assert_eq!(result.m1[i], result.m1_diag[i] + result.m1_off[i]);
            assert_eq!(result.m2[i], result.m2_diag[i] + result.m2_off[i]);
            assert_eq!(report.m1_total[i], result.m1[i]);
        }
    }

    #[test]
    fn zero_off_diagonal_hessian_kills_off_contributions() {
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        // l12 = l21 = 0 makes H12 = 0
        let l11: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
        let l22: Vec<C64> = (0..n).map(|_| rand_c64(&mut rng)).collect();
        let sys = ScatteringSystem::from_parts(
            l11.clone(),
            vec![C64::ZERO; n],
            vec![C64::ZERO; n],
            l22.clone(),
            (0..n).map(|_| rand_c64(&mut rng)).collect(),
            (0..n).map(|_| rand_c64(&mut rng)).collect(),
            Parameterization::SquaredVelocity,
        );
        let mut normal = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        normal.accumulate(&sys).unwrap();
        let result = solve_model_step(&normal).unwrap();
        for i in 0..n {
            assert_eq!(result.m1_off[i], 0.0);
            assert_eq!(result.m2_off[i], 0.0);
        }
    }

    #[test]
    fn dark_cells_are_floored_and_counted() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let m1: Vec<f64> = vec![1.0; n];
        let m2: Vec<f64> = vec![2.0; n];
        let mut sys = synthetic_system(n, &m1, &m2, &mut rng);
        // cell 2 never illuminated
        sys.l11[2] = C64::ZERO;
        sys.l12[2] = C64::ZERO;
        sys.l21[2] = C64::ZERO;
        sys.l22[2] = C64::ZERO;
        sys.y_x[2] = C64::ZERO;
        sys.y_z[2] = C64::ZERO;
        let mut normal = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
        normal.accumulate(&sys).unwrap();
        let result = solve_model_step(&normal).unwrap();
        assert_eq!(result.floored_cells, 1);
        assert_eq!(result.m1[2], 0.0);
        // illuminated cells still recovered
        assert!((result.m1[0] - 1.0).abs() < 1e-9);
    }

    fn toy_velocity_model(n_side: usize, vp0: f64, vs0: f64) -> ElasticModel {
        let g = GridGeometry::new(n_side, n_side, 20.0, 20.0).unwrap();
        let vp = ParameterField::constant(g, Unit::MetersPerSecond, vp0).unwrap();
        let vs = ParameterField::constant(g, Unit::MetersPerSecond, vs0).unwrap();
        let rho = ParameterField::constant(g, Unit::KilogramsPerCubicMeter, 2000.0).unwrap();
        ElasticModel::new(Parameterization::Velocity, vp, vs, rho).unwrap()
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        // directional derivative of ½‖A(m)u − b − s‖² against central
        // differences with relative step 1e-6
        let g = GridGeometry::new(12, 12, 25.0, 25.0).unwrap();
        let model = {
            let vp = ParameterField::from_fn(g, Unit::MetersPerSecond, |iz, ix| {
                2800.0 + 10.0 * iz as f64 + 6.0 * ix as f64
            })
            .unwrap();
            let vs = ParameterField::from_fn(g, Unit::MetersPerSecond, |iz, ix| {
                1500.0 + 4.0 * iz as f64 + 3.0 * ix as f64
            })
            .unwrap();
            let rho = ParameterField::constant(g, Unit::KilogramsPerCubicMeter, 2000.0).unwrap();
            ElasticModel::new(Parameterization::Velocity, vp, vs, rho).unwrap()
        };
        let bundle = OperatorBundle::new(g, BoundarySpec::absorbing(2, 40.0), TWO_PI * 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = g.n();
        let u = Wavefield {
            values: (0..2 * n).map(|_| rand_c64(&mut rng)).collect(),
            source: 0,
            freq_hz: 5.0,
        };
        let b: Vec<C64> = (0..2 * n).map(|_| rand_c64(&mut rng)).collect();
        let sys = build_scattering_system(
            &u,
            &b,
            &model,
            Parameterization::SquaredVelocity,
            &bundle,
            1.0,
        )
        .unwrap();
        let systems = vec![sys];
        let vp = model.field1().values();
        let vs = model.field2().values();
        let (g1, g2) = gn_gradient(&systems, vp, vs).unwrap();

        for trial in 0..20 {
            let mut rng_d = ChaCha8Rng::seed_from_u64(100 + trial);
            let dp: Vec<f64> = (0..n).map(|_| rng_d.random::<f64>() - 0.5).collect();
            let ds: Vec<f64> = (0..n).map(|_| rng_d.random::<f64>() - 0.5).collect();
            let analytic: f64 = g1.iter().zip(&dp).map(|(a, b)| a * b).sum::<f64>()
                + g2.iter().zip(&ds).map(|(a, b)| a * b).sum::<f64>();
            let h = 1e-6 * 2800.0;
            let eval = |sign: f64| {
                let vp_t: Vec<f64> = vp.iter().zip(&dp).map(|(v, d)| v + sign * h * d).collect();
                let vs_t: Vec<f64> = vs.iter().zip(&ds).map(|(v, d)| v + sign * h * d).collect();
                gn_objective(&systems, &vp_t, &vs_t)
            };
            let numeric = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            assert!(
                (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()),
                "trial {trial}: analytic {analytic:.8e}, numeric {numeric:.8e}"
            );
        }
    }

    #[test]
    fn stationary_point_gives_zero_step() {
        // consistent data: y exactly matches the current model
        let model = toy_velocity_model(8, 3000.0, 1600.0);
        let n = model.grid().n();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let vp = model.field1().values();
        let vs = model.field2().values();
        let mp: Vec<f64> = vp.iter().map(|v| v * v).collect();
        let ms: Vec<f64> = vs.iter().map(|v| v * v).collect();
        let sys = synthetic_system(n, &mp, &ms, &mut rng);
        let (g1, g2) = gn_gradient(&[sys.clone()], vp, vs).unwrap();
        let scale = vp[0] * sys.l11[0].norm() * sys.y_x[0].norm().max(1.0);
        assert!(g1.iter().all(|&g| g.abs() <= 1e-8 * scale.max(1.0)));
        assert!(g2.iter().all(|&g| g.abs() <= 1e-8 * scale.max(1.0)));

        let (updated, info) = gauss_newton_step(&[sys], &model, 1.0).unwrap();
        let dev: f64 = updated
            .field1()
            .values()
            .iter()
            .zip(vp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // either an accepted tiny step or a stall at the optimum
        assert!(dev <= 1e-8 * vp[0]);
        assert!(info.alpha <= 1.0);
    }

    #[test]
    fn quadratic_subproblem_solved_exactly() {
        // the per-cell Newton system H δ = −g is solved to rounding,
        // which is what makes Gauss-Newton exact on quadratics
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut h11 = vec![0.0; n];
        let mut h12 = vec![0.0; n];
        let mut h22 = vec![0.0; n];
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        for i in 0..n {
            // random SPD 2x2 via JᵀJ
            let (a, b, c, d) = (
                rng.random::<f64>() + 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() + 0.5,
            );
            h11[i] = a * a + c * c;
            h12[i] = a * b + c * d;
            h22[i] = b * b + d * d;
            g1[i] = rng.random::<f64>() - 0.5;
            g2[i] = rng.random::<f64>() - 0.5;
        }
        let (d1, d2, floored) = gn_direction(&h11, &h12, &h22, &g1, &g2);
        assert_eq!(floored, 0);
        for i in 0..n {
            let r1 = h11[i] * d1[i] + h12[i] * d2[i] + g1[i];
            let r2 = h12[i] * d1[i] + h22[i] * d2[i] + g2[i];
            assert!(r1.abs() <= 1e-10 && r2.abs() <= 1e-10, "cell {i}");
        }
    }

    #[test]
    fn gn_step_decreases_objective_on_perturbed_model() {
        let model = toy_velocity_model(8, 3000.0, 1600.0);
        let n = model.grid().n();
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        // data consistent with a slightly different model
        let vp_true: Vec<f64> = model.field1().values().iter().map(|v| v * 1.03).collect();
        let vs_true: Vec<f64> = model.field2().values().iter().map(|v| v * 0.98).collect();
        let mp: Vec<f64> = vp_true.iter().map(|v| v * v).collect();
        let ms: Vec<f64> = vs_true.iter().map(|v| v * v).collect();
        let sys = synthetic_system(n, &mp, &ms, &mut rng);
        let (updated, info) = gauss_newton_step(&[sys], &model, 1.0).unwrap();
        assert!(!info.stalled);
        assert!(info.objective_after < info.objective_before);
        assert!(updated.field1().values()[0] != model.field1().values()[0]);
    }

    #[test]
    fn gn_and_closed_form_agree_to_first_order() {
        // small residual: the velocity step converted from the closed-form
        // squared-velocity update differs by O(residual²)
        let n = 12;
        let vp0 = 3000.0;
        let vs0 = 1600.0;
        let model = toy_velocity_model(4, vp0, vs0); // 4x4 grid = 16 cells
        let n_cells = model.grid().n();
        assert!(n <= n_cells);
        let mut devs = Vec::new();
        for &eps in &[1e-3, 5e-4] {
            let mut rng = ChaCha8Rng::seed_from_u64(49);
            let mp: Vec<f64> = (0..n_cells).map(|_| vp0 * vp0 * (1.0 + eps * (rng.random::<f64>() - 0.5))).collect();
            let ms: Vec<f64> = (0..n_cells).map(|_| vs0 * vs0 * (1.0 + eps * (rng.random::<f64>() - 0.5))).collect();
            let sys = synthetic_system(n_cells, &mp, &ms, &mut rng);

            // closed form in squared velocities, then converted
            let mut normal = NormalSystem::zeros(n_cells, Parameterization::SquaredVelocity);
            normal.accumulate(&sys).unwrap();
            let closed = solve_model_step(&normal).unwrap();
            let vp_closed: Vec<f64> = closed.m1.iter().map(|&m| m.max(0.0).sqrt()).collect();

            // one GN step in velocities
            let (gn, info) = gauss_newton_step(&[sys], &model, 1.0).unwrap();
            assert!(!info.stalled);
            let dev: f64 = gn
                .field1()
                .values()
                .iter()
                .zip(&vp_closed)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / vp0;
            devs.push((eps, dev));
        }
        // halving the residual scale should cut the gap ~4x (quadratic)
        let ratio = devs[0].1 / devs[1].1.max(f64::MIN_POSITIVE);
        assert!(
            ratio > 2.5,
            "expected roughly quadratic shrinkage, got {devs:?}"
        );
    }
}
