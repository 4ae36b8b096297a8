//! Convex physical constraints in the (m_p, m_s) plane and their
//! projections.
//!
//! Two sets are supported: a box of per-parameter bounds and a band
//! between two lines (an intersection of two half-spaces, built from
//! borehole cross-plots or empirical relations). The projector onto
//! their intersection is Dykstra's algorithm, which converges to the
//! exact nearest point; plain alternating projection (POCS) is kept as
//! a feasibility oracle in the tests. The constrained model step
//! splits the least-squares objective from the set-membership with an
//! auxiliary variable and scaled dual, iterating per-cell 2×2 solves
//! against the projection.

use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};
use crate::scattering::NormalSystem;
use crate::update::{ModelUpdateResult, TIKHONOV_REL_FLOOR};

pub type Point = (f64, f64);

/// Axis-aligned box: lower-left and upper-right corners in the
/// (m_p, m_s) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub p_min: f64,
    pub p_max: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl BoxSet {
    pub fn new(p_min: f64, p_max: f64, s_min: f64, s_max: f64) -> Result<Self> {
        if !(p_min < p_max && s_min < s_max) {
            return Err(EfwiError::EmptyConstraintSet(
                "box bounds must satisfy lower < upper".into(),
            ));
        }
        Ok(Self {
            p_min,
            p_max,
            s_min,
            s_max,
        })
    }

    pub fn contains(&self, pt: Point, tol: f64) -> bool {
        pt.0 >= self.p_min - tol
            && pt.0 <= self.p_max + tol
            && pt.1 >= self.s_min - tol
            && pt.1 <= self.s_max + tol
    }

    pub fn distance(&self, pt: Point) -> f64 {
        let q = project_box(pt, self);
        ((pt.0 - q.0).powi(2) + (pt.1 - q.1).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    /// a·m_p + b·m_s ≥ c
    Ge,
    /// a·m_p + b·m_s ≤ c
    Le,
}

/// One half-space a·m_p + b·m_s {≥,≤} c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sense: Sense,
}

impl HalfSpace {
    pub fn new(a: f64, b: f64, c: f64, sense: Sense) -> Result<Self> {
        if a == 0.0 && b == 0.0 {
            return Err(EfwiError::EmptyConstraintSet(
                "half-space normal must be nonzero".into(),
            ));
        }
        Ok(Self { a, b, c, sense })
    }

    pub fn satisfied(&self, pt: Point, tol: f64) -> bool {
        let v = self.a * pt.0 + self.b * pt.1 - self.c;
        match self.sense {
            Sense::Ge => v >= -tol,
            Sense::Le => v <= tol,
        }
    }

    pub fn violation(&self, pt: Point) -> f64 {
        let v = self.a * pt.0 + self.b * pt.1 - self.c;
        let signed = match self.sense {
            Sense::Ge => (-v).max(0.0),
            Sense::Le => v.max(0.0),
        };
        signed / (self.a * self.a + self.b * self.b).sqrt()
    }
}

/// Set of points between two lines: a lower half-space (≥) and an
/// upper one (≤).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub lower: HalfSpace,
    pub upper: HalfSpace,
}

impl BandSet {
    pub fn new(lower: HalfSpace, upper: HalfSpace) -> Result<Self> {
        if lower.sense != Sense::Ge || upper.sense != Sense::Le {
            return Err(EfwiError::EmptyConstraintSet(
                "band needs a ≥ lower half-space and a ≤ upper one".into(),
            ));
        }
        let band = Self { lower, upper };
        // parallel and disjoint half-planes have no intersection
        let cross = lower.a * upper.b - lower.b * upper.a;
        if cross.abs() < 1e-14 {
            let scale = (upper.a.powi(2) + upper.b.powi(2)).sqrt()
                / (lower.a.powi(2) + lower.b.powi(2)).sqrt();
            let aligned = lower.a * upper.a + lower.b * upper.b > 0.0;
            let empty = if aligned {
                upper.c < lower.c * scale - 1e-12 * lower.c.abs().max(1.0)
            } else {
                // anti-parallel normals: ≥ and ≤ point the same way
                false
            };
            if empty {
                return Err(EfwiError::EmptyConstraintSet(
                    "band half-spaces do not intersect".into(),
                ));
            }
        }
        Ok(band)
    }

    /// Whole-plane band, useful as a neutral element.
    pub fn unbounded() -> Self {
        Self {
            lower: HalfSpace {
                a: 0.0,
                b: 1.0,
                c: f64::NEG_INFINITY,
                sense: Sense::Ge,
            },
            upper: HalfSpace {
                a: 0.0,
                b: 1.0,
                c: f64::INFINITY,
                sense: Sense::Le,
            },
        }
    }

    pub fn contains(&self, pt: Point, tol: f64) -> bool {
        self.lower.satisfied(pt, tol) && self.upper.satisfied(pt, tol)
    }

    pub fn distance(&self, pt: Point) -> f64 {
        let q = project_band(pt, self);
        ((pt.0 - q.0).powi(2) + (pt.1 - q.1).powi(2)).sqrt()
    }

    /// Validates that the band meets a box: at least one box corner (or
    /// the band's line intersection) must satisfy both sets.
    pub fn validate_against(&self, bx: &BoxSet) -> Result<()> {
        let corners = [
            (bx.p_min, bx.s_min),
            (bx.p_min, bx.s_max),
            (bx.p_max, bx.s_min),
            (bx.p_max, bx.s_max),
        ];
        // cheap feasibility probe: project corners into the band and
        // check any lands back inside the box
        for corner in corners {
            let q = project_band(corner, self);
            if bx.contains(q, 1e-9 * (bx.p_max - bx.p_min).abs()) {
                return Ok(());
            }
        }
        // fall back to a short alternating projection probe
        let mut x = (
            0.5 * (bx.p_min + bx.p_max),
            0.5 * (bx.s_min + bx.s_max),
        );
        for _ in 0..64 {
            x = project_band(project_box(x, bx), self);
        }
        let tol = 1e-6
            * ((bx.p_max - bx.p_min).hypot(bx.s_max - bx.s_min)).max(1.0);
        if bx.distance(x) <= tol && self.distance(x) <= tol {
            Ok(())
        } else {
            Err(EfwiError::EmptyConstraintSet(
                "box and band do not intersect".into(),
            ))
        }
    }
}

/// Componentwise clamp onto the box.
pub fn project_box(pt: Point, bx: &BoxSet) -> Point {
    (
        pt.0.clamp(bx.p_min, bx.p_max),
        pt.1.clamp(bx.s_min, bx.s_max),
    )
}

/// Orthogonal projection onto one half-space.
pub fn project_halfspace(pt: Point, hs: &HalfSpace) -> Point {
    let v = hs.a * pt.0 + hs.b * pt.1 - hs.c;
    let violated = match hs.sense {
        Sense::Ge => v < 0.0,
        Sense::Le => v > 0.0,
    };
    if !violated || !v.is_finite() {
        return pt;
    }
    let n2 = hs.a * hs.a + hs.b * hs.b;
    (pt.0 - v * hs.a / n2, pt.1 - v * hs.b / n2)
}

/// Exact projection onto the band (intersection of two half-spaces):
/// project onto the violated line; if that leaves the other half-space
/// violated the answer is the line intersection point (wedge corner).
pub fn project_band(pt: Point, band: &BandSet) -> Point {
    if band.contains(pt, 0.0) {
        return pt;
    }
    let p_lo = project_halfspace(pt, &band.lower);
    if band.upper.satisfied(p_lo, 1e-12 * mag(p_lo)) {
        return p_lo;
    }
    let p_up = project_halfspace(pt, &band.upper);
    if band.lower.satisfied(p_up, 1e-12 * mag(p_up)) {
        return p_up;
    }
    // both violated after single projections: nearest point is the corner
    let det = band.lower.a * band.upper.b - band.lower.b * band.upper.a;
    debug_assert!(det.abs() > 0.0, "parallel band lines cannot reach here");
    (
        (band.lower.c * band.upper.b - band.lower.b * band.upper.c) / det,
        (band.lower.a * band.upper.c - band.lower.c * band.upper.a) / det,
    )
}

fn mag(pt: Point) -> f64 {
    pt.0.abs().max(pt.1.abs()).max(1.0)
}

/// Convergence report for the intersection projection.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionDiagnostics {
    pub iterations: usize,
    pub infeasibility: f64,
    pub converged: bool,
}

/// Dykstra's algorithm over {box, band}: converges to the exact nearest
/// point of the intersection (unlike plain alternating projections).
pub fn project_intersection(
    pt: Point,
    bx: &BoxSet,
    band: &BandSet,
    tol: f64,
    max_iter: usize,
) -> (Point, ProjectionDiagnostics) {
    let mut x = pt;
    let mut p = (0.0, 0.0);
    let mut q = (0.0, 0.0);
    let mut infeasibility = f64::INFINITY;
    for it in 1..=max_iter {
        let (x_prev, p_prev, q_prev) = (x, p, q);
        let y = project_box((x.0 + p.0, x.1 + p.1), bx);
        p = (x.0 + p.0 - y.0, x.1 + p.1 - y.1);
        let x_next = project_band((y.0 + q.0, y.1 + q.1), band);
        q = (y.0 + q.0 - x_next.0, y.1 + q.1 - x_next.1);
        x = x_next;
        infeasibility = bx.distance(x).max(band.distance(x));
        // the iterate can sit still inside the set while the correction
        // terms keep draining, so stop only when the whole (x, p, q)
        // state has settled
        let step = (x.0 - x_prev.0)
            .hypot(x.1 - x_prev.1)
            .max((p.0 - p_prev.0).hypot(p.1 - p_prev.1))
            .max((q.0 - q_prev.0).hypot(q.1 - q_prev.1));
        let settled = step <= tol * mag(x);
        if infeasibility <= tol && settled && it > 1 {
            return (
                x,
                ProjectionDiagnostics {
                    iterations: it,
                    infeasibility,
                    converged: true,
                },
            );
        }
    }
    (
        x,
        ProjectionDiagnostics {
            iterations: max_iter,
            infeasibility,
            converged: false,
        },
    )
}

/// Per-cell projector in the plane of the two inverted parameters.
pub trait PlaneProjector: Sync {
    fn project(&self, pt: Point) -> Point;

    /// Largest distance of `pt` from the feasible set, for diagnostics.
    fn infeasibility(&self, pt: Point) -> f64 {
        let q = self.project(pt);
        ((pt.0 - q.0).powi(2) + (pt.1 - q.1).powi(2)).sqrt()
    }
}

/// Projector onto box ∩ band defined in the (V_P, V_S) velocity plane,
/// with adapters for models expressed in squared velocities. Lamé
/// models convert through density, which the adapter carries per cell.
#[derive(Debug, Clone)]
pub struct VelocityPlaneProjector {
    pub bx: BoxSet,
    pub band: Option<BandSet>,
    pub tol: f64,
    pub max_iter: usize,
    /// Coordinates the model-step vectors live in.
    pub squared_input: bool,
}

impl VelocityPlaneProjector {
    fn project_velocity(&self, pt: Point) -> Point {
        match &self.band {
            None => project_box(pt, &self.bx),
            Some(band) => project_intersection(pt, &self.bx, band, self.tol, self.max_iter).0,
        }
    }
}

impl PlaneProjector for VelocityPlaneProjector {
    fn project(&self, pt: Point) -> Point {
        if self.squared_input {
            // squared velocities: project (√m_p, √m_s), square back
            let v = (pt.0.max(0.0).sqrt(), pt.1.max(0.0).sqrt());
            let q = self.project_velocity(v);
            (q.0 * q.0, q.1 * q.1)
        } else {
            self.project_velocity(pt)
        }
    }
}

/// Identity projector (unconstrained plane).
pub struct NoConstraint;

impl PlaneProjector for NoConstraint {
    fn project(&self, pt: Point) -> Point {
        pt
    }

    fn infeasibility(&self, _pt: Point) -> f64 {
        0.0
    }
}

/// Convergence report for the constrained model step.
#[derive(Debug, Clone, Copy)]
pub struct ConstrainedStepInfo {
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: f64,
    pub gamma: f64,
}

/// Constrained least-squares model step: minimize ‖L m − y‖² subject to
/// per-cell membership of the projector's set, via the split
///
/// ```text
/// m ← (LᴴL + γ I)⁻¹ (Lᴴ y + γ (p + q))
/// p ← P_C(m − q)
/// q ← q + p − m
/// ```
///
/// Returns the feasible iterate p. The per-cell blocks keep every solve
/// a 2×2 closed form.
pub fn constrained_model_step(
    sys: &NormalSystem,
    projector: &dyn PlaneProjector,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ModelUpdateResult, ConstrainedStepInfo)> {
    if !(gamma > 0.0) {
        return Err(EfwiError::InvalidConfig("gamma must be positive".into()));
    }
    let n = sys.n();
    let h_max = sys
        .h11
        .iter()
        .zip(&sys.h22)
        .map(|(&a, &b)| a.max(b))
        .fold(0.0f64, f64::max);
    let eps = TIKHONOV_REL_FLOOR * h_max;

    // start from the projected unconstrained solution
    let unconstrained = crate::update::solve_model_step(sys)?;
    let mut p: Vec<Point> = (0..n)
        .map(|i| projector.project((unconstrained.m1[i], unconstrained.m2[i])))
        .collect();
    let mut q: Vec<Point> = vec![(0.0, 0.0); n];
    let mut m: Vec<Point> = vec![(0.0, 0.0); n];

    let mut info = ConstrainedStepInfo {
        iterations: 0,
        converged: false,
        final_gap: f64::INFINITY,
        gamma,
    };
    for it in 1..=max_iter {
        // m-update: per-cell 2×2 Hermitian solve with +γ I
        let mut floored = 0usize;
        for i in 0..n {
            let mut h11 = sys.h11[i] + gamma;
            let mut h22 = sys.h22[i] + gamma;
            let h12 = sys.h12[i];
            let mut det = h11 * h22 - h12.norm_sqr();
            if det < eps * eps {
                h11 += eps;
                h22 += eps;
                det = h11 * h22 - h12.norm_sqr();
                floored += 1;
            }
            let rhs1 = sys.g1[i] + gamma * (p[i].0 + q[i].0);
            let rhs2 = sys.g2[i] + gamma * (p[i].1 + q[i].1);
            let m1 = ((rhs1 * h22 - h12 * rhs2) / det).re;
            let m2 = ((rhs2 * h11 - h12.conj() * rhs1) / det).re;
            m[i] = (m1, m2);
        }
        let _ = floored;
        // p-update and dual
        let mut gap_sq = 0.0;
        let mut m_sq = 0.0;
        for i in 0..n {
            let target = (m[i].0 - q[i].0, m[i].1 - q[i].1);
            let pi = projector.project(target);
            q[i] = (q[i].0 + pi.0 - m[i].0, q[i].1 + pi.1 - m[i].1);
            gap_sq += (pi.0 - m[i].0).powi(2) + (pi.1 - m[i].1).powi(2);
            m_sq += m[i].0.powi(2) + m[i].1.powi(2);
            p[i] = pi;
        }
        info.iterations = it;
        info.final_gap = gap_sq.sqrt();
        if gap_sq.sqrt() <= tol * m_sq.sqrt().max(f64::MIN_POSITIVE) {
            info.converged = true;
            break;
        }
    }

    // report the feasible iterate
    let mut result = unconstrained;
    for i in 0..n {
        result.m1[i] = p[i].0;
        result.m2[i] = p[i].1;
        // the split solution no longer decomposes into Hessian blocks
        result.m1_diag[i] = p[i].0;
        result.m1_off[i] = 0.0;
        result.m2_diag[i] = p[i].1;
        result.m2_off[i] = 0.0;
    }
    let mut residual_sq = sys.y_norm_sq;
    for i in 0..n {
        let (m1, m2) = (result.m1[i], result.m2[i]);
        let quad =
            sys.h11[i] * m1 * m1 + 2.0 * (sys.h12[i] * m2).re * m1 + sys.h22[i] * m2 * m2;
        residual_sq += quad - 2.0 * (m1 * sys.g1[i].re + m2 * sys.g2[i].re);
    }
    result.residual_norm = residual_sq.max(0.0).sqrt();
    Ok((result, info))
}
