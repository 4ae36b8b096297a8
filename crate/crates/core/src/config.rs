//! Inversion run configuration.

use serde::{Deserialize, Serialize};

use crate::constraints::{BandSet, BoxSet, HalfSpace, Sense, VelocityPlaneProjector};
use crate::error::{EfwiError, Result};
use crate::model::Parameterization;
use crate::schedule::FrequencySchedule;
use crate::sketch::SketchPhase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Full method: augmented wavefields, model step, damped dual ascent.
    Admm,
    /// Penalty-only variant: duals pinned at zero.
    Wri,
    /// Reduced-space baseline: adjoint-state gradient descent.
    ReducedFwi,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Admm => "admm",
            Mode::Wri => "wri",
            Mode::ReducedFwi => "reduced-fwi",
        })
    }
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "admm" => Mode::Admm,
            "wri" => Mode::Wri,
            "reduced-fwi" | "fwi" => Mode::ReducedFwi,
            other => {
                return Err(EfwiError::InvalidConfig(format!("unknown mode `{other}`")))
            }
        })
    }
}

/// Box bounds and two line triples in the (V_P, V_S) plane [m/s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub vp_min: f64,
    pub vp_max: f64,
    pub vs_min: f64,
    pub vs_max: f64,
    /// lower line (a, b, c): a·V_P + b·V_S ≥ c
    pub lower_line: Option<(f64, f64, f64)>,
    /// upper line (a, b, c): a·V_P + b·V_S ≤ c
    pub upper_line: Option<(f64, f64, f64)>,
}

impl ConstraintSpec {
    pub fn build_projector(&self, parameterization: Parameterization) -> Result<VelocityPlaneProjector> {
        let bx = BoxSet::new(self.vp_min, self.vp_max, self.vs_min, self.vs_max)?;
        let band = match (self.lower_line, self.upper_line) {
            (None, None) => None,
            (Some(lo), Some(up)) => {
                let band = BandSet::new(
                    HalfSpace::new(lo.0, lo.1, lo.2, Sense::Ge)?,
                    HalfSpace::new(up.0, up.1, up.2, Sense::Le)?,
                )?;
                band.validate_against(&bx)?;
                Some(band)
            }
            _ => {
                return Err(EfwiError::InvalidConfig(
                    "constraint band needs both lines".into(),
                ))
            }
        };
        let squared_input = match parameterization {
            Parameterization::SquaredVelocity => true,
            Parameterization::Velocity => false,
            Parameterization::Lame => {
                return Err(EfwiError::InvalidConfig(
                    "velocity-plane constraints need a velocity-type parameterization".into(),
                ))
            }
        };
        Ok(VelocityPlaneProjector {
            bx,
            band,
            tol: 1e-10,
            max_iter: 500,
            squared_input,
        })
    }
}

/// Source sketching plan: consecutive phases of (iterations, q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchSpec {
    pub phases: Vec<SketchPhase>,
}

impl SketchSpec {
    /// q active at global iteration `k` (0-based); the last phase
    /// extends indefinitely.
    pub fn q_at(&self, k: usize) -> Option<usize> {
        let mut offset = 0;
        for phase in &self.phases {
            if k < offset + phase.iterations {
                return Some(phase.active_sources);
            }
            offset += phase.iterations;
        }
        self.phases.last().map(|p| p.active_sources)
    }
}

/// Everything the driver needs besides the physical scenario.
#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub mode: Mode,
    /// Penalty weight β on the wave-equation term (applied to the
    /// row-normalized operator, see the driver's equation scaling).
    pub beta: f64,
    /// Dual damping factor ξ; 0 recovers the undamped update.
    pub xi: f64,
    pub schedule: FrequencySchedule,
    pub parameterization: Parameterization,
    pub constraints: Option<ConstraintSpec>,
    pub sketch: Option<SketchSpec>,
    pub seed: u64,
    /// Constrained-step penalty; defaults to trace(LᴴL)/(2n) when unset.
    pub gamma: Option<f64>,
    /// Constrained-step / projection tolerance.
    pub constraint_tol: f64,
    pub constraint_max_iter: usize,
    /// Gauss-Newton initial step length for the velocity parameterization.
    pub gn_step_length: f64,
}

impl InversionConfig {
    pub fn new(mode: Mode, schedule: FrequencySchedule) -> Self {
        Self {
            mode,
            beta: 1e6,
            xi: 4.0,
            schedule,
            parameterization: Parameterization::SquaredVelocity,
            constraints: None,
            sketch: None,
            seed: 0,
            gamma: None,
            constraint_tol: 1e-6,
            constraint_max_iter: 200,
            gn_step_length: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(EfwiError::InvalidConfig("beta must be positive".into()));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(EfwiError::InvalidConfig("xi must be non-negative".into()));
        }
        if !(self.gn_step_length > 0.0 && self.gn_step_length <= 1.0) {
            return Err(EfwiError::InvalidConfig(
                "gn_step_length must lie in (0, 1]".into(),
            ));
        }
        if let Some(sketch) = &self.sketch {
            if sketch.phases.is_empty() {
                return Err(EfwiError::InvalidConfig("empty sketch plan".into()));
            }
        }
        Ok(())
    }
}
