use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};
use crate::grid::GridGeometry;
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    /// Perfectly matched layer: complex coordinate stretching
    /// 1/(1 + i d/ω) with a quadratic damping profile d.
    Absorbing,
    /// Stress-free condition, second-order one-sided. Top edge only.
    FreeSurface,
}

/// Boundary treatment per edge plus the shared PML parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub top: EdgeKind,
    pub bottom: EdgeKind,
    pub left: EdgeKind,
    pub right: EdgeKind,
    /// PML thickness in cells on each absorbing edge.
    pub pml_width: usize,
    /// Peak damping d_max [1/s] at the outer PML boundary.
    pub pml_max_damping: f64,
}

impl BoundarySpec {
    /// Absorbing on all four edges.
    pub fn absorbing(pml_width: usize, pml_max_damping: f64) -> Self {
        Self {
            top: EdgeKind::Absorbing,
            bottom: EdgeKind::Absorbing,
            left: EdgeKind::Absorbing,
            right: EdgeKind::Absorbing,
            pml_width,
            pml_max_damping,
        }
    }

    /// Free surface on top, absorbing elsewhere.
    pub fn free_surface_top(pml_width: usize, pml_max_damping: f64) -> Self {
        Self {
            top: EdgeKind::FreeSurface,
            ..Self::absorbing(pml_width, pml_max_damping)
        }
    }

    /// Peak damping for a quadratic profile targeting reflection
    /// coefficient `r` at normal incidence: d_max = 3 v ln(1/r) / (2 L).
    pub fn damping_for(v_ref: f64, pml_width: usize, h: f64, r: f64) -> f64 {
        if pml_width == 0 {
            return 0.0;
        }
        let l = pml_width as f64 * h;
        3.0 * v_ref * (1.0 / r).ln() / (2.0 * l)
    }

    pub fn validate(&self, grid: &GridGeometry) -> Result<()> {
        for (edge, name) in [
            (self.bottom, "bottom"),
            (self.left, "left"),
            (self.right, "right"),
        ] {
            if edge == EdgeKind::FreeSurface {
                return Err(EfwiError::InvalidBoundary(format!(
                    "free surface is only supported on the top edge, not {name}"
                )));
            }
        }
        if self.pml_max_damping < 0.0 || !self.pml_max_damping.is_finite() {
            return Err(EfwiError::InvalidBoundary(
                "pml_max_damping must be finite and non-negative".into(),
            ));
        }
        if 2 * self.pml_width >= grid.nz.min(grid.nx) {
            return Err(EfwiError::InvalidBoundary(format!(
                "pml width {} leaves no interior on a {}x{} grid",
                self.pml_width, grid.nz, grid.nx
            )));
        }
        Ok(())
    }

    pub fn has_free_surface_top(&self) -> bool {
        self.top == EdgeKind::FreeSurface
    }
}

/// Inverse stretch factors 1/s along one axis, at integer nodes and at
/// half nodes (k + 1/2). `low_abs`/`high_abs` select which end carries a
/// PML; `s = 1 + i d(ℓ)/ω` with `d(ℓ) = d_max (ℓ/L)²` and ℓ the depth
/// into the layer.
pub fn inv_stretch_profile(
    n: usize,
    h: f64,
    low_abs: bool,
    high_abs: bool,
    width: usize,
    d_max: f64,
    omega: f64,
) -> (Vec<C64>, Vec<C64>) {
    let damping = |pos: f64| -> f64 {
        if width == 0 || d_max == 0.0 {
            return 0.0;
        }
        let l = width as f64 * h;
        let mut d = 0.0;
        if low_abs && pos < width as f64 {
            let depth = (width as f64 - pos) * h;
            d += d_max * (depth / l).powi(2);
        }
        let high_start = (n - 1 - width) as f64;
        if high_abs && pos > high_start {
            let depth = (pos - high_start) * h;
            d += d_max * (depth / l).powi(2);
        }
        d
    };
    let inv_s = |pos: f64| -> C64 {
        let s = C64::new(1.0, damping(pos) / omega);
        C64::new(1.0, 0.0) / s
    };
    let nodes = (0..n).map(|i| inv_s(i as f64)).collect();
    let halves = (0..n - 1).map(|i| inv_s(i as f64 + 0.5)).collect();
    (nodes, halves)
}
