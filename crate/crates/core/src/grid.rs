use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};

/// Regular 2D grid. Fields are stored row-major with z fastest:
/// the flat index of node (iz, ix) is `ix * nz + iz`. This layout is
/// shared by every operator in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    /// Vertical node count.
    pub nz: usize,
    /// Horizontal node count.
    pub nx: usize,
    /// Vertical spacing [m].
    pub dz: f64,
    /// Horizontal spacing [m].
    pub dx: f64,
}

impl GridGeometry {
    pub fn new(nz: usize, nx: usize, dz: f64, dx: f64) -> Result<Self> {
        if nz < 3 || nx < 3 {
            return Err(EfwiError::GridTooSmall {
                need: 3,
                got: nz.min(nx),
            });
        }
        if !(dz > 0.0 && dx > 0.0 && dz.is_finite() && dx.is_finite()) {
            return Err(EfwiError::InvalidSpacing);
        }
        Ok(Self { nz, nx, dz, dx })
    }

    /// Number of model cells per parameter class.
    #[inline]
    pub fn n(&self) -> usize {
        self.nz * self.nx
    }

    #[inline]
    pub fn idx(&self, iz: usize, ix: usize) -> usize {
        debug_assert!(iz < self.nz && ix < self.nx);
        ix * self.nz + iz
    }

    #[inline]
    pub fn iz_ix(&self, idx: usize) -> (usize, usize) {
        (idx % self.nz, idx / self.nz)
    }

    /// Physical extent [m] of the grid: (depth, width).
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.nz - 1) as f64 * self.dz,
            (self.nx - 1) as f64 * self.dx,
        )
    }

    /// Node nearest to a physical position (z, x) measured from the
    /// top-left node. Errors when the position falls outside the grid.
    pub fn nearest_node(&self, z: f64, x: f64) -> Result<(usize, usize)> {
        let (depth, width) = self.extent();
        // Half a cell of slack so positions on the outer node line are accepted.
        if z < -0.5 * self.dz || z > depth + 0.5 * self.dz || x < -0.5 * self.dx || x > width + 0.5 * self.dx
        {
            return Err(EfwiError::OutsideGrid { z, x });
        }
        let iz = (z / self.dz).round().clamp(0.0, (self.nz - 1) as f64) as usize;
        let ix = (x / self.dx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        Ok((iz, ix))
    }

    /// Grid enlarged by `pad` nodes on every side (same spacing).
    pub fn padded(&self, pad: usize) -> Self {
        Self {
            nz: self.nz + 2 * pad,
            nx: self.nx + 2 * pad,
            dz: self.dz,
            dx: self.dx,
        }
    }
}
