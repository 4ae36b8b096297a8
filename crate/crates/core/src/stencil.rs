//! Second-order finite-difference operators on the regular grid.
//!
//! All operators are built from 1D rows: centered stencils in the
//! interior, one-sided closures on the edges (the closest interior
//! stencil for second derivatives, second-order one-sided for first
//! derivatives). The mixed derivative is the tensor product of the two
//! first-derivative operators, so ∂xz = ∂zx by construction.
//!
//! [`OperatorBundle`] carries the same operators with PML coordinate
//! stretching folded in; with zero PML width it reduces entry-for-entry
//! to the plain operators.

use crate::boundary::{inv_stretch_profile, BoundarySpec, EdgeKind};
use crate::error::Result;
use crate::grid::GridGeometry;
use crate::linalg::{C64, CsrMatrix};

const ONE: C64 = C64::new(1.0, 0.0);

/// 1D second-derivative row in units of 1/h², with the stretch factors
/// `inv_s` at nodes and half nodes. Edge rows reuse the nearest interior
/// stencil (one-sided closure).
fn d2_row(
    n: usize,
    i: usize,
    inv_s_node: &[C64],
    inv_s_half: &[C64],
    out: &mut Vec<(usize, C64)>,
) {
    let c = i.clamp(1, n - 2);
    let w_lo = inv_s_half[c - 1];
    let w_hi = inv_s_half[c];
    let scale = inv_s_node[i];
    out.push((c - 1, scale * w_lo));
    out.push((c, -scale * (w_lo + w_hi)));
    out.push((c + 1, scale * w_hi));
}

/// 1D first-derivative row in units of 1/(2h): centered in the interior,
/// second-order one-sided on the edges.
fn d1_row(n: usize, i: usize, inv_s_node: &[C64], out: &mut Vec<(usize, C64)>) {
    let scale = inv_s_node[i];
    if i == 0 {
        out.push((0, scale * C64::new(-3.0, 0.0)));
        out.push((1, scale * C64::new(4.0, 0.0)));
        out.push((2, scale * C64::new(-1.0, 0.0)));
    } else if i == n - 1 {
        out.push((n - 3, scale * ONE));
        out.push((n - 2, scale * C64::new(-4.0, 0.0)));
        out.push((n - 1, scale * C64::new(3.0, 0.0)));
    } else {
        out.push((i - 1, -scale));
        out.push((i + 1, scale));
    }
}

struct AxisProfiles {
    z_nodes: Vec<C64>,
    z_halves: Vec<C64>,
    x_nodes: Vec<C64>,
    x_halves: Vec<C64>,
}

impl AxisProfiles {
    fn unit(grid: &GridGeometry) -> Self {
        Self {
            z_nodes: vec![ONE; grid.nz],
            z_halves: vec![ONE; grid.nz - 1],
            x_nodes: vec![ONE; grid.nx],
            x_halves: vec![ONE; grid.nx - 1],
        }
    }

    fn for_boundary(grid: &GridGeometry, bc: &BoundarySpec, omega: f64) -> Self {
        let (z_nodes, z_halves) = inv_stretch_profile(
            grid.nz,
            grid.dz,
            bc.top == EdgeKind::Absorbing,
            bc.bottom == EdgeKind::Absorbing,
            bc.pml_width,
            bc.pml_max_damping,
            omega,
        );
        let (x_nodes, x_halves) = inv_stretch_profile(
            grid.nx,
            grid.dx,
            bc.left == EdgeKind::Absorbing,
            bc.right == EdgeKind::Absorbing,
            bc.pml_width,
            bc.pml_max_damping,
            omega,
        );
        Self {
            z_nodes,
            z_halves,
            x_nodes,
            x_halves,
        }
    }
}

fn build_dzz(grid: &GridGeometry, p: &AxisProfiles) -> CsrMatrix {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.dz * grid.dz);
    let mut buf = Vec::with_capacity(3);
    CsrMatrix::from_rows(n, n, |row, out| {
        let (iz, ix) = grid.iz_ix(row);
        buf.clear();
        d2_row(grid.nz, iz, &p.z_nodes, &p.z_halves, &mut buf);
        for &(jz, w) in &buf {
            out.push((grid.idx(jz, ix), w * inv_h2));
        }
    })
}

fn build_dxx(grid: &GridGeometry, p: &AxisProfiles) -> CsrMatrix {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.dx * grid.dx);
    let mut buf = Vec::with_capacity(3);
    CsrMatrix::from_rows(n, n, |row, out| {
        let (iz, ix) = grid.iz_ix(row);
        buf.clear();
        d2_row(grid.nx, ix, &p.x_nodes, &p.x_halves, &mut buf);
        for &(jx, w) in &buf {
            out.push((grid.idx(iz, jx), w * inv_h2));
        }
    })
}

fn build_dxz(grid: &GridGeometry, p: &AxisProfiles) -> CsrMatrix {
    let n = grid.n();
    let inv_h = 1.0 / (2.0 * grid.dx * 2.0 * grid.dz);
    let mut bx = Vec::with_capacity(3);
    let mut bz = Vec::with_capacity(3);
    CsrMatrix::from_rows(n, n, |row, out| {
        let (iz, ix) = grid.iz_ix(row);
        bx.clear();
        bz.clear();
        d1_row(grid.nx, ix, &p.x_nodes, &mut bx);
        d1_row(grid.nz, iz, &p.z_nodes, &mut bz);
        for &(jx, wx) in &bx {
            for &(jz, wz) in &bz {
                out.push((grid.idx(jz, jx), wx * wz * inv_h));
            }
        }
    })
}

fn build_dz1(grid: &GridGeometry, p: &AxisProfiles) -> CsrMatrix {
    let n = grid.n();
    let inv_h = 1.0 / (2.0 * grid.dz);
    let mut buf = Vec::with_capacity(3);
    CsrMatrix::from_rows(n, n, |row, out| {
        let (iz, ix) = grid.iz_ix(row);
        buf.clear();
        d1_row(grid.nz, iz, &p.z_nodes, &mut buf);
        for &(jz, w) in &buf {
            out.push((grid.idx(jz, ix), w * inv_h));
        }
    })
}

fn build_dx1(grid: &GridGeometry, p: &AxisProfiles) -> CsrMatrix {
    let n = grid.n();
    let inv_h = 1.0 / (2.0 * grid.dx);
    let mut buf = Vec::with_capacity(3);
    CsrMatrix::from_rows(n, n, |row, out| {
        let (iz, ix) = grid.iz_ix(row);
        buf.clear();
        d1_row(grid.nx, ix, &p.x_nodes, &mut buf);
        for &(jx, w) in &buf {
            out.push((grid.idx(iz, jx), w * inv_h));
        }
    })
}

/// Plain (unstretched) difference operators ∂xx, ∂zz, ∂xz on one grid.
/// Entries are real-valued.
#[derive(Debug, Clone)]
pub struct DifferenceOperators {
    pub dxx: CsrMatrix,
    pub dzz: CsrMatrix,
    pub dxz: CsrMatrix,
    grid: GridGeometry,
}

impl DifferenceOperators {
    pub fn grid(&self) -> GridGeometry {
        self.grid
    }
}

pub fn build_difference_operators(grid: GridGeometry) -> DifferenceOperators {
    let p = AxisProfiles::unit(&grid);
    DifferenceOperators {
        dxx: build_dxx(&grid, &p),
        dzz: build_dzz(&grid, &p),
        dxz: build_dxz(&grid, &p),
        grid,
    }
}

/// Difference operators at one frequency with the boundary treatment
/// folded in: PML stretching on absorbing edges, plus the first
/// derivatives needed for free-surface rows.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub dxx: CsrMatrix,
    pub dzz: CsrMatrix,
    pub dxz: CsrMatrix,
    pub dx1: CsrMatrix,
    pub dz1: CsrMatrix,
    grid: GridGeometry,
    bc: BoundarySpec,
    omega: f64,
}

impl OperatorBundle {
    pub fn new(grid: GridGeometry, bc: BoundarySpec, omega: f64) -> Result<Self> {
        bc.validate(&grid)?;
        let p = AxisProfiles::for_boundary(&grid, &bc, omega);
        Ok(Self {
            dxx: build_dxx(&grid, &p),
            dzz: build_dzz(&grid, &p),
            dxz: build_dxz(&grid, &p),
            dx1: build_dx1(&grid, &p),
            dz1: build_dz1(&grid, &p),
            grid,
            bc,
            omega,
        })
    }

    pub fn grid(&self) -> GridGeometry {
        self.grid
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.bc
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn free_surface_top(&self) -> bool {
        self.bc.has_free_surface_top()
    }

    /// Row scale applied to free-surface rows so traction rows sit at
    /// the same magnitude as the second-derivative rows they replace.
    pub fn free_surface_row_scale(&self) -> f64 {
        1.0 / self.grid.dx
    }
}
