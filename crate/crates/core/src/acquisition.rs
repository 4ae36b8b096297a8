//! Receiver sampling, source terms, and the source spectrum.
//!
//! Stacked vectors are ordered (u_x; u_z): the horizontal component of
//! node `i` sits at row `i`, the vertical component at row `n + i`.

use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};
use crate::grid::GridGeometry;
use crate::linalg::C64;

/// Nearest-node receiver sampling P, block diagonal over the two
/// displacement components: row r (< n_r) reads u_x at receiver r,
/// row n_r + r reads u_z there.
#[derive(Debug, Clone)]
pub struct SamplingOperator {
    grid: GridGeometry,
    nodes: Vec<usize>,
}

pub fn build_sampling_operator(
    receivers: &[(f64, f64)],
    grid: GridGeometry,
) -> Result<SamplingOperator> {
    let mut nodes = Vec::with_capacity(receivers.len());
    for &(z, x) in receivers {
        let (iz, ix) = grid.nearest_node(z, x)?;
        nodes.push(grid.idx(iz, ix));
    }
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if nodes[i] == nodes[j] {
                return Err(EfwiError::DuplicateReceiverNode(i, j));
            }
        }
    }
    Ok(SamplingOperator { grid, nodes })
}

impl SamplingOperator {
    pub fn n_receivers(&self) -> usize {
        self.nodes.len()
    }

    pub fn grid(&self) -> GridGeometry {
        self.grid
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// d = P u, length 2 n_r from a length 2 n wavefield.
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let n = self.grid.n();
        assert_eq!(u.len(), 2 * n, "sampling: wavefield length mismatch");
        let mut d = Vec::with_capacity(2 * self.nodes.len());
        for &node in &self.nodes {
            d.push(u[node]);
        }
        for &node in &self.nodes {
            d.push(u[n + node]);
        }
        d
    }

    /// u = Pᵀ d, scattering receiver values back onto the grid.
    pub fn apply_transpose(&self, d: &[C64]) -> Vec<C64> {
        let n = self.grid.n();
        let n_r = self.nodes.len();
        assert_eq!(d.len(), 2 * n_r, "sampling: data length mismatch");
        let mut u = vec![C64::ZERO; 2 * n];
        for (r, &node) in self.nodes.iter().enumerate() {
            u[node] += d[r];
            u[n + node] += d[n_r + r];
        }
        u
    }

    /// Diagonal of PᵀP: 1 at sampled rows, 0 elsewhere.
    pub fn ptp_diagonal(&self) -> Vec<f64> {
        let n = self.grid.n();
        let mut diag = vec![0.0; 2 * n];
        for &node in &self.nodes {
            diag[node] = 1.0;
            diag[n + node] = 1.0;
        }
        diag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceComponent {
    Horizontal,
    Vertical,
}

/// Point forces at grid nodes with per-source complex amplitudes.
/// Column j of the assembled 2n × n_s matrix B is source j.
#[derive(Debug, Clone)]
pub struct SourceSet {
    grid: GridGeometry,
    /// (stacked row, amplitude) entries per source.
    entries: Vec<Vec<(usize, C64)>>,
    positions: Vec<(f64, f64)>,
}

impl SourceSet {
    /// Single-component point forces, one per position.
    pub fn point_forces(
        grid: GridGeometry,
        positions: &[(f64, f64)],
        component: ForceComponent,
        amplitude: C64,
    ) -> Result<Self> {
        let n = grid.n();
        let mut entries = Vec::with_capacity(positions.len());
        for &(z, x) in positions {
            let (iz, ix) = grid.nearest_node(z, x)?;
            let node = grid.idx(iz, ix);
            let row = match component {
                ForceComponent::Horizontal => node,
                ForceComponent::Vertical => n + node,
            };
            entries.push(vec![(row, amplitude)]);
        }
        Ok(Self {
            grid,
            entries,
            positions: positions.to_vec(),
        })
    }

    /// Arbitrary per-source entry lists (already in stacked rows).
    pub fn from_entries(grid: GridGeometry, entries: Vec<Vec<(usize, C64)>>) -> Result<Self> {
        for col in &entries {
            for &(row, _) in col {
                if row >= 2 * grid.n() {
                    return Err(EfwiError::DimensionMismatch(format!(
                        "source row {row} outside stacked length {}",
                        2 * grid.n()
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            entries,
            positions: Vec::new(),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.entries.len()
    }

    pub fn grid(&self) -> GridGeometry {
        self.grid
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    /// Dense column b_j.
    pub fn column(&self, j: usize) -> Vec<C64> {
        let mut b = vec![C64::ZERO; 2 * self.grid.n()];
        for &(row, amp) in &self.entries[j] {
            b[row] += amp;
        }
        b
    }

    /// Dense 2n × n_s assembly, column per source.
    pub fn dense_columns(&self) -> Vec<Vec<C64>> {
        (0..self.n_sources()).map(|j| self.column(j)).collect()
    }

    /// Same sources with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            grid: self.grid,
            entries: self
                .entries
                .iter()
                .map(|col| col.iter().map(|&(r, a)| (r, a * factor)).collect())
                .collect(),
            positions: self.positions.clone(),
        }
    }
}

/// Zero-phase Ricker amplitude spectrum at frequency `f` for dominant
/// frequency `f0`: W(f) = 2 f² / (√π f0³) · exp(−f²/f0²).
pub fn ricker_spectrum(f0: f64, f: f64) -> C64 {
    assert!(f0 > 0.0, "ricker_spectrum requires f0 > 0");
    let w = 2.0 * f * f / (std::f64::consts::PI.sqrt() * f0.powi(3)) * (-(f * f) / (f0 * f0)).exp();
    C64::new(w, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::new(5, 6, 10.0, 10.0).unwrap()
    }

    #[test]
    fn receiver_on_node_selects_that_node() {
        let g = grid();
        let p = build_sampling_operator(&[(20.0, 30.0), (0.0, 0.0)], g).unwrap();
        assert_eq!(p.nodes()[0], g.idx(2, 3));
        assert_eq!(p.nodes()[1], 0);

        // P u equals direct indexing
        let n = g.n();
        let u: Vec<C64> = (0..2 * n).map(|i| C64::new(i as f64, -(i as f64))).collect();
        let d = p.apply(&u);
        assert_eq!(d[0], u[g.idx(2, 3)]);
        assert_eq!(d[2], u[n + g.idx(2, 3)]);
        assert_eq!(d.len(), 4);
    }

    #[test]
    fn ptp_diagonal_counts_rows() {
        let g = grid();
        let p = build_sampling_operator(&[(0.0, 0.0), (10.0, 10.0), (40.0, 50.0)], g).unwrap();
        let diag = p.ptp_diagonal();
        let ones = diag.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(ones, 2 * p.n_receivers());
        assert!(diag.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn rejects_outside_and_duplicate_receivers() {
        let g = grid();
        assert!(build_sampling_operator(&[(100.0, 0.0)], g).is_err());
        // two receivers rounding to the same node
        assert!(matches!(
            build_sampling_operator(&[(0.0, 0.0), (2.0, 3.0)], g),
            Err(EfwiError::DuplicateReceiverNode(0, 1))
        ));
    }

    #[test]
    fn vertical_force_lands_in_z_block() {
        let g = grid();
        let s = SourceSet::point_forces(
            g,
            &[(20.0, 20.0)],
            ForceComponent::Vertical,
            C64::new(2.0, 0.0),
        )
        .unwrap();
        let b = s.column(0);
        let node = g.idx(2, 2);
        assert_eq!(b[g.n() + node], C64::new(2.0, 0.0));
        assert!(b[..g.n()].iter().all(|&v| v == C64::ZERO));
    }

    #[test]
    fn ricker_shape() {
        assert_eq!(ricker_spectrum(10.0, 0.0), C64::ZERO);
        for f in [1.0, 5.0, 10.0, 25.0] {
            assert!(ricker_spectrum(10.0, f).re > 0.0);
        }
        // argmax over a fine scan sits at f0
        let f0 = 10.0;
        let mut best = (0.0, 0.0);
        let mut f = 0.0;
        while f <= 40.0 {
            let w = ricker_spectrum(f0, f).re;
            if w > best.1 {
                best = (f, w);
            }
            f += 0.01;
        }
        assert!((best.0 - f0).abs() <= 0.01 + 1e-12, "argmax at {}", best.0);
    }
}
