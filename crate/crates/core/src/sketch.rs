//! Randomized source sketching: replace the n_s physical sources with q
//! random mixtures S = √(n_s/q) · R · C · D, where C is the orthonormal
//! type-II DCT, D a random ±1 diagonal, and R a uniform selection of q
//! distinct rows. E[SᵀS] = I over draws, and S Sᵀ = (n_s/q) I exactly,
//! so the sketched misfit is an unbiased surrogate when the same S hits
//! sources, observed data, and dual fields within an iteration.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{EfwiError, Result};
use crate::linalg::C64;

/// One drawn sketching operator (q × n_s, applied from the right to
/// column collections).
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    q: usize,
    n_s: usize,
    rows: Vec<usize>,
    signs: Vec<f64>,
    seed: u64,
    scale: f64,
}

/// Orthonormal DCT-II entry C[k, j] for size n.
fn dct2_entry(k: usize, j: usize, n: usize) -> f64 {
    let norm = if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    };
    norm * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n as f64)).cos()
}

/// Draws a sketch with q distinct DCT rows and a fresh sign flip,
/// deterministic in `seed`.
pub fn draw_sketch(n_s: usize, q: usize, seed: u64) -> Result<SketchOperator> {
    if q == 0 || n_s == 0 || q > n_s {
        return Err(EfwiError::SketchTooLarge { q, ns: n_s });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // uniform q-subset without replacement via partial Fisher-Yates
    let mut pool: Vec<usize> = (0..n_s).collect();
    for i in 0..q {
        let j = rng.random_range(i..n_s);
        pool.swap(i, j);
    }
    let mut rows = pool[..q].to_vec();
    rows.sort_unstable();
    let signs: Vec<f64> = (0..n_s)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    Ok(SketchOperator {
        q,
        n_s,
        rows,
        signs,
        seed,
        scale: (n_s as f64 / q as f64).sqrt(),
    })
}

impl SketchOperator {
    /// Full orthonormal transform with the sign flip disabled; with
    /// q = n_s this makes SᵀS = I exactly.
    pub fn full_orthonormal(n_s: usize) -> Result<SketchOperator> {
        if n_s == 0 {
            return Err(EfwiError::SketchTooLarge { q: 0, ns: 0 });
        }
        Ok(SketchOperator {
            q: n_s,
            n_s,
            rows: (0..n_s).collect(),
            signs: vec![1.0; n_s],
            seed: 0,
            scale: 1.0,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_sources(&self) -> usize {
        self.n_s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// S[i, j] = scale · C[rows[i], j] · signs[j].
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.scale * dct2_entry(self.rows[i], j, self.n_s) * self.signs[j]
    }

    /// Dense SᵀS (n_s × n_s), for the statistical identity checks.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n_s]; self.n_s];
        for a in 0..self.n_s {
            for b in 0..self.n_s {
                g[a][b] = (0..self.q).map(|i| self.entry(i, a) * self.entry(i, b)).sum();
            }
        }
        g
    }
}

/// Applies the sketch to a collection of columns: out_i = Σ_j S[i,j] col_j.
/// The same operator must hit the source matrix, the observed data, and
/// the dual fields within one iteration so the sketched misfit aligns.
pub fn apply_sketch(s: &SketchOperator, columns: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    if columns.len() != s.n_s {
        return Err(EfwiError::DimensionMismatch(format!(
            "sketch expects {} columns, got {}",
            s.n_s,
            columns.len()
        )));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    let mut out = vec![vec![C64::ZERO; rows]; s.q];
    for (j, col) in columns.iter().enumerate() {
        if col.len() != rows {
            return Err(EfwiError::DimensionMismatch(
                "ragged column collection".into(),
            ));
        }
        for i in 0..s.q {
            let w = s.entry(i, j);
            if w == 0.0 {
                continue;
            }
            for (o, v) in out[i].iter_mut().zip(col) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

/// Least-norm lift of sketched columns back to source space:
/// M ≈ (q/n_s) · M̃ · S. Exact when q = n_s and S is orthonormal.
pub fn lift_sketch(s: &SketchOperator, sketched: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    if sketched.len() != s.q {
        return Err(EfwiError::DimensionMismatch(format!(
            "lift expects {} sketched columns, got {}",
            s.q,
            sketched.len()
        )));
    }
    let rows = sketched.first().map_or(0, |c| c.len());
    let factor = s.q as f64 / s.n_s as f64;
    let mut out = vec![vec![C64::ZERO; rows]; s.n_s];
    for (i, col) in sketched.iter().enumerate() {
        for j in 0..s.n_s {
            let w = factor * s.entry(i, j);
            if w == 0.0 {
                continue;
            }
            for (o, v) in out[j].iter_mut().zip(col) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

/// PDE-solve accounting for a sketched inversion: each phase runs
/// `iterations` outer iterations against `active_sources` reconstruction
/// solves per iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SketchPhase {
    pub iterations: usize,
    pub active_sources: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveAccounting {
    /// Total reconstruction solves across all phases.
    pub total_solves: usize,
    /// Solves the same schedule would need with the full source set.
    pub full_source_solves: usize,
    /// Steady-state speed-up (1 − q/n_s) × 100 using the final phase's q.
    pub speedup_percent: f64,
}

pub fn pde_solve_accounting(phases: &[SketchPhase], n_s: usize) -> SolveAccounting {
    let total_solves = phases
        .iter()
        .map(|p| p.iterations * p.active_sources)
        .sum();
    let full_source_solves = phases.iter().map(|p| p.iterations * n_s).sum();
    let q_final = phases.last().map_or(n_s, |p| p.active_sources);
    SolveAccounting {
        total_solves,
        full_source_solves,
        speedup_percent: (1.0 - q_final as f64 / n_s as f64) * 100.0,
    }
}
