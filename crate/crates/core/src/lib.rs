//! Frequency-domain elastic full-waveform inversion on 2D grids.
//!
//! The crate models wave propagation with a sparse complex impedance
//! matrix, reconstructs data-assimilated wavefields, and updates the
//! material model through closed-form blocky least squares inside an
//! ADMM outer loop with damped dual ascent. Convex physical constraints,
//! randomized source sketching, multiscale frequency continuation, and
//! penalty-only / reduced-space baselines are included, along with the
//! file formats and scenario generators used by the command line tool.

pub mod acquisition;
pub mod boundary;
pub mod constraints;
pub mod config;
pub mod dense;
pub mod driver;
pub mod error;
pub mod field;
pub mod impedance;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod scattering;
pub mod schedule;
pub mod sketch;
pub mod update;
pub mod stencil;
pub mod wavefield;

pub use boundary::{BoundarySpec, EdgeKind};
pub use error::{EfwiError, Result};
pub use field::{ParameterField, Unit};
pub use grid::GridGeometry;
pub use model::{
    brocher_vs_from_vp, lame_from_velocities, poisson_ratio, velocities_from_lame, ElasticModel,
    Parameterization,
};
pub use stencil::{build_difference_operators, DifferenceOperators, OperatorBundle};
