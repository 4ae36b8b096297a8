use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};
use crate::grid::GridGeometry;

/// Physical unit tag carried by every parameter field. The Brocher
/// relation is only valid in km/s, so velocity units are kept distinct
/// instead of relying on magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// Pa — Lamé moduli.
    Pascal,
    /// m/s — velocities.
    MetersPerSecond,
    /// km/s — velocities in the Brocher relation's native unit.
    KilometersPerSecond,
    /// (m/s)² — squared velocities.
    SquaredMetersPerSecond,
    /// kg/m³ — mass density.
    KilogramsPerCubicMeter,
    Dimensionless,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::Pascal => "Pa",
            Unit::MetersPerSecond => "m/s",
            Unit::KilometersPerSecond => "km/s",
            Unit::SquaredMetersPerSecond => "(m/s)^2",
            Unit::KilogramsPerCubicMeter => "kg/m^3",
            Unit::Dimensionless => "1",
        };
        f.write_str(s)
    }
}

impl Unit {
    pub fn parse(s: &str) -> Result<Unit> {
        Ok(match s {
            "Pa" => Unit::Pascal,
            "m/s" => Unit::MetersPerSecond,
            "km/s" => Unit::KilometersPerSecond,
            "(m/s)^2" => Unit::SquaredMetersPerSecond,
            "kg/m^3" => Unit::KilogramsPerCubicMeter,
            "1" => Unit::Dimensionless,
            other => {
                return Err(EfwiError::UnitMismatch {
                    expected: "a known unit tag".into(),
                    got: other.into(),
                })
            }
        })
    }
}

/// One scalar value per grid node, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterField {
    grid: GridGeometry,
    unit: Unit,
    values: Vec<f64>,
}

impl ParameterField {
    pub fn new(grid: GridGeometry, unit: Unit, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(EfwiError::DimensionMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(EfwiError::NonFinite(format!("{unit} field")));
        }
        Ok(Self { grid, unit, values })
    }

    pub fn constant(grid: GridGeometry, unit: Unit, value: f64) -> Result<Self> {
        Self::new(grid, unit, vec![value; grid.n()])
    }

    /// Builds a field from a per-node function of (iz, ix).
    pub fn from_fn(
        grid: GridGeometry,
        unit: Unit,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = vec![0.0; grid.n()];
        for ix in 0..grid.nx {
            for iz in 0..grid.nz {
                values[grid.idx(iz, ix)] = f(iz, ix);
            }
        }
        Self::new(grid, unit, values)
    }

    #[inline]
    pub fn grid(&self) -> GridGeometry {
        self.grid
    }

    #[inline]
    pub fn unit(&self) -> Unit {
        self.unit
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, iz: usize, ix: usize) -> f64 {
        self.values[self.grid.idx(iz, ix)]
    }

    pub fn expect_unit(&self, unit: Unit) -> Result<()> {
        if self.unit != unit {
            return Err(EfwiError::UnitMismatch {
                expected: unit.to_string(),
                got: self.unit.to_string(),
            });
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &ParameterField) -> Result<()> {
        if self.grid != other.grid {
            return Err(EfwiError::DimensionMismatch(
                "fields live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Elementwise map producing a field with a new unit tag.
    pub fn map(&self, unit: Unit, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, unit, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two fields on the same grid.
    pub fn zip(
        &self,
        other: &ParameterField,
        unit: Unit,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid, unit, values)
    }

    pub fn to_km_per_s(&self) -> Result<Self> {
        self.expect_unit(Unit::MetersPerSecond)?;
        self.map(Unit::KilometersPerSecond, |v| v * 1e-3)
    }

    pub fn to_m_per_s(&self) -> Result<Self> {
        self.expect_unit(Unit::KilometersPerSecond)?;
        self.map(Unit::MetersPerSecond, |v| v * 1e3)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
