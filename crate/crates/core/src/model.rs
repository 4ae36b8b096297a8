//! Elastic material models and parameterization changes.
//!
//! A model is a pair of parameter fields plus a density field, expressed
//! in one of three equivalent coordinate systems: Lamé moduli (λ, μ),
//! squared velocities (V_P², V_S²), or velocities (V_P, V_S). Density is
//! carried but never inverted.

use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};
use crate::field::{ParameterField, Unit};
use crate::grid::GridGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    /// (λ, μ) in Pa.
    Lame,
    /// (V_P², V_S²) in (m/s)².
    SquaredVelocity,
    /// (V_P, V_S) in m/s.
    Velocity,
}

impl std::fmt::Display for Parameterization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Parameterization::Lame => "lame",
            Parameterization::SquaredVelocity => "squared-velocity",
            Parameterization::Velocity => "velocity",
        };
        f.write_str(s)
    }
}

impl Parameterization {
    pub fn field_unit(&self) -> Unit {
        match self {
            Parameterization::Lame => Unit::Pascal,
            Parameterization::SquaredVelocity => Unit::SquaredMetersPerSecond,
            Parameterization::Velocity => Unit::MetersPerSecond,
        }
    }
}

/// Isotropic elastic medium on a regular grid.
///
/// `field1`/`field2` hold (λ, μ), (V_P², V_S²) or (V_P, V_S) depending on
/// the active parameterization.
#[derive(Debug, Clone)]
pub struct ElasticModel {
    parameterization: Parameterization,
    field1: ParameterField,
    field2: ParameterField,
    rho: ParameterField,
}

impl ElasticModel {
    pub fn new(
        parameterization: Parameterization,
        field1: ParameterField,
        field2: ParameterField,
        rho: ParameterField,
    ) -> Result<Self> {
        field1.same_grid(&field2)?;
        field1.same_grid(&rho)?;
        field1.expect_unit(parameterization.field_unit())?;
        field2.expect_unit(parameterization.field_unit())?;
        rho.expect_unit(Unit::KilogramsPerCubicMeter)?;
        if !rho.values().iter().all(|&r| r > 0.0) {
            return Err(EfwiError::NonPhysicalModel("rho must be positive".into()));
        }
        let model = Self {
            parameterization,
            field1,
            field2,
            rho,
        };
        let (lambda, mu) = model.lame_values()?;
        if !mu.iter().all(|&m| m >= 0.0) {
            return Err(EfwiError::NonPhysicalModel("mu must be non-negative".into()));
        }
        if !lambda
            .iter()
            .zip(&mu)
            .all(|(&l, &m)| l + 2.0 * m > 0.0)
        {
            return Err(EfwiError::NonPhysicalModel(
                "lambda + 2 mu must be positive".into(),
            ));
        }
        Ok(model)
    }

    /// Homogeneous model given in velocities [m/s] and density [kg/m³].
    pub fn homogeneous(grid: GridGeometry, vp: f64, vs: f64, rho: f64) -> Result<Self> {
        let vp = ParameterField::constant(grid, Unit::MetersPerSecond, vp)?;
        let vs = ParameterField::constant(grid, Unit::MetersPerSecond, vs)?;
        let rho = ParameterField::constant(grid, Unit::KilogramsPerCubicMeter, rho)?;
        Self::new(Parameterization::Velocity, vp, vs, rho)
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn grid(&self) -> GridGeometry {
        self.field1.grid()
    }

    pub fn field1(&self) -> &ParameterField {
        &self.field1
    }

    pub fn field2(&self) -> &ParameterField {
        &self.field2
    }

    pub fn rho(&self) -> &ParameterField {
        &self.rho
    }

    /// (λ, μ) values regardless of the active parameterization. This is
    /// what operator assembly consumes.
    pub fn lame_values(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let f1 = self.field1.values();
        let f2 = self.field2.values();
        let rho = self.rho.values();
        let n = f1.len();
        let mut lambda = vec![0.0; n];
        let mut mu = vec![0.0; n];
        match self.parameterization {
            Parameterization::Lame => {
                lambda.copy_from_slice(f1);
                mu.copy_from_slice(f2);
            }
            Parameterization::SquaredVelocity => {
                for i in 0..n {
                    lambda[i] = rho[i] * (f1[i] - 2.0 * f2[i]);
                    mu[i] = rho[i] * f2[i];
                }
            }
            Parameterization::Velocity => {
                for i in 0..n {
                    lambda[i] = rho[i] * (f1[i] * f1[i] - 2.0 * f2[i] * f2[i]);
                    mu[i] = rho[i] * f2[i] * f2[i];
                }
            }
        }
        Ok((lambda, mu))
    }

    /// Same medium expressed in `target` fields. Conversions compose
    /// exactly (involutive up to rounding).
    pub fn convert(&self, target: Parameterization) -> Result<Self> {
        if target == self.parameterization {
            return Ok(self.clone());
        }
        let grid = self.grid();
        let rho = self.rho.clone();
        let (lambda, mu) = self.lame_values()?;
        let rv = rho.values();
        match target {
            Parameterization::Lame => {
                let l = ParameterField::new(grid, Unit::Pascal, lambda)?;
                let m = ParameterField::new(grid, Unit::Pascal, mu)?;
                Self::new(target, l, m, rho)
            }
            Parameterization::SquaredVelocity => {
                let vp2: Vec<f64> = lambda
                    .iter()
                    .zip(&mu)
                    .zip(rv)
                    .map(|((&l, &m), &r)| (l + 2.0 * m) / r)
                    .collect();
                let vs2: Vec<f64> = mu.iter().zip(rv).map(|(&m, &r)| m / r).collect();
                let p = ParameterField::new(grid, Unit::SquaredMetersPerSecond, vp2)?;
                let s = ParameterField::new(grid, Unit::SquaredMetersPerSecond, vs2)?;
                Self::new(target, p, s, rho)
            }
            Parameterization::Velocity => {
                let (vp, vs) = velocities_from_lame(
                    &ParameterField::new(grid, Unit::Pascal, lambda)?,
                    &ParameterField::new(grid, Unit::Pascal, mu)?,
                    &rho,
                )?;
                Self::new(target, vp, vs, rho)
            }
        }
    }

    /// Replaces the two inverted fields, keeping density and grid.
    pub fn with_fields(&self, f1: Vec<f64>, f2: Vec<f64>) -> Result<Self> {
        let unit = self.parameterization.field_unit();
        Self::new(
            self.parameterization,
            ParameterField::new(self.grid(), unit, f1)?,
            ParameterField::new(self.grid(), unit, f2)?,
            self.rho.clone(),
        )
    }
}

/// (λ, μ) from velocities and density: μ = ρ V_S², λ = ρ (V_P² − 2 V_S²).
/// Negative λ cells are reported as a warning, not an error; transient
/// models during inversion may visit them.
pub fn lame_from_velocities(
    vp: &ParameterField,
    vs: &ParameterField,
    rho: &ParameterField,
) -> Result<(ParameterField, ParameterField)> {
    vp.same_grid(vs)?;
    vp.same_grid(rho)?;
    vp.expect_unit(Unit::MetersPerSecond)?;
    vs.expect_unit(Unit::MetersPerSecond)?;
    rho.expect_unit(Unit::KilogramsPerCubicMeter)?;
    if !vp
        .values()
        .iter()
        .zip(vs.values())
        .all(|(&p, &s)| p > s && s >= 0.0)
    {
        return Err(EfwiError::NonPhysicalModel(
            "requires vp > vs >= 0 elementwise".into(),
        ));
    }
    let mu = vs.zip(rho, Unit::Pascal, |s, r| r * s * s)?;
    let lambda = {
        let vals: Vec<f64> = vp
            .values()
            .iter()
            .zip(vs.values())
            .zip(rho.values())
            .map(|((&p, &s), &r)| r * (p * p - 2.0 * s * s))
            .collect();
        ParameterField::new(vp.grid(), Unit::Pascal, vals)?
    };
    let negative = lambda.values().iter().filter(|&&l| l < 0.0).count();
    if negative > 0 {
        log::warn!("lame_from_velocities produced {negative} cells with negative lambda");
    }
    Ok((lambda, mu))
}

/// Inverse of [`lame_from_velocities`]: V_P = √((λ+2μ)/ρ), V_S = √(μ/ρ).
pub fn velocities_from_lame(
    lambda: &ParameterField,
    mu: &ParameterField,
    rho: &ParameterField,
) -> Result<(ParameterField, ParameterField)> {
    lambda.same_grid(mu)?;
    lambda.same_grid(rho)?;
    lambda.expect_unit(Unit::Pascal)?;
    mu.expect_unit(Unit::Pascal)?;
    rho.expect_unit(Unit::KilogramsPerCubicMeter)?;
    for ((&l, &m), &r) in lambda.values().iter().zip(mu.values()).zip(rho.values()) {
        if m < 0.0 || l + 2.0 * m <= 0.0 || r <= 0.0 {
            return Err(EfwiError::NonPhysicalModel(
                "velocities_from_lame requires mu >= 0, lambda + 2 mu > 0, rho > 0".into(),
            ));
        }
    }
    let n = lambda.values().len();
    let mut vp = vec![0.0; n];
    let mut vs = vec![0.0; n];
    for i in 0..n {
        let r = rho.values()[i];
        vp[i] = ((lambda.values()[i] + 2.0 * mu.values()[i]) / r).sqrt();
        vs[i] = (mu.values()[i] / r).sqrt();
    }
    Ok((
        ParameterField::new(lambda.grid(), Unit::MetersPerSecond, vp)?,
        ParameterField::new(lambda.grid(), Unit::MetersPerSecond, vs)?,
    ))
}

/// Coefficients of the Brocher regression fit V_S(V_P), both in km/s.
const BROCHER: [f64; 5] = [0.7858, -1.2344, 0.7949, -0.1238, 0.0044];

/// S-wave velocity from P-wave velocity via the Brocher polynomial,
/// clamped below at `floor`. Both fields and `floor` are in km/s; the
/// unit tag is enforced because the polynomial is meaningless in m/s.
pub fn brocher_vs_from_vp(vp: &ParameterField, floor: f64) -> Result<ParameterField> {
    vp.expect_unit(Unit::KilometersPerSecond)?;
    vp.map(Unit::KilometersPerSecond, |v| {
        let poly = BROCHER[0] + v * (BROCHER[1] + v * (BROCHER[2] + v * (BROCHER[3] + v * BROCHER[4])));
        poly.max(floor)
    })
}

/// Poisson's ratio ν = (V_P² − 2V_S²) / (2(V_P² − V_S²)).
///
/// Cells with vp ≤ vs have no physical ratio; they are clamped to the
/// fluid limit 0.5 and their indices returned for inspection.
pub fn poisson_ratio(
    vp: &ParameterField,
    vs: &ParameterField,
) -> Result<(ParameterField, Vec<usize>)> {
    vp.same_grid(vs)?;
    if vp.unit() != vs.unit() {
        return Err(EfwiError::UnitMismatch {
            expected: vp.unit().to_string(),
            got: vs.unit().to_string(),
        });
    }
    let mut flagged = Vec::new();
    let mut values = vec![0.0; vp.values().len()];
    for (i, (&p, &s)) in vp.values().iter().zip(vs.values()).enumerate() {
        if p <= s {
            flagged.push(i);
            values[i] = 0.5;
        } else {
            values[i] = (p * p - 2.0 * s * s) / (2.0 * (p * p - s * s));
        }
    }
    Ok((
        ParameterField::new(vp.grid(), Unit::Dimensionless, values)?,
        flagged,
    ))
}
