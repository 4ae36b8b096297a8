//! Outer inversion loop: augmented wavefield reconstruction per source,
//! one blocky model step, damped dual ascent, multiscale scheduling,
//! and per-iteration metrics.
//!
//! Within a frequency block the impedance matrix is row-normalized once
//! (equation scaling; see `equation_scale`), sources and observed data
//! are fixed, and the scaled dual fields start at zero. The penalty-only
//! mode is the same loop with the dual update skipped.

use std::time::Instant;

use crate::acquisition::{
    build_sampling_operator, ricker_spectrum, ForceComponent, SamplingOperator, SourceSet,
};
use crate::boundary::BoundarySpec;
use crate::config::{InversionConfig, Mode};
use crate::constraints::PlaneProjector;
use crate::error::{EfwiError, Result};
use crate::grid::GridGeometry;
use crate::impedance::{assemble_impedance, ImpedanceMatrix};
use crate::linalg::{norm2, norm2_real, sub, C64};
use crate::model::ElasticModel;
use crate::scattering::{build_scattering_system, NormalSystem};
use crate::sketch::{apply_sketch, draw_sketch, lift_sketch, SketchOperator};
use crate::stencil::OperatorBundle;
use crate::update::{solve_model_step_from, ModelUpdateResult};
use crate::wavefield::{forward_solve, AugmentedFactorization, Factorization, Wavefield};

/// Sources, receivers, wavelet, and boundary treatment for one scenario.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub source_positions: Vec<(f64, f64)>,
    pub source_component: ForceComponent,
    /// Dominant frequency of the Ricker source spectrum [Hz].
    pub ricker_f0: f64,
    pub receiver_positions: Vec<(f64, f64)>,
    pub boundary: BoundarySpec,
}

impl Acquisition {
    pub fn n_sources(&self) -> usize {
        self.source_positions.len()
    }

    pub fn sampling(&self, grid: GridGeometry) -> Result<SamplingOperator> {
        build_sampling_operator(&self.receiver_positions, grid)
    }

    /// Point-force set at one frequency, amplitudes from the Ricker
    /// spectrum at that frequency.
    pub fn sources_at(&self, grid: GridGeometry, freq_hz: f64) -> Result<SourceSet> {
        SourceSet::point_forces(
            grid,
            &self.source_positions,
            self.source_component,
            ricker_spectrum(self.ricker_f0, freq_hz),
        )
    }
}

/// Observed receiver data per (frequency, source).
#[derive(Debug, Clone)]
pub struct ObservedData {
    pub freqs_hz: Vec<f64>,
    /// `[freq][source]` → stacked (d_x; d_z) receiver samples.
    pub data: Vec<Vec<Vec<C64>>>,
}

impl ObservedData {
    pub fn for_freq(&self, freq_hz: f64) -> Result<&Vec<Vec<C64>>> {
        self.freqs_hz
            .iter()
            .position(|&f| (f - freq_hz).abs() <= 1e-9 * freq_hz.max(1.0))
            .map(|i| &self.data[i])
            .ok_or_else(|| {
                EfwiError::InvalidConfig(format!("no observed data at {freq_hz} Hz"))
            })
    }
}

/// Synthesizes observed data by forward modeling `model` over `freqs`.
pub fn model_data(
    model: &ElasticModel,
    acquisition: &Acquisition,
    freqs_hz: &[f64],
) -> Result<ObservedData> {
    let grid = model.grid();
    let sampling = acquisition.sampling(grid)?;
    let mut data = Vec::with_capacity(freqs_hz.len());
    for &f in freqs_hz {
        let bundle = OperatorBundle::new(grid, acquisition.boundary, 2.0 * std::f64::consts::PI * f)?;
        let a = assemble_impedance(model, &bundle)?;
        let sources = acquisition.sources_at(grid, f)?;
        let fields = forward_solve(&a, &sources)?;
        data.push(fields.iter().map(|u| sampling.apply(&u.values)).collect());
    }
    Ok(ObservedData {
        freqs_hz: freqs_hz.to_vec(),
        data,
    })
}

/// One row of the inversion log: metrics for one (iteration, frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub freq_hz: f64,
    pub data_residual: f64,
    pub source_residual: f64,
    pub model_error_1: f64,
    pub model_error_2: f64,
    pub solves: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct IterationLog {
    pub rows: Vec<LogRow>,
}

/// Model snapshot taken at the end of a frequency block.
#[derive(Debug, Clone)]
pub struct ModelSnapshot {
    pub block: usize,
    pub freqs_hz: Vec<f64>,
    pub model: ElasticModel,
}

#[derive(Debug)]
pub struct InversionOutput {
    pub model: ElasticModel,
    pub log: IterationLog,
    pub snapshots: Vec<ModelSnapshot>,
    pub total_solves: usize,
}

/// Damping factor k/(k+ξ) of the dual update; ξ = 0 recovers the
/// undamped ascent.
pub fn dual_damping_factor(k: usize, xi: f64) -> f64 {
    if xi == 0.0 {
        1.0
    } else {
        k as f64 / (k as f64 + xi)
    }
}

/// Damped dual ascent: s ← (k/(k+ξ)) (s + b − A(m) u).
pub fn damped_dual_update(
    s: &[C64],
    b: &[C64],
    a: &ImpedanceMatrix,
    u: &[C64],
    k: usize,
    xi: f64,
) -> Vec<C64> {
    let au = a.apply(u);
    let factor = dual_damping_factor(k, xi);
    s.iter()
        .zip(b)
        .zip(&au)
        .map(|((si, bi), aui)| factor * (si + bi - aui))
        .collect()
}

/// Σ_j ‖P u_j − d_j‖₂ over paired wavefields and data vectors.
pub fn data_residual(p: &SamplingOperator, u: &[Vec<C64>], d: &[Vec<C64>]) -> f64 {
    u.iter()
        .zip(d)
        .map(|(uj, dj)| norm2(&sub(&p.apply(uj), dj)))
        .sum()
}

/// Σ_j ‖A u_j − b_j‖₂ over paired wavefields and source columns.
pub fn source_residual(a: &ImpedanceMatrix, u: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    u.iter()
        .zip(b)
        .map(|(uj, bj)| norm2(&sub(&a.apply(uj), bj)))
        .sum()
}

/// Relative model errors ‖m − m*‖₂ / ‖m*‖₂ per parameter class, with
/// the truth converted into the model's parameterization.
pub fn model_errors(model: &ElasticModel, truth: &ElasticModel) -> Result<(f64, f64)> {
    let truth = truth.convert(model.parameterization())?;
    let err = |a: &[f64], b: &[f64]| {
        let num = norm2_real(
            &a.iter()
                .zip(b)
                .map(|(x, y)| x - y)
                .collect::<Vec<f64>>(),
        );
        num / norm2_real(b).max(f64::MIN_POSITIVE)
    };
    Ok((
        err(model.field1().values(), truth.field1().values()),
        err(model.field2().values(), truth.field2().values()),
    ))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// All run randomness flows from the master seed through this tagged
/// derivation.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ tag)
}

const SEED_TAG_SKETCH: u64 = 1 << 56;
pub const SEED_TAG_NOISE: u64 = 2 << 56;

/// Per-frequency immutable context within one block.
struct FreqContext {
    freq_hz: f64,
    bundle: OperatorBundle,
    /// Row-normalization factor 1/‖A(m_block_start)‖∞.
    scale: f64,
    /// Scaled source columns b̂_j.
    b_hat: Vec<Vec<C64>>,
    /// Observed data per source.
    observed: Vec<Vec<C64>>,
}

/// Mutable ADMM state: current model, scaled dual fields per
/// (frequency, source), and the iteration counter within the block.
pub struct AdmmState {
    pub model: ElasticModel,
    /// `duals[freq_idx][source]`, in the scaled equation space.
    pub duals: Vec<Vec<Vec<C64>>>,
    /// Iteration counter within the current frequency block.
    pub k_block: usize,
    /// Global iteration counter across blocks.
    pub k_global: usize,
}

fn active_sketch(
    config: &InversionConfig,
    n_s: usize,
    k_global: usize,
    block: usize,
    freq_idx: usize,
) -> Result<Option<SketchOperator>> {
    let Some(spec) = &config.sketch else {
        return Ok(None);
    };
    let q = spec.q_at(k_global).unwrap_or(n_s).min(n_s);
    if q >= n_s {
        return Ok(None);
    }
    let tag = SEED_TAG_SKETCH
        | ((block as u64 & 0xFFFF) << 40)
        | ((k_global as u64 & 0xFFFFFFFF) << 8)
        | (freq_idx as u64 & 0xFF);
    Ok(Some(draw_sketch(n_s, q, derive_seed(config.seed, tag))?))
}

/// Runs the full schedule in ADMM or penalty-only mode. The reduced
/// baseline lives in [`crate::fwi`].
pub fn run_inversion(
    config: &InversionConfig,
    start: &ElasticModel,
    acquisition: &Acquisition,
    observed: &ObservedData,
    truth: Option<&ElasticModel>,
) -> Result<InversionOutput> {
    config.validate()?;
    if config.mode == Mode::ReducedFwi {
        return crate::fwi::run_reduced_fwi(config, start, acquisition, observed, truth);
    }
    let grid = start.grid();
    let sampling = acquisition.sampling(grid)?;
    let mut model = start.convert(config.parameterization)?;
    let projector = config
        .constraints
        .as_ref()
        .map(|spec| spec.build_projector(config.parameterization))
        .transpose()?;

    let mut log = IterationLog::default();
    let mut snapshots = Vec::new();
    let mut total_solves = 0usize;
    let mut k_global = 0usize;

    for (block_idx, block) in config.schedule.blocks.iter().enumerate() {
        // immutable per-frequency context for this block
        let mut contexts = Vec::with_capacity(block.freqs_hz.len());
        for &f in &block.freqs_hz {
            let omega = 2.0 * std::f64::consts::PI * f;
            let bundle = OperatorBundle::new(grid, acquisition.boundary, omega)?;
            let a0 = assemble_impedance(&model, &bundle)?;
            let scale = 1.0 / a0.infinity_norm();
            let sources = acquisition.sources_at(grid, f)?;
            let b_hat: Vec<Vec<C64>> = (0..sources.n_sources())
                .map(|j| {
                    sources
                        .column(j)
                        .into_iter()
                        .map(|v| v * scale)
                        .collect()
                })
                .collect();
            let observed_f = observed.for_freq(f)?.clone();
            if observed_f.len() != sources.n_sources() {
                return Err(EfwiError::DimensionMismatch(format!(
                    "observed data at {f} Hz has {} sources, acquisition has {}",
                    observed_f.len(),
                    sources.n_sources()
                )));
            }
            contexts.push(FreqContext {
                freq_hz: f,
                bundle,
                scale,
                b_hat,
                observed: observed_f,
            });
        }

        // dual fields reset at every block boundary
        let n_s = acquisition.n_sources();
        let mut state = AdmmState {
            model,
            duals: vec![vec![vec![C64::ZERO; 2 * grid.n()]; n_s]; contexts.len()],
            k_block: 0,
            k_global,
        };

        for _ in 0..block.iterations {
            let solves = admm_iteration(
                config,
                &mut state,
                &contexts,
                &sampling,
                projector.as_ref().map(|p| p as &dyn PlaneProjector),
                truth,
                &mut log,
                block_idx,
            )?;
            total_solves += solves;
        }

        k_global = state.k_global;
        model = state.model;
        snapshots.push(ModelSnapshot {
            block: block_idx,
            freqs_hz: block.freqs_hz.clone(),
            model: model.clone(),
        });
    }

    Ok(InversionOutput {
        model,
        log,
        snapshots,
        total_solves,
    })
}

/// One ADMM iteration over every frequency of the active block:
/// reconstruct all wavefields with the current model and duals, take
/// one model step, then update the duals against the new model.
#[allow(clippy::too_many_arguments)]
fn admm_iteration(
    config: &InversionConfig,
    state: &mut AdmmState,
    contexts: &[FreqContext],
    sampling: &SamplingOperator,
    projector: Option<&dyn PlaneProjector>,
    truth: Option<&ElasticModel>,
    log: &mut IterationLog,
    block_idx: usize,
) -> Result<usize> {
    let started = Instant::now();
    let grid = state.model.grid();
    let n = grid.n();
    let mut solves_this_iter = 0usize;

    struct FreqWork {
        sketch: Option<SketchOperator>,
        /// Active (possibly sketched) b̂ + ŝ columns.
        b_plus_s: Vec<Vec<C64>>,
        /// Active b̂ columns (for the dual residual).
        b_active: Vec<Vec<C64>>,
        /// Active observed-data columns.
        d_active: Vec<Vec<C64>>,
        fields: Vec<Wavefield>,
    }

    // wavefield reconstruction per frequency and active source
    let mut work = Vec::with_capacity(contexts.len());
    let mut normal = NormalSystem::zeros(n, config.parameterization);
    for (fi, ctx) in contexts.iter().enumerate() {
        let a_phys = assemble_impedance(&state.model, &ctx.bundle)?;
        let a_hat = a_phys.scaled(ctx.scale);
        let augmented = AugmentedFactorization::new(&a_hat, sampling, config.beta)?;

        let sketch = active_sketch(config, ctx.b_hat.len(), state.k_global, block_idx, fi)?;
        let (b_active, d_active, s_active) = match &sketch {
            None => (
                ctx.b_hat.clone(),
                ctx.observed.clone(),
                state.duals[fi].clone(),
            ),
            Some(s) => (
                apply_sketch(s, &ctx.b_hat)?,
                apply_sketch(s, &ctx.observed)?,
                apply_sketch(s, &state.duals[fi])?,
            ),
        };
        let b_plus_s: Vec<Vec<C64>> = b_active
            .iter()
            .zip(&s_active)
            .map(|(b, s)| crate::linalg::add(b, s))
            .collect();

        let mut fields = Vec::with_capacity(b_plus_s.len());
        for (j, (bs, d)) in b_plus_s.iter().zip(&d_active).enumerate() {
            let values = augmented.solve(bs, d, sampling)?;
            solves_this_iter += 1;
            fields.push(Wavefield {
                values,
                source: j,
                freq_hz: ctx.freq_hz,
            });
        }

        // accumulate the normal system (skipped for the GN path, which
        // needs the raw scattering systems instead)
        if config.parameterization != crate::model::Parameterization::Velocity {
            for (j, u) in fields.iter().enumerate() {
                let sys = build_scattering_system(
                    u,
                    &b_plus_s[j],
                    &state.model,
                    config.parameterization,
                    &ctx.bundle,
                    ctx.scale,
                )?;
                normal.accumulate(&sys)?;
            }
        }

        work.push(FreqWork {
            sketch,
            b_plus_s,
            b_active,
            d_active,
            fields,
        });
    }

    // model step
    let update: ModelUpdateResult = if config.parameterization
        == crate::model::Parameterization::Velocity
    {
        // Gauss-Newton path: rebuild squared-velocity systems
        let mut systems = Vec::new();
        for (fi, ctx) in contexts.iter().enumerate() {
            for (j, u) in work[fi].fields.iter().enumerate() {
                systems.push(build_scattering_system(
                    u,
                    &work[fi].b_plus_s[j],
                    &state.model,
                    crate::model::Parameterization::SquaredVelocity,
                    &ctx.bundle,
                    ctx.scale,
                )?);
            }
        }
        let (updated, info) =
            crate::update::gauss_newton_step(&systems, &state.model, config.gn_step_length)?;
        if info.stalled {
            log::warn!(
                "Gauss-Newton stalled at iteration {} (gradient norm {:.3e})",
                state.k_global,
                info.gradient_norm
            );
        }
        let mut result = ModelUpdateResult::from_model(&updated, &state.model);
        result.parameterization = config.parameterization;
        result
    } else if let Some(projector) = projector {
        let gamma = config.gamma.unwrap_or_else(|| normal.trace_scale());
        let (result, _info) = crate::constraints::constrained_model_step(
            &normal,
            projector,
            gamma,
            config.constraint_tol,
            config.constraint_max_iter,
        )?;
        result
    } else {
        solve_model_step_from(
            &normal,
            state.model.field1().values(),
            state.model.field2().values(),
        )?
    };
    let new_model = state.model.with_fields(update.m1.clone(), update.m2.clone())?;

    // dual ascent against the new model, plus per-frequency metrics
    let (err1, err2) = match truth {
        Some(t) => model_errors(&new_model, t)?,
        None => (f64::NAN, f64::NAN),
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    for (fi, ctx) in contexts.iter().enumerate() {
        let a_new = assemble_impedance(&new_model, &ctx.bundle)?.scaled(ctx.scale);
        let w = &work[fi];
        // scaled wave-equation residuals b̂ − Â û per active source
        let residuals: Vec<Vec<C64>> = w
            .fields
            .iter()
            .zip(&w.b_active)
            .map(|(u, b)| sub(b, &a_new.apply(&u.values)))
            .collect();

        if config.mode == Mode::Admm {
            let factor = dual_damping_factor(state.k_block, config.xi);
            let lifted = match &w.sketch {
                None => residuals.clone(),
                Some(s) => lift_sketch(s, &residuals)?,
            };
            for (j, r) in lifted.iter().enumerate() {
                let s_old = &state.duals[fi][j];
                state.duals[fi][j] = s_old
                    .iter()
                    .zip(r)
                    .map(|(si, ri)| factor * (si + ri))
                    .collect();
            }
        }

        let data_res = data_residual(
            sampling,
            &w.fields.iter().map(|u| u.values.clone()).collect::<Vec<_>>(),
            &w.d_active,
        );
        let source_res: f64 = residuals.iter().map(|r| norm2(r)).sum();
        log.rows.push(LogRow {
            iteration: state.k_global,
            freq_hz: ctx.freq_hz,
            data_residual: data_res,
            source_residual: source_res,
            model_error_1: err1,
            model_error_2: err2,
            solves: solves_this_iter,
            wall_ms,
        });
    }

    state.model = new_model;
    state.k_block += 1;
    state.k_global += 1;
    Ok(solves_this_iter)
}
