//! Turns a [`RunConfig`] into solver objects.

use crate::config::{coil_profile, BackgroundKind, InitialConfig, InitialProfile, RunConfig, TargetKind, WaveformConfig, WaveformKind};
use crate::error::{AppError, AppResult};
use crate::format;
use std::path::Path;
use vctl_core::control::{ControlModel, ControlTrajectory};
use vctl_core::distribution::{Distribution, SUPPORT_EPSILON};
use vctl_core::field::ScalarField;
use vctl_core::forward::{Background, ForwardConfig, ForwardSolver, InitialData, ObjectiveWeights};
use vctl_core::grid::PhaseGrid;
use vctl_core::optimize::OptimizerConfig;

fn gaussian(r2: f64, s: f64) -> f64 {
    (-0.5 * r2 / (s * s)).exp()
}

/// Samples the configured initial density; values below the support
/// threshold are set to zero so that the support is compact.
pub fn initial_density(grid: PhaseGrid, c: &InitialConfig) -> Distribution {
    let bump = |x: [f64; 2], p: [f64; 2], xc: [f64; 2], pc: [f64; 2]| {
        let rx = (x[0] - xc[0]).powi(2) + (x[1] - xc[1]).powi(2);
        let rp = (p[0] - pc[0]).powi(2) + (p[1] - pc[1]).powi(2);
        c.amplitude * gaussian(rx, c.sigma_x) * gaussian(rp, c.sigma_p)
    };
    let clip = |v: f64| if v < SUPPORT_EPSILON { 0.0 } else { v };
    match c.profile {
        InitialProfile::Zero => Distribution::zeros(grid),
        InitialProfile::GaussianBlob => Distribution::from_fn(grid, |x, p| clip(bump(x, p, c.center, c.drift))),
        InitialProfile::TwoBump => {
            let h = 0.5 * c.separation;
            let a = [c.center[0] - h, c.center[1]];
            let b = [c.center[0] + h, c.center[1]];
            let d = [-c.drift[0], -c.drift[1]];
            Distribution::from_fn(grid, |x, p| clip(bump(x, p, a, c.drift) + bump(x, p, b, d)))
        }
    }
}

pub fn background(kind: BackgroundKind) -> Background {
    match kind {
        BackgroundKind::InitialDensity => Background::InitialDensity,
        BackgroundKind::Mean => Background::Mean,
        BackgroundKind::None => Background::None,
    }
}

pub fn phase_grid(cfg: &RunConfig) -> AppResult<PhaseGrid> {
    let g = &cfg.grid;
    Ok(PhaseGrid::new(g.x_extent, g.p_extent, g.nx, g.np, g.t_final, g.resolved_nt())?)
}

pub fn forward_config(cfg: &RunConfig) -> ForwardConfig {
    let s = &cfg.solver;
    ForwardConfig {
        escape_tolerance: s.escape_tolerance,
        support_fraction: s.support_fraction,
        boundary_tolerance: s.boundary_tolerance,
        boundary_width: s.boundary_width,
        picard_passes: s.picard_passes,
        snapshot_stride: s.checkpoint_stride,
        clip_negative: s.clip_negative,
        ..ForwardConfig::default()
    }
}

pub fn build_solver(cfg: &RunConfig) -> AppResult<ForwardSolver> {
    let grid = phase_grid(cfg)?;
    let f0 = initial_density(grid, &cfg.initial);
    let init = InitialData::new(f0, None, background(cfg.initial.background))?;
    let coils: Vec<_> = cfg.coils.specs().iter().map(coil_profile).collect();
    let model = ControlModel::from_profiles(&grid.spatial(), &coils)?;
    Ok(ForwardSolver::new(grid, model, init, forward_config(cfg))?)
}

pub fn weights(cfg: &RunConfig) -> ObjectiveWeights {
    let o = &cfg.objective;
    ObjectiveWeights { beta: o.beta, beta1: o.beta1, beta2: o.beta2, tracking: o.tracking }
}

pub fn optimizer_config(cfg: &RunConfig) -> OptimizerConfig {
    let o = &cfg.optimizer;
    OptimizerConfig {
        max_iters: o.max_iters,
        c1: o.c1,
        backtrack: o.backtrack,
        initial_step: o.initial_step,
        min_step: o.min_step,
        tol_abs: o.tol_abs,
        tol_rel: o.tol_rel,
        tol_value: o.tol_value,
        weights: weights(cfg),
        ..OptimizerConfig::default()
    }
}

/// Samples a waveform on the time grid; `file` sources are read from CSV.
pub fn control(w: &WaveformConfig, n_coils: usize, grid: &PhaseGrid) -> AppResult<ControlTrajectory> {
    let dt = grid.dt();
    if w.source == WaveformKind::File {
        let path = w.path.as_deref().ok_or_else(|| AppError::config("control file path missing"))?;
        let u = read_control(path, n_coils, grid.nt, dt)?;
        return Ok(u);
    }
    Ok(ControlTrajectory::from_fn(n_coils, grid.nt, dt, |j, t| w.sample(j, t)))
}

/// Reads `t, u1, .., uN` rows; the row count must be `nt + 1`.
pub fn read_control(path: &Path, n_coils: usize, nt: usize, dt: f64) -> AppResult<ControlTrajectory> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| AppError::Format { path: path.into(), message: e.to_string() })?;
    let mut u = ControlTrajectory::zeros(n_coils, nt, dt);
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::Format { path: path.into(), message: e.to_string() })?;
        if rec.len() != n_coils + 1 {
            return Err(AppError::Format {
                path: path.into(),
                message: format!("row {k}: expected {} columns, found {}", n_coils + 1, rec.len()),
            });
        }
        if k > nt {
            return Err(AppError::Format { path: path.into(), message: format!("more than nt + 1 = {} rows", nt + 1) });
        }
        for j in 0..n_coils {
            let v: f64 = rec[j + 1]
                .trim()
                .parse()
                .map_err(|_| AppError::Format { path: path.into(), message: format!("row {k}: bad number {:?}", &rec[j + 1]) })?;
            u.set(j, k, v);
        }
        rows += 1;
    }
    if rows != nt + 1 {
        return Err(AppError::Format { path: path.into(), message: format!("expected {} rows, found {rows}", nt + 1) });
    }
    Ok(u)
}

/// Builds the target densities `rho_d(t_k)`.
pub fn target(cfg: &RunConfig, solver: &ForwardSolver) -> AppResult<Vec<ScalarField>> {
    let g = solver.grid;
    let n_coils = solver.model.len();
    match cfg.objective.target {
        TargetKind::Zero => Ok(vec![ScalarField::zeros(g.nx); g.nt + 1]),
        TargetKind::Uncontrolled => Ok(solver.run(&ControlTrajectory::zeros(n_coils, g.nt, g.dt()))?.rho),
        TargetKind::Twin => {
            let u = control(&cfg.objective.twin, n_coils, &g)?;
            Ok(solver.run(&u)?.rho)
        }
        TargetKind::File => {
            let dir = cfg.objective.path.as_deref().ok_or_else(|| AppError::config("objective.path missing"))?;
            (0..=g.nt)
                .map(|k| Ok(format::read_scalar(&dir.join(format::step_file("rho", k)), g.nx)?.1))
                .collect()
        }
    }
}
