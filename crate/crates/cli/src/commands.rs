//! The `simulate`, `gradcheck`, `optimize` and `validate` subcommands.

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};
use crate::format;
use crate::scenario;
use crate::suite::{self, num, SuiteReport, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs;
use std::path::Path;
use vctl_core::control::ControlTrajectory;
use vctl_core::forward::DiagnosticRecord;
use vctl_core::optimize::minimize_observed;
use vctl_core::sensitivity::{fd_directional, solve_tangent, value_and_gradient};

fn write(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn create_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

pub const DIAGNOSTIC_COLUMNS: [&str; 21] = [
    "step",
    "time",
    "l1",
    "l2",
    "linf",
    "mass",
    "min_f",
    "kinetic_energy",
    "field_energy",
    "total_energy",
    "internal_energy",
    "external_work",
    "gauss_residual",
    "charge_norm",
    "support_x",
    "support_p",
    "max_force",
    "boundary_field",
    "boundary_density",
    "momentum_boundary_fraction",
    "undershoot",
];

fn diagnostics_csv(records: &[DiagnosticRecord]) -> String {
    let mut t = Table::new(&DIAGNOSTIC_COLUMNS);
    for r in records {
        t.row(vec![
            r.step.to_string(),
            num(r.time),
            num(r.l1),
            num(r.l2),
            num(r.linf),
            num(r.mass),
            num(r.min_f),
            num(r.kinetic_energy),
            num(r.field_energy),
            num(r.total_energy),
            num(r.internal_energy),
            num(r.external_work),
            num(r.gauss_residual),
            num(r.charge_norm),
            num(r.support_x),
            num(r.support_p),
            num(r.max_force),
            num(r.boundary_field),
            num(r.boundary_density),
            num(r.momentum_boundary_fraction),
            num((-r.min_f).max(0.0)),
        ]);
    }
    t.finish()
}

/// `t, u1, .., uN` with one row per time level.
pub fn control_csv(u: &ControlTrajectory) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((1..=u.n_coils).map(|j| format!("u{j}")));
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&cols);
    for k in 0..=u.nt {
        let mut row = vec![num(k as f64 * u.dt)];
        row.extend((0..u.n_coils).map(|j| num(u.get(j, k))));
        t.row(row);
    }
    t.finish()
}

/// Forward run: `diagnostics.csv`, the normalized configuration, the charge
/// density of every level under `rho/`, and density and field snapshots
/// under `snapshots/` every `output.snapshot_stride` steps.
pub fn simulate(cfg: &RunConfig, out: &Path) -> AppResult<()> {
    let solver = scenario::build_solver(cfg)?;
    let g = solver.grid;
    let u = scenario::control(&cfg.control, solver.model.len(), &g)?;
    create_dir(out)?;
    write(&out.join("config.toml"), &cfg.dump())?;
    let stride = cfg.output.snapshot_stride;
    let snap_dir = out.join("snapshots");
    if stride > 0 {
        create_dir(&snap_dir)?;
    }
    let mut snap_err = None;
    let run = solver.run_observed(&u, |k, s| {
        if stride == 0 || k % stride != 0 || snap_err.is_some() {
            return;
        }
        let r = format::write_density(&snap_dir.join(format::step_file("f", k)), &s.f, k).and_then(|_| {
            format::write_fields(&snap_dir.join(format::step_file("fields", k)), &s.fields, g.x_extent, g.time(k), k)
        });
        if let Err(e) = r {
            snap_err = Some(e);
        }
    })?;
    if let Some(e) = snap_err {
        return Err(e);
    }
    write(&out.join("diagnostics.csv"), &diagnostics_csv(&run.records))?;
    let rho_dir = out.join("rho");
    create_dir(&rho_dir)?;
    for (k, rho) in run.rho.iter().enumerate() {
        format::write_scalar(&rho_dir.join(format::step_file("rho", k)), rho, g.x_extent, g.time(k), k)?;
    }
    Ok(())
}

/// One row of the gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckRow {
    pub direction: usize,
    pub epsilon: f64,
    pub fd_value: f64,
    pub adjoint_value: f64,
    pub tangent_value: f64,
    pub rel_err: f64,
}

/// Adjoint directional derivatives against central differences along
/// seeded random directions; writes `gradcheck.csv`.
pub fn gradcheck(cfg: &RunConfig, out: &Path) -> AppResult<Vec<GradcheckRow>> {
    let solver = scenario::build_solver(cfg)?;
    let g = solver.grid;
    let nc = solver.model.len();
    if nc == 0 {
        return Err(AppError::config("gradcheck needs at least one coil"));
    }
    let target = scenario::target(cfg, &solver)?;
    let w = scenario::weights(cfg);
    let u = scenario::control(&cfg.control, nc, &g)?;
    let (_, grad, _) = value_and_gradient(&solver, &u, &target, &w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.gradcheck.seed);
    let dirs: Vec<ControlTrajectory> = (0..cfg.gradcheck.directions)
        .map(|_| ControlTrajectory::from_fn(nc, g.nt, g.dt(), |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let eps = &cfg.gradcheck.epsilons;
    let jobs: Vec<(usize, usize)> = (0..dirs.len()).flat_map(|d| (0..eps.len()).map(move |e| (d, e))).collect();
    let fd = jobs
        .par_iter()
        .map(|&(d, e)| Ok(fd_directional(&solver, &u, &dirs[d], &target, &w, eps[e])?))
        .collect::<Vec<AppResult<f64>>>()
        .into_iter()
        .collect::<AppResult<Vec<_>>>()?;
    let tangents = dirs
        .par_iter()
        .map(|d| Ok(solve_tangent(&solver, &u, d, Some((&target, &w)))?.directional_derivative.unwrap_or(0.0)))
        .collect::<Vec<AppResult<f64>>>()
        .into_iter()
        .collect::<AppResult<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(jobs.len());
    let mut t = Table::new(&["direction", "epsilon", "fd_value", "adjoint_value", "rel_err"]);
    for (&(d, e), &v) in jobs.iter().zip(&fd) {
        let adj = grad.dot(&dirs[d]);
        let rel_err = (v - adj).abs() / adj.abs().max(f64::MIN_POSITIVE);
        t.row(vec![d.to_string(), num(eps[e]), num(v), num(adj), num(rel_err)]);
        rows.push(GradcheckRow { direction: d, epsilon: eps[e], fd_value: v, adjoint_value: adj, tangent_value: tangents[d], rel_err });
    }
    create_dir(out)?;
    write(&out.join("gradcheck.csv"), &t.finish())?;
    Ok(rows)
}

/// Projected-gradient minimization from the configured control; writes
/// `history.csv` and the final control as `control.csv`.
pub fn optimize(cfg: &RunConfig, out: &Path) -> AppResult<vctl_core::optimize::OptimizeResult> {
    let solver = scenario::build_solver(cfg)?;
    let g = solver.grid;
    let nc = solver.model.len();
    if nc == 0 {
        return Err(AppError::config("optimize needs at least one coil"));
    }
    let target = scenario::target(cfg, &solver)?;
    let u0 = scenario::control(&cfg.control, nc, &g)?;
    let res = minimize_observed(&solver, &u0, &target, &scenario::optimizer_config(cfg), |r| {
        eprintln!("iter {:3}  objective {:e}  projected gradient {:e}", r.iter, r.value, r.projected_gradient);
    })?;
    let mut t = Table::new(&[
        "iter",
        "objective",
        "tracking",
        "regularization",
        "step",
        "projected_gradient",
        "stationarity",
        "complementarity",
    ]);
    for r in &res.history {
        t.row(vec![
            r.iter.to_string(),
            num(r.value),
            num(r.tracking),
            num(r.regularization),
            num(r.step),
            num(r.projected_gradient),
            num(r.stationarity),
            num(r.complementarity),
        ]);
    }
    create_dir(out)?;
    write(&out.join("history.csv"), &t.finish())?;
    write(&out.join("control.csv"), &control_csv(&res.u))?;
    Ok(res)
}

/// Runs one validation suite and writes `<suite>.csv` and
/// `<suite>_checks.csv`.
pub fn validate(name: &str, threads: usize, out: &Path) -> AppResult<SuiteReport> {
    let report = suite::run_suite(name, threads)?;
    create_dir(out)?;
    write(&out.join(format!("{name}.csv")), &report.data)?;
    write(&out.join(format!("{name}_checks.csv")), &report.checks_csv())?;
    Ok(report)
}
