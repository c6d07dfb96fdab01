//! Tangent and adjoint sensitivities of the reduced objective.
//!
//! Both are the exact linearization of the discrete forward map: the tangent
//! replays [`Stepper::tangent_step`] next to the base run, the adjoint runs
//! [`Stepper::adjoint_step`] backwards over segments recomputed from the
//! stored checkpoints. The resulting gradient is exact up to round-off for
//! the discrete objective, which is what the finite-difference checks test.

use crate::control::ControlTrajectory;
use crate::distribution::{charge_density, Distribution};
use crate::error::{Result, SolverError};
use crate::field::{FieldState, ScalarField};
use crate::forward::{
    objective_eval, regularization_gradient, time_weights, ForwardRun, ForwardSolver, ObjectiveWeights, StepTrace,
};
use crate::math::FOUR_PI;
use alloc::format;
use alloc::vec::Vec;

fn require_single_pass(solver: &ForwardSolver) -> Result<()> {
    if solver.cfg.picard_passes != 1 {
        return Err(SolverError::Config(format!(
            "sensitivities need a single coupling pass (picard_passes = {})",
            solver.cfg.picard_passes
        )));
    }
    Ok(())
}

/// Result of a tangent solve in direction `du`.
#[derive(Debug, Clone)]
pub struct TangentRun {
    /// `d rho_f(t_k)` for `k = 0..=nt`.
    pub drho: Vec<ScalarField>,
    pub final_density: Distribution,
    pub final_fields: FieldState,
    /// Directional derivative of the objective (when a target was given).
    pub directional_derivative: Option<f64>,
}

/// Linearized state along `du`, computed alongside a fresh base run.
/// `observe(k, df, dfields)` sees every level.
pub fn solve_tangent_observed(
    solver: &ForwardSolver,
    u: &ControlTrajectory,
    du: &ControlTrajectory,
    objective: Option<(&[ScalarField], &ObjectiveWeights)>,
    mut observe: impl FnMut(usize, &Distribution, &FieldState),
) -> Result<TangentRun> {
    require_single_pass(solver)?;
    let g = solver.grid;
    u.check_shape(solver.model.len(), g.nt)?;
    du.check_shape(solver.model.len(), g.nt)?;
    if let Some((t, _)) = objective {
        if t.len() != g.nt + 1 {
            return Err(SolverError::ShapeMismatch { what: "target time levels", expected: g.nt + 1, found: t.len() });
        }
    }
    let mut stepper = solver.stepper();
    let mut trace = stepper.empty_trace();
    let mut s = solver.initial_state();
    let mut df = Distribution::zeros(g);
    let mut dfields = FieldState::zeros(g.nx);
    let w = time_weights(g.nt, g.dt());
    let area = g.spatial().cell_area();
    let mut drho = Vec::with_capacity(g.nt + 1);
    let mut dj = 0.0;
    for n in 0..=g.nt {
        let dr = charge_density(&df);
        if let Some((target, _)) = objective {
            let r = charge_density(&s.f);
            let mut diff = r;
            diff.axpy(-1.0, &target[n]);
            dj += w[n] * area * diff.dot(&dr);
        }
        drho.push(dr);
        observe(n, &df, &dfields);
        if n == g.nt {
            break;
        }
        let cur = solver.model.current_at_half_step(u, n);
        let dcur = solver.model.current_at_half_step(du, n);
        stepper.step(&mut s.f, &mut s.fields, &cur, Some(&mut trace));
        stepper.tangent_step(&mut df, &mut dfields, &dcur, &trace);
        s.t_index = n + 1;
        if !s.f.is_finite() || !df.is_finite() || !dfields.is_finite() {
            return Err(SolverError::NonFinite { step: n + 1, what: "tangent state" });
        }
    }
    let directional_derivative = objective.map(|(_, weights)| {
        let rg = regularization_gradient(u, &solver.model.c, weights);
        dj + rg.dot(du)
    });
    Ok(TangentRun { drho, final_density: df, final_fields: dfields, directional_derivative })
}

pub fn solve_tangent(
    solver: &ForwardSolver,
    u: &ControlTrajectory,
    du: &ControlTrajectory,
    objective: Option<(&[ScalarField], &ObjectiveWeights)>,
) -> Result<TangentRun> {
    solve_tangent_observed(solver, u, du, objective, |_, _, _| {})
}

/// Result of an adjoint solve.
#[derive(Debug, Clone)]
pub struct AdjointRun {
    /// Gradient of the tracking term with respect to every control sample.
    pub tracking_gradient: ControlTrajectory,
    /// Adjoint of the initial state.
    pub initial_density: Distribution,
    pub initial_fields: FieldState,
}

/// Adjoint quantities in the normalization of the continuous adjoint
/// system: `g = -f_bar / (dx^2 dp^2)`, `(h, h3) = -(E_bar, B_bar) / dx^2`.
pub fn continuous_adjoint(f_bar: &Distribution, fields_bar: &FieldState) -> (Distribution, FieldState) {
    let g = f_bar.grid;
    let mut gd = f_bar.clone();
    gd.scale(-1.0 / g.cell_volume());
    let mut h = fields_bar.clone();
    let s = -1.0 / g.spatial().cell_area();
    h.e1.scale(s);
    h.e2.scale(s);
    h.b.scale(s);
    (gd, h)
}

/// Reverse sweep for the tracking term. `observe(k, f_bar, fields_bar)` sees
/// the adjoint of every level, latest first.
pub fn solve_adjoint_observed(
    solver: &ForwardSolver,
    run: &ForwardRun,
    u: &ControlTrajectory,
    target: &[ScalarField],
    mut observe: impl FnMut(usize, &Distribution, &FieldState),
) -> Result<AdjointRun> {
    require_single_pass(solver)?;
    let g = solver.grid;
    u.check_shape(solver.model.len(), g.nt)?;
    if target.len() != g.nt + 1 || run.rho.len() != g.nt + 1 {
        return Err(SolverError::ShapeMismatch { what: "target time levels", expected: g.nt + 1, found: target.len() });
    }
    let w = time_weights(g.nt, g.dt());
    let scale = g.spatial().cell_area() * FOUR_PI * g.momentum_weight();
    let add_source = |k: usize, bar: &mut Distribution| {
        let r = &run.rho[k];
        let d = &target[k];
        for cell in 0..g.nx * g.nx {
            let a = w[k] * scale * (r.data[cell] - d.data[cell]);
            if a != 0.0 {
                bar.cell_mut(cell).iter_mut().for_each(|v| *v += a);
            }
        }
    };
    let mut stepper = solver.stepper();
    let mut f_bar = Distribution::zeros(g);
    let mut fields_bar = FieldState::zeros(g.nx);
    let mut grad = ControlTrajectory::zeros(u.n_coils, g.nt, g.dt());
    add_source(g.nt, &mut f_bar);
    observe(g.nt, &f_bar, &fields_bar);
    let mut end = g.nt;
    while end > 0 {
        let start = run.checkpoint_before(end - 1)?;
        let a = start.t_index;
        let mut f = start.f.clone();
        let mut fields = start.fields.clone();
        let mut traces: Vec<StepTrace> = Vec::with_capacity(end - a);
        for n in a..end {
            let mut t = stepper.empty_trace();
            let cur = solver.model.current_at_half_step(u, n);
            stepper.step(&mut f, &mut fields, &cur, Some(&mut t));
            traces.push(t);
        }
        for n in (a..end).rev() {
            let t = traces.pop().expect("one trace per step");
            let ubar = stepper.adjoint_step(&mut f_bar, &mut fields_bar, &t);
            let proj = solver.model.project(&ubar);
            for (j, pj) in proj.iter().enumerate() {
                let h = 0.5 * pj;
                grad.row_mut(j)[n] += h;
                grad.row_mut(j)[n + 1] += h;
            }
            add_source(n, &mut f_bar);
            if !f_bar.is_finite() || !fields_bar.is_finite() {
                return Err(SolverError::NonFinite { step: n, what: "adjoint state" });
            }
            observe(n, &f_bar, &fields_bar);
        }
        end = a;
    }
    Ok(AdjointRun { tracking_gradient: grad, initial_density: f_bar, initial_fields: fields_bar })
}

pub fn solve_adjoint(solver: &ForwardSolver, run: &ForwardRun, u: &ControlTrajectory, target: &[ScalarField]) -> Result<AdjointRun> {
    solve_adjoint_observed(solver, run, u, target, |_, _, _| {})
}

/// Full reduced gradient: adjoint tracking part plus regularization.
pub fn assemble_gradient(
    solver: &ForwardSolver,
    adjoint: Option<&AdjointRun>,
    u: &ControlTrajectory,
    weights: &ObjectiveWeights,
) -> ControlTrajectory {
    let mut g = regularization_gradient(u, &solver.model.c, weights);
    if let (Some(a), true) = (adjoint, weights.tracking) {
        g.axpy(1.0, &a.tracking_gradient);
    }
    g
}

/// Objective value and gradient at `u`.
pub fn value_and_gradient(
    solver: &ForwardSolver,
    u: &ControlTrajectory,
    target: &[ScalarField],
    weights: &ObjectiveWeights,
) -> Result<(f64, ControlTrajectory, ForwardRun)> {
    let run = solver.run(u)?;
    let value = objective_eval(&run, u, &solver.model, target, weights)?.total;
    let adj = if weights.tracking { Some(solve_adjoint(solver, &run, u, target)?) } else { None };
    let grad = assemble_gradient(solver, adj.as_ref(), u, weights);
    Ok((value, grad, run))
}

/// Central differences `(J(u + h e_i) - J(u - h e_i)) / 2h` for the listed
/// flat indices of the control.
pub fn fd_gradient(
    solver: &ForwardSolver,
    u: &ControlTrajectory,
    target: &[ScalarField],
    weights: &ObjectiveWeights,
    h: f64,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(SolverError::Config(format!("finite-difference step must be positive (got {h})")));
    }
    let eval = |v: &ControlTrajectory| -> Result<f64> {
        let run = solver.run(v)?;
        Ok(objective_eval(&run, v, &solver.model, target, weights)?.total)
    };
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= u.values.len() {
            return Err(SolverError::Config(format!("control index {i} out of range")));
        }
        let mut p = u.clone();
        p.values[i] += h;
        let mut m = u.clone();
        m.values[i] -= h;
        out.push((eval(&p)? - eval(&m)?) / (2.0 * h));
    }
    Ok(out)
}

/// Central difference of the objective along `du`.
pub fn fd_directional(
    solver: &ForwardSolver,
    u: &ControlTrajectory,
    du: &ControlTrajectory,
    target: &[ScalarField],
    weights: &ObjectiveWeights,
    h: f64,
) -> Result<f64> {
    let eval = |s: f64| -> Result<f64> {
        let mut v = u.clone();
        v.axpy(s, du);
        let run = solver.run(&v)?;
        Ok(objective_eval(&run, &v, &solver.model, target, weights)?.total)
    };
    Ok((eval(h)? - eval(-h)?) / (2.0 * h))
}
