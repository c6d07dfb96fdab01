//! Box-constrained minimization of the reduced objective.
//!
//! Projected gradient with Barzilai-Borwein step lengths and an Armijo test
//! along the projection arc; only decreasing steps are accepted. A numerical
//! abort of the forward solve during the line search counts as a rejected
//! trial.

use crate::control::ControlTrajectory;
use crate::error::{Result, SolverError};
use crate::field::ScalarField;
use crate::forward::{regularization_term, ForwardSolver, ObjectiveWeights};
use crate::math::abs;
use crate::sensitivity::value_and_gradient;
use alloc::format;
use alloc::vec::Vec;

/// Clamp every sample to `[-1, 1]`.
pub fn project_box(u: &mut ControlTrajectory) {
    for v in &mut u.values {
        *v = v.clamp(-1.0, 1.0);
    }
}

/// `P(u - g) - u`, the projected-gradient step of unit length. Interior
/// samples return `-g` exactly, so tiny gradients are not lost to rounding
/// against `u`.
pub fn projected_gradient(u: &ControlTrajectory, grad: &ControlTrajectory) -> ControlTrajectory {
    let mut out = u.clone();
    for ((o, a), g) in out.values.iter_mut().zip(&u.values).zip(&grad.values) {
        let t = a - g;
        *o = if t > 1.0 {
            1.0 - a
        } else if t < -1.0 {
            -1.0 - a
        } else {
            -g
        };
    }
    out
}

/// First-order optimality report for the box `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Multipliers of `u <= 1` and `u >= -1`.
    pub lambda_plus: ControlTrajectory,
    pub lambda_minus: ControlTrajectory,
    /// Largest violation of `grad + lambda_plus - lambda_minus = 0` in sign-
    /// admissible form.
    pub stationarity: f64,
    /// Largest `lambda_plus (1 - u)` or `lambda_minus (1 + u)`.
    pub complementarity: f64,
    /// Largest excursion of `|u|` beyond 1.
    pub feasibility: f64,
}

/// Multipliers and residuals at `u` with gradient `grad`. Samples within
/// `active_tol` of a bound count as active.
pub fn kkt_residuals(u: &ControlTrajectory, grad: &ControlTrajectory, active_tol: f64) -> KktReport {
    let mut lp = ControlTrajectory::zeros(u.n_coils, u.nt, u.dt);
    let mut lm = lp.clone();
    let (mut stat, mut comp, mut feas) = (0.0f64, 0.0f64, 0.0f64);
    for (k, (&a, &g)) in u.values.iter().zip(&grad.values).enumerate() {
        feas = feas.max(abs(a) - 1.0);
        let r = if a >= 1.0 - active_tol {
            lp.values[k] = (-g).max(0.0);
            g.max(0.0)
        } else if a <= -1.0 + active_tol {
            lm.values[k] = g.max(0.0);
            (-g).max(0.0)
        } else {
            abs(g)
        };
        stat = stat.max(r);
        comp = comp.max(lp.values[k] * (1.0 - a)).max(lm.values[k] * (1.0 + a));
    }
    KktReport { lambda_plus: lp, lambda_minus: lm, stationarity: stat, complementarity: comp, feasibility: feas.max(0.0) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Armijo constant.
    pub c1: f64,
    /// Step reduction factor on rejection.
    pub backtrack: f64,
    /// Largest change of any sample on the first trial step.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Stop when `||P(u - g) - u||_inf` drops below
    /// `tol_abs + tol_rel * (its initial value)`.
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Stop when the relative decrease of an accepted step is below this.
    pub tol_value: f64,
    pub weights: ObjectiveWeights,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            c1: 1e-4,
            backtrack: 0.5,
            initial_step: 0.25,
            min_step: 1e-14,
            max_step: 1e14,
            tol_abs: 1e-10,
            tol_rel: 1e-4,
            tol_value: 0.0,
            weights: ObjectiveWeights { beta: 1e-3, beta1: 0.0, beta2: 0.0, tracking: true },
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            p.push(format!("c1 must lie in (0, 1) (got {})", self.c1));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            p.push(format!("backtrack must lie in (0, 1) (got {})", self.backtrack));
        }
        if !(self.initial_step > 0.0) {
            p.push(format!("initial_step must be positive (got {})", self.initial_step));
        }
        if !(self.min_step > 0.0 && self.min_step < self.max_step) {
            p.push("need 0 < min_step < max_step".into());
        }
        if !(self.tol_abs >= 0.0 && self.tol_rel >= 0.0 && self.tol_value >= 0.0) {
            p.push("tolerances must be nonnegative".into());
        }
        if let Err(SolverError::Config(m)) = self.weights.validate() {
            p.push(m);
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(SolverError::Config(p.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    SmallDecrease,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub tracking: f64,
    pub regularization: f64,
    pub projected_gradient: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub step: f64,
    /// Forward solves used by the line search of this iteration.
    pub trials: usize,
    /// Trials rejected because the forward solve aborted.
    pub aborted_trials: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub u: ControlTrajectory,
    pub value: f64,
    pub gradient: ControlTrajectory,
    pub history: Vec<IterationRecord>,
    pub kkt: KktReport,
    pub reason: StopReason,
}

/// Minimizes the objective over `[-1, 1]` starting from the projection of
/// `u0`.
pub fn minimize(
    solver: &ForwardSolver,
    u0: &ControlTrajectory,
    target: &[ScalarField],
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult> {
    minimize_observed(solver, u0, target, cfg, |_| {})
}

pub fn minimize_observed(
    solver: &ForwardSolver,
    u0: &ControlTrajectory,
    target: &[ScalarField],
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let w = &cfg.weights;
    let mut u = u0.clone();
    project_box(&mut u);
    let (mut value, mut grad, _) = value_and_gradient(solver, &u, target, w)?;
    let pg0 = projected_gradient(&u, &grad).max_abs();
    let tol = cfg.tol_abs + cfg.tol_rel * pg0;
    let mut history = Vec::new();
    let record = |iter: usize, u: &ControlTrajectory, value: f64, grad: &ControlTrajectory, pg: f64, step: f64, trials: usize, aborted: usize| {
        let reg = regularization_term(u, &solver.model.c, w);
        let kkt = kkt_residuals(u, grad, 1e-12);
        IterationRecord {
            iter,
            value,
            tracking: value - reg,
            regularization: reg,
            projected_gradient: pg,
            stationarity: kkt.stationarity,
            complementarity: kkt.complementarity,
            step,
            trials,
            aborted_trials: aborted,
        }
    };
    let first = record(0, &u, value, &grad, pg0, 0.0, 0, 0);
    observe(&first);
    history.push(first);
    let gmax = grad.max_abs();
    let mut alpha = if gmax > 0.0 { (cfg.initial_step / gmax).clamp(cfg.min_step, cfg.max_step) } else { 1.0 };
    let mut reason = StopReason::MaxIterations;
    let mut pg = pg0;
    for iter in 1..=cfg.max_iters {
        if pg <= tol {
            reason = StopReason::Converged;
            break;
        }
        let (mut trials, mut aborted) = (0, 0);
        let mut step = alpha;
        let accepted = loop {
            if step < cfg.min_step {
                break None;
            }
            let mut trial = u.clone();
            trial.axpy(-step, &grad);
            project_box(&mut trial);
            let mut d = trial.clone();
            d.axpy(-1.0, &u);
            trials += 1;
            match value_and_gradient(solver, &trial, target, w) {
                Ok((v, g, _)) if v <= value + cfg.c1 * grad.dot(&d) && v.is_finite() => break Some((trial, v, g, d)),
                Ok(_) => {}
                Err(e) if e.is_numerical() => aborted += 1,
                Err(e) => return Err(e),
            }
            step *= cfg.backtrack;
        };
        let Some((trial, v, g, s)) = accepted else {
            reason = StopReason::LineSearchFailed;
            break;
        };
        let mut y = g.clone();
        y.axpy(-1.0, &grad);
        let sy = s.dot(&y);
        alpha = if sy > 0.0 { (s.dot(&s) / sy).clamp(cfg.min_step, cfg.max_step) } else { (2.0 * step).min(cfg.max_step) };
        let decrease = value - v;
        u = trial;
        grad = g;
        let old = value;
        value = v;
        pg = projected_gradient(&u, &grad).max_abs();
        let rec = record(iter, &u, value, &grad, pg, step, trials, aborted);
        observe(&rec);
        history.push(rec);
        if pg <= tol {
            reason = StopReason::Converged;
            break;
        }
        if decrease <= cfg.tol_value * abs(old) {
            reason = StopReason::SmallDecrease;
            break;
        }
    }
    let kkt = kkt_residuals(&u, &grad, 1e-12);
    Ok(OptimizeResult { u, value, gradient: grad, history, kkt, reason })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps() {
        let mut u = ControlTrajectory::from_fn(1, 3, 0.1, |_, t| 30.0 * (t - 0.15));
        project_box(&mut u);
        assert!(u.is_feasible());
        assert_eq!(u.values[0], -1.0);
        assert_eq!(u.values[3], 1.0);
    }

    #[test]
    fn kkt_at_upper_bound() {
        let u = ControlTrajectory::from_fn(1, 2, 0.1, |_, _| 1.0);
        let g = ControlTrajectory::from_fn(1, 2, 0.1, |_, _| -0.3);
        let r = kkt_residuals(&u, &g, 1e-12);
        assert!(r.lambda_plus.values.iter().all(|&l| (l - 0.3).abs() < 1e-15));
        assert_eq!(r.stationarity, 0.0);
        assert_eq!(r.complementarity, 0.0);
        let g = ControlTrajectory::from_fn(1, 2, 0.1, |_, _| 0.2);
        let r = kkt_residuals(&u, &g, 1e-12);
        assert!((r.stationarity - 0.2).abs() < 1e-15);
    }

    #[test]
    fn kkt_interior_and_lower() {
        let u = ControlTrajectory { n_coils: 1, nt: 1, dt: 0.1, values: alloc::vec![0.0, -1.0] };
        let g = ControlTrajectory { n_coils: 1, nt: 1, dt: 0.1, values: alloc::vec![0.5, 0.4] };
        let r = kkt_residuals(&u, &g, 1e-12);
        assert_eq!(r.lambda_minus.values, alloc::vec![0.0, 0.4]);
        assert_eq!(r.stationarity, 0.5);
        assert_eq!(r.feasibility, 0.0);
    }
}
