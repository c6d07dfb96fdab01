use vctl_core::control::{CoilProfile, ControlModel, ControlTrajectory};
use vctl_core::distribution::Distribution;
use vctl_core::forward::{Background, ForwardConfig, ForwardSolver, InitialData, ObjectiveWeights};
use vctl_core::grid::PhaseGrid;
use vctl_core::sensitivity::{fd_directional, fd_gradient, solve_adjoint, solve_tangent, value_and_gradient};

fn gaussian(r2: f64, s: f64) -> f64 {
    let v = (-0.5 * r2 / (s * s)).exp();
    if v < 1e-12 {
        0.0
    } else {
        v
    }
}

fn solver(stride: usize) -> ForwardSolver {
    let grid = PhaseGrid::new(9.0, 6.0, 36, 24, 1.0, 5).unwrap();
    let f0 = Distribution::from_fn(grid, |x, p| {
        let rx = (x[0] - 0.3).powi(2) + x[1] * x[1];
        let rp = (p[0] - 0.4).powi(2) + p[1] * p[1];
        0.02 * gaussian(rx, 0.6) * gaussian(rp, 0.5)
    });
    let init = InitialData::new(f0, None, Background::InitialDensity).unwrap();
    let coils = [
        CoilProfile::Ring { center: [0.0, 0.3], radius: 1.2, width: 0.7, strength: 0.6 },
        CoilProfile::Strip { center: [0.2, -0.2], angle: 0.6, half_length: 1.6, half_width: 0.8, strength: 0.5 },
    ];
    let model = ControlModel::from_profiles(&grid.spatial(), &coils).unwrap();
    let cfg = ForwardConfig { snapshot_stride: stride, ..ForwardConfig::default() };
    ForwardSolver::new(grid, model, init, cfg).unwrap()
}

fn controls(s: &ForwardSolver) -> (ControlTrajectory, ControlTrajectory, Vec<vctl_core::field::ScalarField>) {
    let g = s.grid;
    let twin = ControlTrajectory::from_fn(2, g.nt, g.dt(), |j, t| 0.8 * (3.0 * t + j as f64).sin());
    let target = s.run(&twin).unwrap().rho;
    let u = ControlTrajectory::from_fn(2, g.nt, g.dt(), |j, t| 0.3 * (2.0 * t - j as f64).cos());
    let du = ControlTrajectory::from_fn(2, g.nt, g.dt(), |j, t| (1.0 + t * j as f64).sin());
    (u, du, target)
}

#[test]
fn adjoint_matches_tangent_and_differences() {
    let s = solver(2);
    let (u, du, target) = controls(&s);
    let w = ObjectiveWeights { beta: 1e-2, beta1: 1e-3, beta2: 1e-5, tracking: true };
    let (value, grad, _) = value_and_gradient(&s, &u, &target, &w).unwrap();
    assert!(value > 0.0);
    let tan = solve_tangent(&s, &u, &du, Some((&target, &w))).unwrap();
    let dj = tan.directional_derivative.unwrap();
    let adj = grad.dot(&du);
    assert!((adj - dj).abs() <= 1e-10 * dj.abs().max(1e-12), "adjoint {adj} tangent {dj}");
    let fd = fd_directional(&s, &u, &du, &target, &w, 1e-5).unwrap();
    assert!((fd - dj).abs() <= 1e-6 * dj.abs(), "fd {fd} tangent {dj}");
    let idx = [0, 3, 7, 11];
    let fdg = fd_gradient(&s, &u, &target, &w, 1e-5, &idx).unwrap();
    for (i, f) in idx.iter().zip(fdg) {
        let g = grad.values[*i];
        assert!((g - f).abs() <= 1e-6 * grad.max_abs(), "index {i}: adjoint {g} fd {f}");
    }
}

#[test]
fn checkpoint_stride_does_not_change_the_gradient() {
    let (a, b) = (solver(1), solver(0));
    let (u, _, target) = controls(&a);
    let ra = a.run(&u).unwrap();
    let rb = b.run(&u).unwrap();
    assert_eq!(ra.checkpoints.len(), 5);
    assert_eq!(rb.checkpoints.len(), 1);
    let ga = solve_adjoint(&a, &ra, &u, &target).unwrap().tracking_gradient;
    let gb = solve_adjoint(&b, &rb, &u, &target).unwrap().tracking_gradient;
    assert_eq!(ga.values, gb.values);
}

#[test]
fn picard_passes_reject_sensitivities() {
    let mut s = solver(1);
    s.cfg.picard_passes = 2;
    let (u, _, target) = controls(&s);
    let run = s.run(&u).unwrap();
    assert!(solve_adjoint(&s, &run, &u, &target).is_err());
}
