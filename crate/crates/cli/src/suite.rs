//! Validation suites: oracle comparisons, conservation runs, gradient and
//! optimizer checks on fixed desk-scale scenarios.
//!
//! Each suite returns its data as CSV together with a list of checks against
//! declared tolerances. The CSV never contains timings, so reruns with the
//! same build are byte-identical whatever the thread count.

use crate::config::{BackgroundKind, CoilKind, CoilPreset, CoilSpec, InitialProfile, RunConfig, TargetKind, WaveformKind};
use crate::error::{AppError, AppResult};
use crate::scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;
use vctl_core::control::{ControlModel, ControlTrajectory};
use vctl_core::distribution::{Distribution, Norm};
use vctl_core::field::{EdgeField, FieldState, ScalarField};
use vctl_core::forward::{
    energy_identity_residual, objective_eval, ForwardConfig, ForwardRun, ForwardSolver, InitialData, ObjectiveWeights,
};
use vctl_core::grid::{PhaseGrid, SpatialGrid};
use vctl_core::kinematics::relativistic_velocity;
use vctl_core::maxwell::maxwell_step_total;
use vctl_core::optimize::minimize;
use vctl_core::sensitivity::{fd_directional, solve_tangent, value_and_gradient};
use vctl_core::wave::WaveOracle;

pub const SUITES: [&str; 7] =
    ["free-streaming", "maxwell-oracle", "conservation", "energy-identity", "gradient", "regularization", "optimizer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// The quantity the suite exists to test.
    Primary,
    /// Support and boundary-layer invariants of a run.
    Support,
    /// Wall-clock budget; excluded from the CSV output.
    Runtime,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `value <= limit` when true, `value >= limit` otherwise.
    pub upper: bool,
    pub group: Group,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, upper: true, group: Group::Primary }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, upper: false, group: Group::Primary }
    }

    fn grouped(mut self, group: Group) -> Self {
        self.group = group;
        self
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && if self.upper { self.value <= self.limit } else { self.value >= self.limit }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rel = if self.upper { "<=" } else { ">=" };
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {:.4e} {rel} {:.4e}", self.name, self.value, self.limit)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub checks: Vec<Check>,
    /// Suite-specific rows.
    pub data: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn group(&self, g: Group) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(move |c| c.group == g)
    }

    /// `name, value, limit, relation, passed` for every non-timing check.
    pub fn checks_csv(&self) -> String {
        let mut t = Table::new(&["check", "value", "limit", "relation", "passed"]);
        for c in self.checks.iter().filter(|c| c.group != Group::Runtime) {
            t.row(vec![
                c.name.clone(),
                num(c.value),
                num(c.limit),
                if c.upper { "<=".into() } else { ">=".into() },
                c.passed().to_string(),
            ]);
        }
        t.finish()
    }
}

/// Small CSV builder; floats are written in shortest round-trip form.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.w.write_record(&cells).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Runs a named suite on a dedicated pool of `threads` workers.
pub fn run_suite(name: &str, threads: usize) -> AppResult<SuiteReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| AppError::config(format!("thread pool: {e}")))?;
    pool.install(|| match name {
        "free-streaming" => free_streaming(),
        "maxwell-oracle" => maxwell_oracle(),
        "conservation" => conservation(),
        "energy-identity" => energy_identity(),
        "gradient" => gradient(),
        "regularization" => regularization(),
        "optimizer" => optimizer(),
        other => Err(AppError::config(format!("unknown suite {other:?}; available: {}", SUITES.join(", ")))),
    })
}

fn report(name: &str, checks: Vec<Check>, data: String) -> SuiteReport {
    SuiteReport { name: name.into(), checks, data }
}

/// Support-growth and boundary-layer checks from the diagnostics of a run:
/// `r_x(t) <= r_x(0) + t + 2 dx`, `r_p(t) <= r_p(0) + int max|K| + dp`, and
/// fields below `1e-10` on the boundary layer.
pub fn support_checks(label: &str, run: &ForwardRun) -> Vec<Check> {
    let g = run.grid;
    let r = &run.records;
    let (mut gx, mut gp, mut bf) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut force = 0.0;
    for rec in r {
        gx = gx.max(rec.support_x - r[0].support_x - rec.time);
        gp = gp.max(rec.support_p - r[0].support_p - force);
        bf = bf.max(rec.boundary_field);
        force += g.dt() * rec.max_force;
    }
    vec![
        Check::at_most(format!("{label}: x-support growth beyond t"), gx, 2.0 * g.dx()).grouped(Group::Support),
        Check::at_most(format!("{label}: p-support growth beyond int max|K|"), gp, g.dp()).grouped(Group::Support),
        Check::at_most(format!("{label}: boundary-layer fields"), bf, 1e-10).grouped(Group::Support),
    ]
}

fn runtime(label: &str, t: Instant, limit: f64) -> Check {
    Check::at_most(format!("{label}: runtime [s]"), t.elapsed().as_secs_f64(), limit).grouped(Group::Runtime)
}

fn gaussian(r2: f64, s: f64) -> f64 {
    (-0.5 * r2 / (s * s)).exp()
}

/// A dilute Gaussian moving through its own negligible fields, compared
/// with `f0(x - t p^, p)`.
fn free_streaming() -> AppResult<SuiteReport> {
    const AMP: f64 = 1e-6;
    let (sx, sp) = (0.5, 0.4);
    let f0 = |x: [f64; 2], p: [f64; 2]| AMP * gaussian(x[0] * x[0] + x[1] * x[1], sx) * gaussian(p[0] * p[0] + p[1] * p[1], sp);
    let mut t = Table::new(&["nx", "np", "nt", "dx", "dp", "rel_l2_error", "support_x0", "support_x1"]);
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    for n in [32, 64] {
        let start = Instant::now();
        let grid = PhaseGrid::new(4.75, 3.0, n, n, 1.0, 24)?;
        let init = InitialData::with_fields(Distribution::from_fn(grid, f0), FieldState::zeros(n), ScalarField::zeros(n))?;
        let model = ControlModel::from_samples(&grid.spatial(), Vec::new())?;
        let solver = ForwardSolver::new(grid, model, init, ForwardConfig { snapshot_stride: 0, ..ForwardConfig::default() })?;
        let run = solver.run(&ControlTrajectory::zeros(0, grid.nt, grid.dt()))?;
        let exact = Distribution::from_fn(grid, |x, p| {
            let v = relativistic_velocity(p);
            f0([x[0] - v[0], x[1] - v[1]], p)
        });
        let mut d = run.final_state.f.clone();
        d.axpy(-1.0, &exact);
        let err = d.lq_norm(Norm::L2) / exact.lq_norm(Norm::L2);
        let r = &run.records;
        t.row(vec![
            n.to_string(),
            n.to_string(),
            grid.nt.to_string(),
            num(grid.dx()),
            num(grid.dp()),
            num(err),
            num(r[0].support_x),
            num(r[r.len() - 1].support_x),
        ]);
        checks.extend(support_checks(&format!("free streaming n={n}"), &run));
        checks.push(runtime(&format!("free streaming n={n}"), start, 120.0));
        errors.push(err);
    }
    checks.insert(0, Check::at_most("relative L2 error at n=64", errors[1], 1e-2));
    checks.insert(1, Check::at_least("error ratio n=32 / n=64", errors[0] / errors[1], 6.0));
    Ok(report("free-streaming", checks, t.finish()))
}

/// Gaussian space-time current pulse `J = s(t) g(x) d` in vacuum.
#[derive(Debug, Clone, Copy)]
struct Pulse {
    x0: [f64; 2],
    sigma: f64,
    t0: f64,
    tau: f64,
    dir: [f64; 2],
}

impl Pulse {
    fn s(&self, t: f64) -> f64 {
        let a = (t - self.t0) / self.tau;
        (-a * a).exp()
    }

    fn g(&self, x: [f64; 2]) -> f64 {
        let (a, b) = (x[0] - self.x0[0], x[1] - self.x0[1]);
        gaussian(a * a + b * b, self.sigma)
    }

    fn current(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let v = self.s(t) * self.g(x);
        [v * self.dir[0], v * self.dir[1]]
    }

    /// `d_1 J_2 - d_2 J_1`, the source of `B_tt - lap B`.
    fn curl(&self, t: f64, x: [f64; 2]) -> f64 {
        let s2 = self.sigma * self.sigma;
        let dg1 = -(x[0] - self.x0[0]) / s2;
        let dg2 = -(x[1] - self.x0[1]) / s2;
        self.s(t) * self.g(x) * (self.dir[1] * dg1 - self.dir[0] * dg2)
    }
}

fn maxwell_oracle() -> AppResult<SuiteReport> {
    const X: f64 = 5.0;
    const T: f64 = 1.5;
    let pulse = Pulse { x0: [0.3, -0.2], sigma: 0.35, t0: 0.6, tau: 0.2, dir: [0.6, 0.8] };
    let oracle = WaveOracle::new(48, 64, 96, X);
    let mut t = Table::new(&["nx", "t", "x1", "x2", "oracle", "solver", "abs_err"]);
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    for n in [32, 64, 128] {
        let start = Instant::now();
        let grid = SpatialGrid::new(n, X)?;
        let dx = grid.dx();
        let h = 0.5 * dx;
        let nt = (T / (0.5 * grid.maxwell_cfl_bound())).ceil() as usize;
        let dt = T / nt as f64;
        let mut fields = FieldState::zeros(n);
        let mut boundary: f64 = 0.0;
        for k in 0..nt {
            let tk = (k as f64 + 0.5) * dt;
            let mut j = EdgeField::zeros(n);
            for i1 in 1..n - 1 {
                for i2 in 1..n - 1 {
                    let (x, y) = (grid.coord(i1), grid.coord(i2));
                    j.c1.set(i1, i2, pulse.current(tk, [x + h, y])[0]);
                    j.c2.set(i1, i2, pulse.current(tk, [x, y + h])[1]);
                }
            }
            maxwell_step_total(&mut fields, &j, dt, dx);
            boundary = boundary.max(fields.boundary_max(2));
        }
        let probes: Vec<(usize, usize)> = (0..25)
            .map(|m| {
                let p = [-1.6 + 0.8 * (m / 5) as f64, -1.6 + 0.8 * (m % 5) as f64];
                let idx = |c: f64| ((c + X) / dx).round() as usize - 1;
                (idx(p[0]), idx(p[1]))
            })
            .collect();
        let values: Vec<AppResult<(f64, f64, f64)>> = probes
            .par_iter()
            .map(|&(i1, i2)| {
                let x = [grid.coord(i1) + h, grid.coord(i2) + h];
                let o = oracle.source_term(|s, y| pulse.curl(s, y), T, x)?;
                Ok((x[0], x[1], o))
            })
            .collect();
        let (mut emax, mut omax) = (0.0f64, 0.0f64);
        for (&(i1, i2), v) in probes.iter().zip(values) {
            let (x1, x2, o) = v?;
            let b = fields.b.get(i1, i2);
            emax = emax.max((b - o).abs());
            omax = omax.max(o.abs());
            t.row(vec![n.to_string(), num(T), num(x1), num(x2), num(o), num(b), num((b - o).abs())]);
        }
        let rel = emax / omax;
        errors.push(rel);
        checks.push(
            Check::at_most(format!("maxwell n={n}: boundary-layer fields"), boundary, 1e-10).grouped(Group::Support),
        );
        checks.push(runtime(&format!("maxwell n={n}"), start, 60.0));
    }
    checks.insert(0, Check::at_most("relative probe error at n=128", errors[2], 0.05));
    checks.insert(1, Check::at_least("error ratio n=64 / n=128", errors[1] / errors[2], 3.5));
    Ok(report("maxwell-oracle", checks, t.finish()))
}

/// Plasma scenario shared by the coupled suites.
fn plasma_config(x_extent: f64, p_extent: f64, n: usize, t_final: f64, nt: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.grid.x_extent = x_extent;
    c.grid.p_extent = p_extent;
    c.grid.nx = n;
    c.grid.np = n;
    c.grid.t_final = t_final;
    c.grid.nt = Some(nt);
    c.initial.profile = InitialProfile::GaussianBlob;
    c.initial.background = BackgroundKind::InitialDensity;
    c
}

fn solver_for(cfg: &RunConfig) -> AppResult<ForwardSolver> {
    cfg.validate().map_err(AppError::Config)?;
    scenario::build_solver(cfg)
}

fn conservation() -> AppResult<SuiteReport> {
    let mut t = Table::new(&["nx", "step", "time", "l1", "total_energy", "gauss_residual", "charge_norm"]);
    let mut checks = Vec::new();
    let mut gauss = Vec::new();
    for (n, nt) in [(32, 16), (64, 32)] {
        // counter-streaming bumps, wide enough to be resolved at n = 32
        let mut cfg = plasma_config(13.5, 4.5, n, 1.0, nt);
        cfg.initial.profile = InitialProfile::TwoBump;
        cfg.initial.amplitude = 0.01;
        cfg.initial.sigma_x = 1.5;
        cfg.initial.separation = 3.0;
        cfg.initial.drift = [0.5, 0.0];
        let solver = solver_for(&cfg)?;
        let run = solver.run(&ControlTrajectory::zeros(0, nt, solver.grid.dt()))?;
        let r = &run.records;
        let (mut l1, mut en, mut gr) = (0.0f64, 0.0f64, 0.0f64);
        for rec in r {
            l1 = l1.max((rec.l1 - r[0].l1).abs() / r[0].l1);
            en = en.max((rec.total_energy - r[0].total_energy).abs() / r[0].total_energy);
            gr = gr.max(rec.gauss_residual / rec.charge_norm);
            t.row(vec![
                n.to_string(),
                rec.step.to_string(),
                num(rec.time),
                num(rec.l1),
                num(rec.total_energy),
                num(rec.gauss_residual),
                num(rec.charge_norm),
            ]);
        }
        gauss.push(gr);
        if n == 32 {
            checks.push(Check::at_most("relative L1 drift at n=32", l1, 1e-3));
            checks.push(Check::at_most("relative Gauss residual at n=32", gr, 1e-2));
            checks.push(Check::at_most("relative total-energy drift at n=32", en, 1e-3));
        }
        checks.extend(support_checks(&format!("conservation n={n}"), &run));
    }
    checks.insert(3, Check::at_least("Gauss residual ratio n=32 / n=64", gauss[0] / gauss[1], 3.0));
    Ok(report("conservation", checks, t.finish()))
}

fn ring(radius: f64, width: f64, strength: f64) -> CoilSpec {
    CoilSpec { kind: CoilKind::Ring, radius, width, strength, ..CoilSpec::default() }
}

fn energy_identity() -> AppResult<SuiteReport> {
    let mut t = Table::new(&["nx", "time", "residual", "external_work"]);
    let mut checks = Vec::new();
    let mut rel = Vec::new();
    for (n, nt) in [(32, 16), (64, 32)] {
        // low amplitude keeps the 1e-12 contour of the tail resolved at n = 32
        let mut cfg = plasma_config(13.5, 4.5, n, 1.0, nt);
        cfg.initial.amplitude = 1e-5;
        cfg.initial.sigma_x = 1.5;
        cfg.initial.sigma_p = 0.5;
        cfg.initial.drift = [0.3, 0.0];
        cfg.coils.preset = CoilPreset::Custom;
        cfg.coils.custom = vec![ring(2.5, 1.0, 0.5)];
        cfg.control.source = WaveformKind::Sine;
        cfg.control.amplitude = 0.8;
        cfg.control.frequency = 0.5;
        cfg.control.phase = 0.3;
        let solver = solver_for(&cfg)?;
        let u = scenario::control(&cfg.control, 1, &solver.grid)?;
        let run = solver.run(&u)?;
        let res = energy_identity_residual(&run.records);
        let work = run.records.iter().fold(0.0f64, |m, r| m.max(r.external_work.abs()));
        let worst = res.iter().fold(0.0f64, |m, (_, r)| m.max(r.abs()));
        for (k, (time, r)) in res.iter().enumerate() {
            t.row(vec![n.to_string(), num(*time), num(*r), num(run.records[k + 1].external_work)]);
        }
        rel.push(worst / work);
        checks.extend(support_checks(&format!("energy identity n={n}"), &run));
    }
    checks.insert(0, Check::at_most("energy identity residual / max work at n=64", rel[1], 0.02));
    checks.insert(1, Check::at_least("residual ratio n=32 / n=64", rel[0] / rel[1], 3.0));
    Ok(report("energy-identity", checks, t.finish()))
}

/// Twin-experiment scenario with two coils.
pub fn twin_config(n: usize, nt: usize) -> RunConfig {
    let mut cfg = plasma_config(13.5, 4.5, n, 1.0, nt);
    cfg.initial.amplitude = 1e-5;
    cfg.initial.sigma_x = 1.5;
    cfg.initial.sigma_p = 0.5;
    cfg.initial.drift = [0.3, 0.0];
    cfg.coils.preset = CoilPreset::Custom;
    cfg.coils.custom = vec![
        CoilSpec { center: [0.0, 0.3], ..ring(2.0, 0.8, 0.6) },
        CoilSpec {
            kind: CoilKind::Strip,
            center: [0.2, -0.2],
            angle: 0.6,
            half_length: 2.4,
            half_width: 1.0,
            strength: 0.5,
            ..CoilSpec::default()
        },
    ];
    cfg.objective.target = TargetKind::Twin;
    cfg.objective.twin.source = WaveformKind::Sine;
    cfg.objective.twin.amplitude = 0.6;
    cfg.objective.twin.frequency = 0.5;
    cfg.objective.twin.phase_step = 1.0;
    cfg
}

fn random_direction(rng: &mut ChaCha8Rng, like: &ControlTrajectory) -> ControlTrajectory {
    let mut d = like.clone();
    for v in &mut d.values {
        *v = rng.gen_range(-1.0..1.0);
    }
    d
}

fn gradient() -> AppResult<SuiteReport> {
    let start = Instant::now();
    let mut cfg = twin_config(32, 128);
    // the tracking term scales with amplitude^2 = 1e-10
    cfg.objective.beta = 1e-13;
    cfg.objective.beta1 = 1e-13;
    cfg.objective.beta2 = 1e-16;
    let solver = solver_for(&cfg)?;
    let target = scenario::target(&cfg, &solver)?;
    let w = scenario::weights(&cfg);
    let g = solver.grid;
    let u = ControlTrajectory::from_fn(2, g.nt, g.dt(), |j, t| 0.3 * (2.0 * t - j as f64).cos());
    let (_, grad, run) = value_and_gradient(&solver, &u, &target, &w)?;
    let mut checks = support_checks("gradient base run", &run);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dirs: Vec<_> = (0..5).map(|_| random_direction(&mut rng, &u)).collect();
    let eps = [1e-2, 1e-3, 1e-4];
    let jobs: Vec<(usize, usize)> = (0..dirs.len()).flat_map(|d| (0..eps.len()).map(move |e| (d, e))).collect();
    let fd: Vec<AppResult<f64>> =
        jobs.par_iter().map(|&(d, e)| Ok(fd_directional(&solver, &u, &dirs[d], &target, &w, eps[e])?)).collect();
    let tangents: Vec<AppResult<f64>> = dirs
        .par_iter()
        .map(|d| Ok(solve_tangent(&solver, &u, d, Some((&target, &w)))?.directional_derivative.unwrap_or(0.0)))
        .collect();
    let fd = fd.into_iter().collect::<AppResult<Vec<_>>>()?;
    let tangents = tangents.into_iter().collect::<AppResult<Vec<_>>>()?;
    let mut t = Table::new(&["direction", "epsilon", "fd_value", "adjoint_value", "tangent_value", "rel_err"]);
    let (mut worst_fd, mut worst_gap) = (0.0f64, 0.0f64);
    for (d, dir) in dirs.iter().enumerate() {
        let adj = grad.dot(dir);
        let row = &fd[d * eps.len()..(d + 1) * eps.len()];
        for (e, v) in row.iter().enumerate() {
            t.row(vec![d.to_string(), num(eps[e]), num(*v), num(adj), num(tangents[d]), num((v - adj).abs() / adj.abs())]);
        }
        // plateau: the step whose value agrees best with its neighbour
        let plateau = (0..eps.len() - 1)
            .min_by(|&a, &b| (row[a] - row[a + 1]).abs().total_cmp(&(row[b] - row[b + 1]).abs()))
            .map_or(0, |k| k + 1);
        worst_fd = worst_fd.max((row[plateau] - adj).abs() / adj.abs());
        worst_gap = worst_gap.max((tangents[d] - adj).abs() / tangents[d].abs());
    }
    checks.insert(0, Check::at_most("adjoint vs central FD at the plateau step", worst_fd, 0.02));
    checks.insert(1, Check::at_most("tangent vs adjoint duality gap", worst_gap, 0.01));
    checks.push(runtime("gradient", start, 600.0));
    Ok(report("gradient", checks, t.finish()))
}

fn regularization() -> AppResult<SuiteReport> {
    let mut cfg = RunConfig::default();
    cfg.grid.x_extent = 10.0;
    cfg.grid.p_extent = 2.0;
    cfg.grid.nx = 40;
    cfg.grid.np = 8;
    cfg.grid.nt = Some(16);
    cfg.coils = twin_config(40, 16).coils;
    cfg.objective.tracking = false;
    cfg.objective.target = TargetKind::Zero;
    cfg.objective.beta = 1.0;
    cfg.objective.beta1 = 0.1;
    cfg.objective.beta2 = 0.01;
    let solver = solver_for(&cfg)?;
    let target = scenario::target(&cfg, &solver)?;
    let w = scenario::weights(&cfg);
    let g = solver.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = ControlTrajectory::zeros(2, g.nt, g.dt());
    let mut u = random_direction(&mut rng, &base);
    u.scale(0.8);
    let (_, grad, run) = value_and_gradient(&solver, &u, &target, &w)?;
    let h = 1e-3;
    let eval = |v: &ControlTrajectory, w: &ObjectiveWeights| -> AppResult<f64> {
        let run = solver.run(v)?;
        Ok(objective_eval(&run, v, &solver.model, &target, w)?.total)
    };
    let comps: Vec<AppResult<f64>> = (0..u.values.len())
        .into_par_iter()
        .map(|i| {
            let (mut p, mut m) = (u.clone(), u.clone());
            p.values[i] += h;
            m.values[i] -= h;
            Ok((eval(&p, &w)? - eval(&m, &w)?) / (2.0 * h))
        })
        .collect();
    let mut t = Table::new(&["kind", "index", "fd_value", "gradient_value"]);
    let scale = grad.max_abs();
    let mut worst: f64 = 0.0;
    for (i, c) in comps.into_iter().enumerate() {
        let c = c?;
        worst = worst.max((c - grad.values[i]).abs() / scale);
        t.row(vec!["component".into(), i.to_string(), num(c), num(grad.values[i])]);
    }
    let mut worst_dir: f64 = 0.0;
    for d in 0..5 {
        let dir = random_direction(&mut rng, &u);
        let fd = fd_directional(&solver, &u, &dir, &target, &w, h)?;
        let an = grad.dot(&dir);
        worst_dir = worst_dir.max((fd - an).abs() / an.abs());
        t.row(vec!["direction".into(), d.to_string(), num(fd), num(an)]);
    }
    let mut checks = vec![
        Check::at_most("regularization gradient vs FD, components", worst, 1e-9),
        Check::at_most("regularization gradient vs FD, directions", worst_dir, 1e-9),
    ];
    checks.extend(support_checks("regularization base run", &run));
    Ok(report("regularization", checks, t.finish()))
}

pub fn optimizer_config() -> RunConfig {
    let mut cfg = twin_config(24, 32);
    cfg.objective.beta = 1e-13;
    cfg.objective.beta1 = 1e-16;
    cfg.objective.beta2 = 1e-20;
    cfg.optimizer.max_iters = 20;
    cfg.optimizer.tol_rel = 1e-3;
    cfg.optimizer.tol_abs = 0.0;
    cfg
}

fn optimizer() -> AppResult<SuiteReport> {
    let cfg = optimizer_config();
    let solver = solver_for(&cfg)?;
    let target = scenario::target(&cfg, &solver)?;
    let g = solver.grid;
    let ocfg = scenario::optimizer_config(&cfg);
    let u0 = ControlTrajectory::zeros(2, g.nt, g.dt());
    let res = minimize(&solver, &u0, &target, &ocfg)?;
    let h = &res.history;
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
    for r in h {
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
    let rises = h.windows(2).filter(|p| p[1].value > p[0].value).count();
    let first = h[0];
    let last = h[h.len() - 1];
    let checks = vec![
        Check::at_most("objective increases in history", rises as f64, 0.0),
        Check::at_least("objective reduction", 1.0 - last.value / first.value, 0.5),
        Check::at_most("iterations", last.iter as f64, 20.0),
        Check::at_most("final / initial projected gradient", last.projected_gradient / first.projected_gradient, 1e-3),
        Check::at_most("KKT complementarity", res.kkt.complementarity, 0.0),
        Check::at_most("KKT stationarity / initial gradient", res.kkt.stationarity / first.stationarity.max(1e-300), 1e-3),
    ];
    Ok(report("optimizer", checks, t.finish()))
}
