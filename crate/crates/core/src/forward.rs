//! The coupled time loop.
//!
//! Step `n -> n+1` (fields `E`, `B` at integer times, control averaged to
//! `t_{n+1/2}`):
//!
//! ```text
//! f1  = X(dt/2) f                  j1 = A J(f1)
//! Bh  = B - dt/2 curl E
//! Eh  = E + dt/2 (curl* Bh - j1 - U)
//! f2  = P(dt; M(Eh, Bh)) f1        j2 = A J(f2)
//! E'  = E + dt (curl* Bh - (j1 + j2)/2 - U)
//! B'  = Bh - dt/2 curl E'
//! f'  = X(dt/2) f2
//! ```
//!
//! `J` is the momentum quadrature of the current at cell centers, `A` the
//! average onto edges and `M` the average of the fields onto cell centers.
//! The same [`Stepper`] provides the exact linearization and its transpose,
//! which the sensitivity module drives.

use crate::control::{ControlModel, ControlTrajectory};
use crate::distribution::{
    charge_density, current_density, kinetic_energy_density, support_radii_eps, Distribution, Norm, SUPPORT_EPSILON,
};
use crate::error::{Result, SolverError};
use crate::field::{CenterFields, EdgeField, FieldState, ScalarField};
use crate::grid::{MomentumTable, PhaseGrid};
use crate::math::{abs, FOUR_PI};
use crate::maxwell::{
    average_to_edges, average_to_edges_transpose, check_cfl, curl_b, curl_e, divergence, field_energy, fields_to_centers,
    fields_to_centers_transpose, poisson_electric_field,
};
use crate::vlasov::{
    advect_space, advect_space_transpose, clip_and_renormalize, flush_small, push_momentum, push_momentum_adjoint,
    push_momentum_tangent, FlushMask, ForceField, Scratch,
};
use alloc::format;
use alloc::vec::Vec;

/// Threshold for the support radii reported in diagnostics.
pub const DIAGNOSTIC_EPSILON: f64 = 1e-12;

/// Neutralizing background used to build the initial electric field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    /// Immobile charge equal to the initial density; `E0` solves a
    /// homogeneous problem and is zero.
    InitialDensity,
    /// Uniform density equal to the mean of the initial charge.
    Mean,
    /// No background; the full initial charge sources `E0`.
    None,
}

/// Initial state together with the background charge entering Gauss's law.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub f0: Distribution,
    pub fields0: FieldState,
    pub background: ScalarField,
    /// Relative residual of the Poisson solve (0 when nothing was solved).
    pub poisson_residual: f64,
}

impl InitialData {
    /// Builds `E0 = -grad phi` from `rho(f0) - background` and takes `B0` as
    /// given (zero when `None`).
    pub fn new(f0: Distribution, b0: Option<ScalarField>, background: Background) -> Result<Self> {
        if !f0.is_finite() {
            return Err(SolverError::Config("initial density has non-finite samples".into()));
        }
        if f0.min_value() < 0.0 {
            return Err(SolverError::Config(format!("initial density is negative (min {})", f0.min_value())));
        }
        let g = f0.grid;
        let n = g.nx;
        let rho = charge_density(&f0);
        let bg = match background {
            Background::InitialDensity => rho.clone(),
            Background::Mean => {
                let mean = rho.data.iter().sum::<f64>() / rho.data.len() as f64;
                ScalarField::from_fn(n, |_, _| mean)
            }
            Background::None => ScalarField::zeros(n),
        };
        let mut src = rho.clone();
        src.axpy(-1.0, &bg);
        let mut fields = FieldState::zeros(n);
        let mut res = 0.0;
        if src.max_abs() > 0.0 {
            let (e, r) = poisson_electric_field(&src, &g.spatial(), 1e-10, 20 * n * n);
            fields.e1 = e.c1;
            fields.e2 = e.c2;
            res = r;
        }
        if let Some(b) = b0 {
            if b.n != n {
                return Err(SolverError::ShapeMismatch { what: "initial magnetic field", expected: n, found: b.n });
            }
            fields.b = b;
        }
        Ok(Self { f0, fields0: fields, background: bg, poisson_residual: res })
    }

    /// Uses the given fields verbatim.
    pub fn with_fields(f0: Distribution, fields0: FieldState, background: ScalarField) -> Result<Self> {
        if f0.min_value() < 0.0 || !f0.is_finite() {
            return Err(SolverError::Config("initial density must be finite and nonnegative".into()));
        }
        if fields0.n() != f0.grid.nx || background.n != f0.grid.nx {
            return Err(SolverError::ShapeMismatch { what: "initial fields", expected: f0.grid.nx, found: fields0.n() });
        }
        Ok(Self { f0, fields0, background, poisson_residual: 0.0 })
    }

    /// `(R, r0, R~)`: spatial and momentum radii of `f0` and radius of the
    /// initial fields.
    pub fn support_radii(&self) -> (f64, f64, f64) {
        let (rx, rp) = support_radii_eps(&self.f0, DIAGNOSTIC_EPSILON);
        let g = self.f0.grid;
        let h = 0.5 * g.dx();
        let mut rf: f64 = 0.0;
        for i1 in 0..g.nx {
            for i2 in 0..g.nx {
                let (x, y) = (g.x_coord(i1), g.x_coord(i2));
                let probe = |s: &ScalarField, ox: f64, oy: f64, r: &mut f64| {
                    if abs(s.get(i1, i2)) >= DIAGNOSTIC_EPSILON {
                        *r = r.max(crate::math::hypot(x + ox, y + oy));
                    }
                };
                probe(&self.fields0.e1, h, 0.0, &mut rf);
                probe(&self.fields0.e2, 0.0, h, &mut rf);
                probe(&self.fields0.b, h, h, &mut rf);
            }
        }
        (rx, rp, rf)
    }
}

/// Run-time options of the forward solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardConfig {
    /// Abort when the outer two momentum layers carry more than this
    /// fraction of the `L^1` mass.
    pub escape_tolerance: f64,
    /// Abort when the momentum support radius exceeds this fraction of the
    /// momentum extent.
    pub support_fraction: f64,
    /// Abort when `|E|`, `|B|` or `|f|` exceed this on the outer layers.
    pub boundary_tolerance: f64,
    pub boundary_width: usize,
    /// Number of passes of the half-step field/push coupling (1 or 2).
    pub picard_passes: usize,
    /// Keep the state every `snapshot_stride` steps (0: only the initial
    /// state). The adjoint recomputes the steps in between.
    pub snapshot_stride: usize,
    /// Clip negative samples and restore the mass after every step.
    pub clip_negative: bool,
    /// Verify the finite-propagation margin before running.
    pub check_support_margin: bool,
    /// Compute the full diagnostic record every step.
    pub diagnostics: bool,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            escape_tolerance: 1e-8,
            support_fraction: 0.9,
            boundary_tolerance: 1e-10,
            boundary_width: 2,
            picard_passes: 1,
            snapshot_stride: 8,
            clip_negative: false,
            check_support_margin: true,
            diagnostics: true,
        }
    }
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.escape_tolerance > 0.0) {
            problems.push(format!("escape_tolerance must be positive (got {})", self.escape_tolerance));
        }
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            problems.push(format!("support_fraction must lie in (0, 1] (got {})", self.support_fraction));
        }
        if !(self.boundary_tolerance > 0.0) {
            problems.push(format!("boundary_tolerance must be positive (got {})", self.boundary_tolerance));
        }
        if self.boundary_width == 0 {
            problems.push("boundary_width must be at least 1".into());
        }
        if !(1..=2).contains(&self.picard_passes) {
            problems.push(format!("picard_passes must be 1 or 2 (got {})", self.picard_passes));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SolverError::Config(problems.join("; ")))
        }
    }
}

/// State at one integer time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t_index: usize,
    pub f: Distribution,
    pub fields: FieldState,
    /// `int_0^t div U dtau` at cell centers.
    pub div_u_integral: ScalarField,
}

/// Diagnostics at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticRecord {
    pub step: usize,
    pub time: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub mass: f64,
    pub min_f: f64,
    pub kinetic_energy: f64,
    pub field_energy: f64,
    pub total_energy: f64,
    pub internal_energy: f64,
    /// `int E_ext . j_f dx`.
    pub external_work: f64,
    pub gauss_residual: f64,
    pub charge_norm: f64,
    pub support_x: f64,
    pub support_p: f64,
    /// Largest force magnitude on the support during the step that starts
    /// at this level (zero for the last level).
    pub max_force: f64,
    pub boundary_field: f64,
    pub boundary_density: f64,
    pub momentum_boundary_fraction: f64,
}

/// Quantities of one step needed to linearize it.
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Density after the first half shift.
    pub f1: Distribution,
    /// Cell-centered fields used by the momentum push.
    pub centers: CenterFields,
    /// Survivors of the flush after each of the three substeps.
    pub masks: [FlushMask; 3],
}

/// Owns the per-step kernels and scratch buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: PhaseGrid,
    pub table: MomentumTable,
    pub picard_passes: usize,
    /// Samples below this are flushed to zero after every substep.
    pub flush_threshold: f64,
    scratch: Scratch,
}

fn edge_current(f: &Distribution, table: &MomentumTable) -> EdgeField {
    average_to_edges(&current_density(f, table))
}

/// `f_bar += J^T A^T w`.
fn edge_current_transpose(bar: &mut Distribution, w: &EdgeField, table: &MomentumTable) {
    let c = average_to_edges_transpose(w);
    let g = bar.grid;
    let scale = FOUR_PI * g.momentum_weight();
    for cell in 0..g.nx * g.nx {
        let (a1, a2) = (scale * c.c1.data[cell], scale * c.c2.data[cell]);
        if a1 == 0.0 && a2 == 0.0 {
            continue;
        }
        for (v, out) in table.v.iter().zip(bar.cell_mut(cell)) {
            *out += a1 * v[0] + a2 * v[1];
        }
    }
}

/// `E + tau (curl* B - j - U)` on edges.
fn half_field(fields: &FieldState, bh: &ScalarField, j: &EdgeField, u: &EdgeField, tau: f64, dx: f64) -> EdgeField {
    let cb = curl_b(bh, dx);
    let mut out = fields.electric();
    out.axpy(tau, &cb);
    out.axpy(-tau, j);
    out.axpy(-tau, u);
    out
}

impl Stepper {
    pub fn new(grid: PhaseGrid, picard_passes: usize) -> Self {
        Self { grid, table: grid.momentum_table(), picard_passes, flush_threshold: SUPPORT_EPSILON, scratch: Scratch::new(&grid) }
    }

    fn dt(&self) -> f64 {
        self.grid.dt()
    }

    /// Advances `(f, fields)` by one step. With `trace`, the intermediate
    /// density and push fields are recorded (single-pass coupling only).
    pub fn step(&mut self, f: &mut Distribution, fields: &mut FieldState, u: &EdgeField, trace: Option<&mut StepTrace>) {
        let dt = self.dt();
        let dx = self.grid.dx();
        let eps = self.flush_threshold;
        let mut masks: [FlushMask; 3] = Default::default();
        let keep = trace.is_some();
        let [m0, m1, m2] = &mut masks;
        advect_space(f, &self.table, 0.5 * dt, &mut self.scratch);
        flush_small(f, eps, keep.then_some(&mut *m0));
        let j1 = edge_current(f, &self.table);
        let f1 = if self.picard_passes > 1 || trace.is_some() { Some(f.clone()) } else { None };
        let c = curl_e(&fields.e1, &fields.e2, dx);
        fields.b.axpy(-0.5 * dt, &c);
        let eh = half_field(fields, &fields.b, &j1, u, 0.5 * dt, dx);
        let mut centers = fields_to_centers(&eh.c1, &eh.c2, &fields.b);
        push_momentum(f, &centers, &self.table, dt, &mut self.scratch);
        flush_small(f, eps, keep.then_some(&mut *m1));
        let mut j2 = edge_current(f, &self.table);
        for _ in 1..self.picard_passes {
            let mut jm = j1.clone();
            jm.axpy(1.0, &j2);
            jm.scale(0.5);
            let eh = half_field(fields, &fields.b, &jm, u, 0.5 * dt, dx);
            centers = fields_to_centers(&eh.c1, &eh.c2, &fields.b);
            f.values.copy_from_slice(&f1.as_ref().expect("kept for passes").values);
            push_momentum(f, &centers, &self.table, dt, &mut self.scratch);
            flush_small(f, eps, keep.then_some(&mut *m1));
            j2 = edge_current(f, &self.table);
        }
        let mut jt = j1;
        jt.axpy(1.0, &j2);
        jt.scale(0.5);
        jt.axpy(1.0, u);
        let cb = curl_b(&fields.b, dx);
        fields.e1.axpy(dt, &cb.c1);
        fields.e2.axpy(dt, &cb.c2);
        fields.e1.axpy(-dt, &jt.c1);
        fields.e2.axpy(-dt, &jt.c2);
        let c = curl_e(&fields.e1, &fields.e2, dx);
        fields.b.axpy(-0.5 * dt, &c);
        advect_space(f, &self.table, 0.5 * dt, &mut self.scratch);
        flush_small(f, eps, keep.then_some(&mut *m2));
        if let Some(t) = trace {
            t.f1 = f1.expect("kept for trace");
            t.centers = centers;
            t.masks = masks;
        }
    }

    /// Tangent of [`Stepper::step`] around the traced base step.
    pub fn tangent_step(&mut self, df: &mut Distribution, dfields: &mut FieldState, du: &EdgeField, base: &StepTrace) {
        let dt = self.dt();
        let dx = self.grid.dx();
        advect_space(df, &self.table, 0.5 * dt, &mut self.scratch);
        base.masks[0].apply(df);
        let j1 = edge_current(df, &self.table);
        let c = curl_e(&dfields.e1, &dfields.e2, dx);
        dfields.b.axpy(-0.5 * dt, &c);
        let eh = half_field(dfields, &dfields.b, &j1, du, 0.5 * dt, dx);
        let dcenters = fields_to_centers(&eh.c1, &eh.c2, &dfields.b);
        push_momentum_tangent(df, &base.f1, &base.centers, &dcenters, &self.table, dt, &mut self.scratch);
        base.masks[1].apply(df);
        let j2 = edge_current(df, &self.table);
        let mut jt = j1;
        jt.axpy(1.0, &j2);
        jt.scale(0.5);
        jt.axpy(1.0, du);
        let cb = curl_b(&dfields.b, dx);
        dfields.e1.axpy(dt, &cb.c1);
        dfields.e2.axpy(dt, &cb.c2);
        dfields.e1.axpy(-dt, &jt.c1);
        dfields.e2.axpy(-dt, &jt.c2);
        let c = curl_e(&dfields.e1, &dfields.e2, dx);
        dfields.b.axpy(-0.5 * dt, &c);
        advect_space(df, &self.table, 0.5 * dt, &mut self.scratch);
        base.masks[2].apply(df);
    }

    /// Transpose of [`Stepper::tangent_step`]. On entry `(f_bar, fields_bar)`
    /// are the adjoints of the step output; on exit those of its input.
    /// Returns the adjoint of the half-step control current.
    pub fn adjoint_step(&mut self, f_bar: &mut Distribution, fields_bar: &mut FieldState, base: &StepTrace) -> EdgeField {
        let dt = self.dt();
        let dx = self.grid.dx();
        let n = self.grid.nx;
        // B' = Bh - dt/2 curl E'
        let cb = curl_b(&fields_bar.b, dx);
        fields_bar.e1.axpy(-0.5 * dt, &cb.c1);
        fields_bar.e2.axpy(-0.5 * dt, &cb.c2);
        // E' = E + dt (curl* Bh - jt - U)
        let mut w = fields_bar.electric();
        w.scale(-dt);
        let c = curl_e(&fields_bar.e1, &fields_bar.e2, dx);
        fields_bar.b.axpy(dt, &c);
        // f' = X f2, j2 = A J f2
        base.masks[2].apply(f_bar);
        advect_space_transpose(f_bar, &self.table, 0.5 * dt, &mut self.scratch);
        let mut half_w = w.clone();
        half_w.scale(0.5);
        edge_current_transpose(f_bar, &half_w, &self.table);
        // f2 = P(f1; M(Eh, Bh))
        let mut centers_bar = CenterFields::zeros(n);
        base.masks[1].apply(f_bar);
        push_momentum_adjoint(f_bar, &base.f1, &base.centers, &mut centers_bar, &self.table, dt, &mut self.scratch);
        let m = fields_to_centers_transpose(&centers_bar);
        fields_bar.b.axpy(1.0, &m.b);
        // Eh = E + dt/2 (curl* Bh - j1 - U)
        fields_bar.e1.axpy(1.0, &m.e1);
        fields_bar.e2.axpy(1.0, &m.e2);
        let c = curl_e(&m.e1, &m.e2, dx);
        fields_bar.b.axpy(0.5 * dt, &c);
        let mut u_bar = w;
        u_bar.c1.axpy(-0.5 * dt, &m.e1);
        u_bar.c2.axpy(-0.5 * dt, &m.e2);
        let mut j1_bar = half_w;
        j1_bar.c1.axpy(-0.5 * dt, &m.e1);
        j1_bar.c2.axpy(-0.5 * dt, &m.e2);
        // Bh = B - dt/2 curl E
        let cb = curl_b(&fields_bar.b, dx);
        fields_bar.e1.axpy(-0.5 * dt, &cb.c1);
        fields_bar.e2.axpy(-0.5 * dt, &cb.c2);
        // j1 = A J f1, f1 = X f
        edge_current_transpose(f_bar, &j1_bar, &self.table);
        base.masks[0].apply(f_bar);
        advect_space_transpose(f_bar, &self.table, 0.5 * dt, &mut self.scratch);
        u_bar
    }

    pub fn empty_trace(&self) -> StepTrace {
        StepTrace { f1: Distribution::zeros(self.grid), centers: CenterFields::zeros(self.grid.nx), masks: Default::default() }
    }
}

/// Everything a forward run produces.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub grid: PhaseGrid,
    pub records: Vec<DiagnosticRecord>,
    /// `rho_f(t_k)` for `k = 0..=nt`.
    pub rho: Vec<ScalarField>,
    /// Stored states, ascending in time; always contains level 0.
    pub checkpoints: Vec<SimulationState>,
    pub snapshot_stride: usize,
    pub final_state: SimulationState,
    /// Largest negative sample removed by clipping (0 without clipping).
    pub clipped_undershoot: f64,
}

impl ForwardRun {
    /// Latest stored state at or before level `k`.
    pub fn checkpoint_before(&self, k: usize) -> Result<&SimulationState> {
        self.checkpoints
            .iter()
            .rev()
            .find(|s| s.t_index <= k)
            .ok_or_else(|| SolverError::MissingSnapshots(format!("no stored state at or before step {k}")))
    }
}

/// A forward problem: grid, controls and initial data.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    pub grid: PhaseGrid,
    pub model: ControlModel,
    pub init: InitialData,
    pub cfg: ForwardConfig,
}

impl ForwardSolver {
    pub fn new(grid: PhaseGrid, model: ControlModel, init: InitialData, cfg: ForwardConfig) -> Result<Self> {
        cfg.validate()?;
        check_cfl(&grid.spatial(), grid.dt())?;
        if model.n != grid.nx {
            return Err(SolverError::ShapeMismatch { what: "control model grid", expected: grid.nx, found: model.n });
        }
        if init.f0.grid != grid {
            return Err(SolverError::Config("initial density lives on a different grid".into()));
        }
        if cfg.check_support_margin {
            let (rx, _, rf) = init.support_radii();
            grid.check_support_margin(rf, model.support_radius, rx)?;
        }
        Ok(Self { grid, model, init, cfg })
    }

    pub fn stepper(&self) -> Stepper {
        Stepper::new(self.grid, self.cfg.picard_passes)
    }

    pub fn initial_state(&self) -> SimulationState {
        SimulationState {
            t_index: 0,
            f: self.init.f0.clone(),
            fields: self.init.fields0.clone(),
            div_u_integral: ScalarField::zeros(self.grid.nx),
        }
    }

    fn check_state(&self, s: &SimulationState) -> Result<()> {
        let step = s.t_index;
        if !s.fields.is_finite() {
            return Err(SolverError::NonFinite { step, what: "field" });
        }
        if !s.f.is_finite() {
            return Err(SolverError::NonFinite { step, what: "density" });
        }
        let w = self.cfg.boundary_width;
        let frac = s.f.momentum_boundary_fraction(w);
        if frac > self.cfg.escape_tolerance {
            return Err(SolverError::MomentumEscape { step, fraction: frac, tolerance: self.cfg.escape_tolerance });
        }
        let bf = s.fields.boundary_max(w);
        if bf > self.cfg.boundary_tolerance {
            return Err(SolverError::BoundaryLeak { step, what: "field", value: bf, tolerance: self.cfg.boundary_tolerance });
        }
        let bd = s.f.spatial_boundary_max(w);
        if bd > self.cfg.boundary_tolerance {
            return Err(SolverError::BoundaryLeak { step, what: "density", value: bd, tolerance: self.cfg.boundary_tolerance });
        }
        Ok(())
    }

    fn record(&self, s: &SimulationState, ext: &FieldState, table: &MomentumTable, rho: &ScalarField) -> Result<DiagnosticRecord> {
        let g = &self.grid;
        let area = g.spatial().cell_area();
        let f = &s.f;
        let (rx, rp) = support_radii_eps(f, DIAGNOSTIC_EPSILON);
        let limit = self.cfg.support_fraction * g.p_extent;
        if rp > limit {
            return Err(SolverError::SupportOverflow { step: s.t_index, radius: rp, limit });
        }
        let kinetic = kinetic_energy_density(f, table).data.iter().sum::<f64>() * area;
        let field = field_energy(&s.fields, &g.spatial(), g.dt());
        let internal = s.fields.sub(ext);
        let internal_field = field_energy(&internal, &g.spatial(), g.dt());
        let j = edge_current(f, table);
        let work = (ext.e1.dot(&j.c1) + ext.e2.dot(&j.c2)) * area;
        let mut r = divergence(&s.fields.e1, &s.fields.e2, g.dx());
        r.axpy(-1.0, rho);
        r.axpy(1.0, &self.init.background);
        r.axpy(1.0, &s.div_u_integral);
        Ok(DiagnosticRecord {
            step: s.t_index,
            time: g.time(s.t_index),
            l1: f.lq_norm(Norm::L1),
            l2: f.lq_norm(Norm::L2),
            linf: f.lq_norm(Norm::Linf),
            mass: f.mass(),
            min_f: f.min_value(),
            kinetic_energy: kinetic,
            field_energy: field,
            total_energy: kinetic + field,
            internal_energy: kinetic + internal_field,
            external_work: work,
            gauss_residual: r.l2_norm(&g.spatial()),
            charge_norm: rho.l2_norm(&g.spatial()),
            support_x: rx,
            support_p: rp,
            max_force: 0.0,
            boundary_field: s.fields.boundary_max(self.cfg.boundary_width),
            boundary_density: f.spatial_boundary_max(self.cfg.boundary_width),
            momentum_boundary_fraction: f.momentum_boundary_fraction(self.cfg.boundary_width),
        })
    }

    /// Runs the full time loop for the control `u`.
    pub fn run(&self, u: &ControlTrajectory) -> Result<ForwardRun> {
        self.run_observed(u, |_, _| {})
    }

    /// As [`ForwardSolver::run`], calling `observe(k, state)` at every level.
    pub fn run_observed(&self, u: &ControlTrajectory, mut observe: impl FnMut(usize, &SimulationState)) -> Result<ForwardRun> {
        let g = self.grid;
        u.check_shape(self.model.len(), g.nt)?;
        if !u.is_finite() {
            return Err(SolverError::Config("control trajectory has non-finite values".into()));
        }
        let mut stepper = self.stepper();
        let table = stepper.table.clone();
        let divs = self.model.profile_divergences();
        let mut state = self.initial_state();
        let mut ext = FieldState::zeros(g.nx);
        let dx = g.dx();
        let dt = g.dt();
        let stride = self.cfg.snapshot_stride;
        let mut checkpoints = alloc::vec![state.clone()];
        let mut rho = Vec::with_capacity(g.nt + 1);
        let mut records = Vec::with_capacity(g.nt + 1);
        let mut undershoot: f64 = 0.0;
        let mut trace = if self.cfg.diagnostics { Some(stepper.empty_trace()) } else { None };
        self.check_state(&state)?;
        for n in 0..=g.nt {
            let r = charge_density(&state.f);
            if self.cfg.diagnostics {
                records.push(self.record(&state, &ext, &table, &r)?);
            }
            rho.push(r);
            observe(n, &state);
            if n == g.nt {
                break;
            }
            let uh = u.half_step(n);
            let current = self.model.combine(&uh);
            stepper.step(&mut state.f, &mut state.fields, &current, trace.as_mut());
            if let Some(t) = trace.as_ref() {
                let k = ForceField { fields: &t.centers };
                records[n].max_force = k.max_on_support(&t.f1, &table, DIAGNOSTIC_EPSILON);
            }
            crate::maxwell::maxwell_step_total(&mut ext, &current, dt, dx);
            for (d, a) in divs.iter().zip(&uh) {
                if *a != 0.0 {
                    state.div_u_integral.axpy(dt * a, d);
                }
            }
            if self.cfg.clip_negative {
                undershoot = undershoot.max(clip_and_renormalize(&mut state.f));
            }
            state.t_index = n + 1;
            self.check_state(&state)?;
            if stride > 0 && (n + 1) % stride == 0 && n + 1 < g.nt {
                checkpoints.push(state.clone());
            }
        }
        Ok(ForwardRun { grid: g, records, rho, checkpoints, snapshot_stride: stride, final_state: state, clipped_undershoot: undershoot })
    }
}

/// Convenience wrapper around [`ForwardSolver`].
pub fn run_forward(init: InitialData, model: ControlModel, u: &ControlTrajectory, cfg: ForwardConfig) -> Result<ForwardRun> {
    let grid = init.f0.grid;
    ForwardSolver::new(grid, model, init, cfg)?.run(u)
}

/// Central-difference residual of the internal energy balance,
/// `(e_int(t_{k+1}) - e_int(t_{k-1})) / (2 dt) - int E_ext . j_f dx (t_k)`,
/// for `k = 1..nt-1`, as `(t_k, residual)`.
pub fn energy_identity_residual(records: &[DiagnosticRecord]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k in 1..records.len().saturating_sub(1) {
        let dt2 = records[k + 1].time - records[k - 1].time;
        let rate = (records[k + 1].internal_energy - records[k - 1].internal_energy) / dt2;
        out.push((records[k].time, rate - records[k].external_work));
    }
    out
}

/// Weights of the tracking and regularization terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Include `1/2 ||rho_f - rho_d||^2`.
    pub tracking: bool,
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if ok(self.beta) && ok(self.beta1) && ok(self.beta2) {
            Ok(())
        } else {
            Err(SolverError::Config(format!(
                "objective weights must be finite and nonnegative (beta = {}, beta1 = {}, beta2 = {})",
                self.beta, self.beta1, self.beta2
            )))
        }
    }
}

/// Trapezoid weights of the time grid.
pub fn time_weights(nt: usize, dt: f64) -> Vec<f64> {
    (0..=nt).map(|k| if k == 0 || k == nt { 0.5 * dt } else { dt }).collect()
}

/// Split value of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValue {
    pub tracking: f64,
    pub regularization: f64,
    pub total: f64,
}

/// `1/2 sum_k w_k ||rho_k - rho_d,k||^2 dx^2`.
pub fn tracking_term(rho: &[ScalarField], target: &[ScalarField], grid: &PhaseGrid) -> Result<f64> {
    if rho.len() != target.len() {
        return Err(SolverError::ShapeMismatch { what: "target time levels", expected: rho.len(), found: target.len() });
    }
    let w = time_weights(grid.nt, grid.dt());
    let area = grid.spatial().cell_area();
    let mut acc = 0.0;
    for ((r, d), wk) in rho.iter().zip(target).zip(&w) {
        if r.n != d.n {
            return Err(SolverError::ShapeMismatch { what: "target grid", expected: r.n, found: d.n });
        }
        let s: f64 = r.data.iter().zip(&d.data).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += wk * s;
    }
    Ok(0.5 * acc * area)
}

/// `beta/2 sum_j c_j (||u_j||^2 + beta1 ||D u_j||^2 + beta2 ||D^2 u_j||^2)`
/// with trapezoid `L^2` in time and forward difference quotients.
pub fn regularization_term(u: &ControlTrajectory, c: &[f64], w: &ObjectiveWeights) -> f64 {
    let dt = u.dt;
    let tw = time_weights(u.nt, dt);
    let mut acc = 0.0;
    for (j, cj) in c.iter().enumerate() {
        let r = u.row(j);
        let l2: f64 = r.iter().zip(&tw).map(|(a, b)| b * a * a).sum();
        let d1: f64 = r.windows(2).map(|s| (s[1] - s[0]) / dt).map(|d| dt * d * d).sum();
        let d2: f64 = r.windows(3).map(|s| (s[2] - 2.0 * s[1] + s[0]) / (dt * dt)).map(|d| dt * d * d).sum();
        acc += cj * (l2 + w.beta1 * d1 + w.beta2 * d2);
    }
    0.5 * w.beta * acc
}

/// Exact gradient of [`regularization_term`] with respect to every sample.
pub fn regularization_gradient(u: &ControlTrajectory, c: &[f64], w: &ObjectiveWeights) -> ControlTrajectory {
    let dt = u.dt;
    let tw = time_weights(u.nt, dt);
    let mut g = ControlTrajectory::zeros(u.n_coils, u.nt, dt);
    for (j, cj) in c.iter().enumerate() {
        let s = w.beta * cj;
        let r = u.row(j).to_vec();
        let out = g.row_mut(j);
        for k in 0..r.len() {
            out[k] += s * tw[k] * r[k];
        }
        for k in 0..r.len().saturating_sub(1) {
            let d = (r[k + 1] - r[k]) / dt;
            // d/du of dt d^2 with d = (u_{k+1} - u_k)/dt
            out[k + 1] += s * w.beta1 * 2.0 * d * 0.5;
            out[k] -= s * w.beta1 * 2.0 * d * 0.5;
        }
        for k in 0..r.len().saturating_sub(2) {
            let d = (r[k + 2] - 2.0 * r[k + 1] + r[k]) / (dt * dt);
            let a = s * w.beta2 * d / dt;
            out[k + 2] += a;
            out[k + 1] -= 2.0 * a;
            out[k] += a;
        }
    }
    g
}

/// Objective value of a finished run.
pub fn objective_eval(
    run: &ForwardRun,
    u: &ControlTrajectory,
    model: &ControlModel,
    target: &[ScalarField],
    weights: &ObjectiveWeights,
) -> Result<ObjectiveValue> {
    weights.validate()?;
    let tracking = if weights.tracking { tracking_term(&run.rho, target, &run.grid)? } else { 0.0 };
    let regularization = regularization_term(u, &model.c, weights);
    Ok(ObjectiveValue { tracking, regularization, total: tracking + regularization })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularization_of_constant_control() {
        let u = ControlTrajectory::from_fn(1, 20, 0.05, |_, _| 1.0);
        let w = ObjectiveWeights { beta: 0.3, beta1: 0.1, beta2: 0.01, tracking: false };
        let v = regularization_term(&u, &[2.0], &w);
        assert!((v - 0.5 * 0.3 * 2.0 * 1.0).abs() < 1e-14);
    }

    #[test]
    fn regularization_gradient_matches_differences() {
        let u = ControlTrajectory::from_fn(2, 12, 0.1, |j, t| (t * (j as f64 + 1.0)).sin());
        let w = ObjectiveWeights { beta: 0.7, beta1: 0.2, beta2: 0.05, tracking: false };
        let c = [1.3, 0.4];
        let g = regularization_gradient(&u, &c, &w);
        for idx in 0..u.values.len() {
            let h = 1e-5;
            let mut p = u.clone();
            p.values[idx] += h;
            let mut m = u.clone();
            m.values[idx] -= h;
            let fd = (regularization_term(&p, &c, &w) - regularization_term(&m, &c, &w)) / (2.0 * h);
            assert!((fd - g.values[idx]).abs() < 1e-8 * (1.0 + fd.abs()), "{idx}: {fd} {}", g.values[idx]);
        }
    }

    #[test]
    fn trapezoid_weights_sum_to_t() {
        let w = time_weights(10, 0.1);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
