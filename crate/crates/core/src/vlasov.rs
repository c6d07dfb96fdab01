//! Semi-Lagrangian transport for `d_t f + v(p).d_x f + K.d_p f = 0` with
//! `K = E - v(p)_perp B`.
//!
//! One step is the split product `X(dt/2) P(dt) X(dt/2)`:
//!
//! * `X(tau)` shifts every momentum slice in space by `tau v(p)`, first along
//!   `x1` and then along `x2`. The displacement is constant per slice, so the
//!   shift is a 1D cubic Lagrange stencil and its transpose is the shift by
//!   `-tau v(p)`.
//! * `P(dt)` pushes momenta at fixed `x` with cell-centered fields. The foot
//!   of the characteristic comes from the midpoint rule
//!   `p_m = p - dt/2 K(p)`, `foot = p - dt K(p_m)`, and `f` is interpolated
//!   there with the bicubic stencil.
//!
//! Both operators are linear in `f`; `P` additionally depends on the fields.
//! [`push_momentum_tangent`] and [`push_momentum_adjoint`] are the exact
//! linearization of `P` and its transpose.

use crate::distribution::{ActiveBox, Distribution};
use crate::error::{Result, SolverError};
use crate::field::CenterFields;
use crate::grid::{MomentumTable, PhaseGrid};
use crate::interp::{lagrange_weight_derivs, lagrange_weights, split, ShiftStencil, Stencil2};
use crate::kinematics::{lorentz_force, norm, relativistic_velocity, velocity_jacobian, Vec2};
use crate::math::{abs, ceil};
use alloc::vec;
use alloc::vec::Vec;

/// Force `K(x, p) = E(x) - v(p)_perp B(x)` evaluated from cell-centered fields.
#[derive(Debug, Clone, Copy)]
pub struct ForceField<'a> {
    pub fields: &'a CenterFields,
}

impl ForceField<'_> {
    #[inline]
    pub fn at(&self, c: usize, p: Vec2) -> Vec2 {
        let (e1, e2, b) = self.fields.at(c);
        lorentz_force([e1, e2], b, p)
    }

    /// Largest `|K|` over cells and momenta where `f` is at least `eps`.
    pub fn max_on_support(&self, f: &Distribution, table: &MomentumTable, eps: f64) -> f64 {
        let mut m: f64 = 0.0;
        for c in 0..f.grid.nx * f.grid.nx {
            let (e1, e2, b) = self.fields.at(c);
            if e1 == 0.0 && e2 == 0.0 && b == 0.0 {
                continue;
            }
            for (q, &v) in f.cell(c).iter().enumerate() {
                if crate::math::abs(v) >= eps {
                    m = m.max(norm(lorentz_force([e1, e2], b, table.p[q])));
                }
            }
        }
        m
    }
}

/// Reusable buffers for the transport kernels.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    line: Vec<f64>,
    block: Vec<f64>,
    /// Shift weights by momentum index, one array per stencil node.
    weights: [Vec<f64>; 4],
    /// Contiguous momentum ranges `[q0, q1)` sharing the stencil offset.
    runs: Vec<(usize, usize, isize)>,
}

impl Scratch {
    pub fn new(grid: &PhaseGrid) -> Self {
        let np2 = grid.np2();
        Self {
            line: vec![0.0; grid.nx * np2],
            block: vec![0.0; np2],
            weights: [vec![0.0; np2], vec![0.0; np2], vec![0.0; np2], vec![0.0; np2]],
            runs: Vec::new(),
        }
    }
}

/// Shifts lines stored as `buf[line * np2 + q]` into `dst[off + line * stride + q]`
/// for output lines in `range`.
#[allow(clippy::too_many_arguments)]
fn shift_kernel(
    buf: &[f64],
    nlines: usize,
    np2: usize,
    weights: &[Vec<f64>; 4],
    runs: &[(usize, usize, isize)],
    dst: &mut [f64],
    off: usize,
    stride: usize,
    range: (usize, usize),
) {
    let n = nlines as isize;
    for i in range.0..range.1 {
        let row = off + i * stride;
        for &(q0, q1, first) in runs {
            let s0 = i as isize + first;
            let out = &mut dst[row + q0..row + q1];
            let (w0, w1, w2, w3) = (&weights[0][q0..q1], &weights[1][q0..q1], &weights[2][q0..q1], &weights[3][q0..q1]);
            if s0 >= 0 && s0 + 3 < n {
                let b = s0 as usize * np2;
                let b0 = &buf[b + q0..b + q1];
                let b1 = &buf[b + np2 + q0..b + np2 + q1];
                let b2 = &buf[b + 2 * np2 + q0..b + 2 * np2 + q1];
                let b3 = &buf[b + 3 * np2 + q0..b + 3 * np2 + q1];
                for k in 0..out.len() {
                    out[k] = w0[k] * b0[k] + w1[k] * b1[k] + w2[k] * b2[k] + w3[k] * b3[k];
                }
            } else {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (m, w) in [w0, w1, w2, w3].into_iter().enumerate() {
                    let s = s0 + m as isize;
                    if s >= 0 && s < n {
                        let b = s as usize * np2;
                        for (o, (wk, bk)) in out.iter_mut().zip(w.iter().zip(&buf[b + q0..b + q1])) {
                            *o += wk * bk;
                        }
                    }
                }
            }
        }
    }
}

fn build_stencils(scratch: &mut Scratch, grid: &PhaseGrid, bx: &ActiveBox, table: &MomentumTable, cells: impl Fn(Vec2) -> f64) {
    scratch.runs.clear();
    let np = grid.np;
    for k1 in bx.p1.0..bx.p1.1 {
        for k2 in bx.p2.0..bx.p2.1 {
            let q = k1 * np + k2;
            let st = ShiftStencil::new(cells(table.v[q]));
            for m in 0..4 {
                scratch.weights[m][q] = st.w[m];
            }
            match scratch.runs.last_mut() {
                Some(r) if r.1 == q && r.2 == st.first => r.1 = q + 1,
                _ => scratch.runs.push((q, q + 1, st.first)),
            }
        }
    }
}

/// `f <- X(tau) f`, i.e. `f(x, p) <- f(x - tau v(p), p)` up to interpolation.
/// Work is restricted to the bounding box of the nonzero samples.
pub fn advect_space(f: &mut Distribution, table: &MomentumTable, tau: f64, scratch: &mut Scratch) {
    let grid = f.grid;
    let bx = f.active_box();
    if bx.is_empty() || tau == 0.0 {
        return;
    }
    let dx = grid.dx();
    let reach = ceil(crate::math::abs(tau) / dx) as usize + 2;
    let grown = bx.grown(&grid, reach, 0);
    shift_axis1(f, table, tau / dx, &bx, grown.x1, scratch);
    shift_axis2(f, table, tau / dx, &ActiveBox { x1: grown.x1, ..bx }, grown.x2, scratch);
}

/// Transpose of [`advect_space`] (the shift by `-tau`, axes in reverse order).
pub fn advect_space_transpose(f: &mut Distribution, table: &MomentumTable, tau: f64, scratch: &mut Scratch) {
    let grid = f.grid;
    let bx = f.active_box();
    if bx.is_empty() || tau == 0.0 {
        return;
    }
    let dx = grid.dx();
    let reach = ceil(crate::math::abs(tau) / dx) as usize + 2;
    let grown = bx.grown(&grid, reach, 0);
    shift_axis2(f, table, -tau / dx, &bx, grown.x2, scratch);
    shift_axis1(f, table, -tau / dx, &ActiveBox { x2: grown.x2, ..bx }, grown.x1, scratch);
}

/// Shift along `x1` by `s v1(p)` cells; nonzeros confined to `bx`, output
/// written on `out_range`.
fn shift_axis1(f: &mut Distribution, table: &MomentumTable, s: f64, bx: &ActiveBox, out_range: (usize, usize), scratch: &mut Scratch) {
    let grid = f.grid;
    let (nx, np2) = (grid.nx, grid.np2());
    build_stencils(scratch, &grid, bx, table, |v| s * v[0]);
    let stride = nx * np2;
    for i2 in bx.x2.0..bx.x2.1 {
        for i1 in 0..nx {
            let src = (i1 * nx + i2) * np2;
            scratch.line[i1 * np2..(i1 + 1) * np2].copy_from_slice(&f.values[src..src + np2]);
        }
        shift_kernel(&scratch.line, nx, np2, &scratch.weights, &scratch.runs, &mut f.values, i2 * np2, stride, out_range);
    }
}

fn shift_axis2(f: &mut Distribution, table: &MomentumTable, s: f64, bx: &ActiveBox, out_range: (usize, usize), scratch: &mut Scratch) {
    let grid = f.grid;
    let (nx, np2) = (grid.nx, grid.np2());
    build_stencils(scratch, &grid, bx, table, |v| s * v[1]);
    for i1 in bx.x1.0..bx.x1.1 {
        let src = i1 * nx * np2;
        scratch.line[..nx * np2].copy_from_slice(&f.values[src..src + nx * np2]);
        shift_kernel(&scratch.line, nx, np2, &scratch.weights, &scratch.runs, &mut f.values, src, np2, out_range);
    }
}

/// Foot of the momentum characteristic and the intermediate point.
#[inline]
fn momentum_foot(e: Vec2, b: f64, p: Vec2, dt: f64) -> (Vec2, Vec2) {
    let k = lorentz_force(e, b, p);
    let pm = [p[0] - 0.5 * dt * k[0], p[1] - 0.5 * dt * k[1]];
    let km = lorentz_force(e, b, pm);
    ([p[0] - dt * km[0], p[1] - dt * km[1]], pm)
}

#[inline]
fn stencil_at(grid: &PhaseGrid, foot: Vec2) -> Stencil2 {
    let inv = 1.0 / grid.dp();
    Stencil2::new((foot[0] + grid.p_extent) * inv - 0.5, (foot[1] + grid.p_extent) * inv - 0.5)
}

#[inline]
fn fields_vanish(fields: &CenterFields, c: usize) -> bool {
    let (e1, e2, b) = fields.at(c);
    e1 == 0.0 && e2 == 0.0 && b == 0.0
}

/// `f <- P(dt; fields) f`. Cells with vanishing fields are left untouched
/// (the push is the identity there), and within a cell only momenta whose
/// foot can reach the nonzero samples are interpolated.
pub fn push_momentum(f: &mut Distribution, fields: &CenterFields, table: &MomentumTable, dt: f64, scratch: &mut Scratch) {
    let grid = f.grid;
    let np = grid.np;
    let inv = 1.0 / grid.dp();
    for c in 0..grid.nx * grid.nx {
        if fields_vanish(fields, c) {
            continue;
        }
        let cell = f.cell_mut(c);
        let Some((r1, r2)) = block_extent(cell, np) else {
            continue;
        };
        scratch.block.copy_from_slice(cell);
        let (e1, e2, b) = fields.at(c);
        let reach = ceil(dt * (crate::math::hypot(e1, e2) + abs(b)) * inv) as usize + 2;
        let k1s = r1.0.saturating_sub(reach)..(r1.1 + reach).min(np);
        for k1 in k1s {
            for k2 in r2.0.saturating_sub(reach)..(r2.1 + reach).min(np) {
                let q = k1 * np + k2;
                let (foot, _) = momentum_foot([e1, e2], b, table.p[q], dt);
                cell[q] = bicubic(&scratch.block, np, (foot[0] + grid.p_extent) * inv - 0.5, (foot[1] + grid.p_extent) * inv - 0.5);
            }
        }
    }
}

/// Index ranges `[lo, hi)` of the nonzero rows and columns of an `np x np`
/// block, or `None` if it is all zero.
fn block_extent(block: &[f64], np: usize) -> Option<((usize, usize), (usize, usize))> {
    let (mut a1, mut b1, mut a2, mut b2) = (np, 0, np, 0);
    for (k1, row) in block.chunks_exact(np).enumerate() {
        if let Some(lo) = row.iter().position(|&v| v != 0.0) {
            let hi = np - row.iter().rev().position(|&v| v != 0.0).unwrap_or(0);
            a1 = a1.min(k1);
            b1 = k1 + 1;
            a2 = a2.min(lo);
            b2 = b2.max(hi);
        }
    }
    (a1 < b1).then_some(((a1, b1), (a2, b2)))
}

/// Value-only bicubic interpolation at index coordinates `(y1, y2)`.
#[inline]
fn bicubic(slice: &[f64], n: usize, y1: f64, y2: f64) -> f64 {
    let (b1, t1) = split(y1);
    let (b2, t2) = split(y2);
    let (b1, b2) = (b1 - 1, b2 - 1);
    let w1 = lagrange_weights(t1);
    let w2 = lagrange_weights(t2);
    let ni = n as isize;
    let mut acc = 0.0;
    if b1 >= 0 && b2 >= 0 && b1 + 3 < ni && b2 + 3 < ni {
        let r0 = b1 as usize * n + b2 as usize;
        for (a, wa) in w1.iter().enumerate() {
            let r = &slice[r0 + a * n..r0 + a * n + 4];
            acc += wa * (w2[0] * r[0] + w2[1] * r[1] + w2[2] * r[2] + w2[3] * r[3]);
        }
    } else {
        for (a, wa) in w1.iter().enumerate() {
            let i = b1 + a as isize;
            if i < 0 || i >= ni {
                continue;
            }
            for (cc, wc) in w2.iter().enumerate() {
                let j = b2 + cc as isize;
                if j >= 0 && j < ni {
                    acc += wa * wc * slice[i as usize * n + j as usize];
                }
            }
        }
    }
    acc
}

/// Per-axis value and derivative weights over nodes `base - 2 ..= base + 2`.
/// On a node (up to rounding) the interpolant is only continuous; there the
/// derivative is the mean of the two one-sided stencil derivatives, which
/// makes the linearization agree with central differences.
#[inline]
fn axis_weights(y: f64) -> (isize, [f64; 5], [f64; 5]) {
    let (mut b, t) = split(y);
    let on_node = t < 1e-9 || t > 1.0 - 1e-9;
    if t > 0.5 {
        b += 1;
    }
    if on_node {
        (b - 2, [0.0, 0.0, 1.0, 0.0, 0.0], [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0])
    } else {
        let b = if t > 0.5 { b - 1 } else { b };
        let w = lagrange_weights(t);
        let d = lagrange_weight_derivs(t);
        (b - 2, [0.0, w[0], w[1], w[2], w[3]], [0.0, d[0], d[1], d[2], d[3]])
    }
}

/// Gradient of the bicubic interpolant of `slice` with respect to the foot
/// (momentum units).
#[inline]
fn foot_gradient(grid: &PhaseGrid, foot: Vec2, slice: &[f64]) -> Vec2 {
    let np = grid.np as isize;
    let inv = 1.0 / grid.dp();
    let (b1, w1, d1) = axis_weights((foot[0] + grid.p_extent) * inv - 0.5);
    let (b2, w2, d2) = axis_weights((foot[1] + grid.p_extent) * inv - 0.5);
    let (mut g1, mut g2) = (0.0, 0.0);
    for a in 0..5 {
        let i = b1 + a as isize;
        if i < 0 || i >= np {
            continue;
        }
        let (mut rw, mut rd) = (0.0, 0.0);
        for c in 0..5 {
            let j = b2 + c as isize;
            if j < 0 || j >= np {
                continue;
            }
            let s = slice[(i * np + j) as usize];
            rw += w2[c] * s;
            rd += d2[c] * s;
        }
        g1 += d1[a] * rw;
        g2 += w1[a] * rd;
    }
    [g1 * inv, g2 * inv]
}

/// Sensitivities `(d f2 / d e1, d f2 / d e2, d f2 / d b)` of one pushed sample
/// given the interpolant gradient `g` with respect to the foot.
#[inline]
fn field_sensitivities(e: Vec2, b: f64, p: Vec2, pm: Vec2, g: Vec2, dt: f64) -> [f64; 3] {
    let v = relativistic_velocity(p);
    let vm = relativistic_velocity(pm);
    let jm = velocity_jacobian(pm);
    let _ = e;
    // dK(pm)/dpm = b [[dv2/dp1, dv2/dp2], [-dv1/dp1, -dv1/dp2]]
    let c = [[b * jm[1][0], b * jm[1][1]], [-b * jm[0][0], -b * jm[0][1]]];
    let mut out = [0.0; 3];
    let directs: [(Vec2, Vec2); 3] = [([1.0, 0.0], [1.0, 0.0]), ([0.0, 1.0], [0.0, 1.0]), ([vm[1], -vm[0]], [v[1], -v[0]])];
    for (k, (dk_m, dk_p)) in directs.iter().enumerate() {
        let dpm = [-0.5 * dt * dk_p[0], -0.5 * dt * dk_p[1]];
        let tot = [dk_m[0] + c[0][0] * dpm[0] + c[0][1] * dpm[1], dk_m[1] + c[1][0] * dpm[0] + c[1][1] * dpm[1]];
        out[k] = -dt * (g[0] * tot[0] + g[1] * tot[1]);
    }
    out
}

/// Tangent of the momentum push: `df2 = P df1 + (D_F P f1)[dF]`, computed in
/// place on `df` (which holds `df1` on entry). `f1` is the base state before
/// the push.
pub fn push_momentum_tangent(
    df: &mut Distribution,
    f1: &Distribution,
    fields: &CenterFields,
    dfields: &CenterFields,
    table: &MomentumTable,
    dt: f64,
    scratch: &mut Scratch,
) {
    let grid = f1.grid;
    let np = grid.np;
    for c in 0..grid.nx * grid.nx {
        let base_zero = fields_vanish(fields, c);
        let pert_zero = fields_vanish(dfields, c);
        if base_zero && pert_zero {
            continue;
        }
        let (e1, e2, b) = fields.at(c);
        let (de1, de2, db) = dfields.at(c);
        let base = f1.cell(c);
        let base_nonzero = base.iter().any(|&v| v != 0.0);
        let cell = df.cell_mut(c);
        scratch.block.copy_from_slice(cell);
        let pert_nonzero = scratch.block.iter().any(|&v| v != 0.0);
        if !base_nonzero && !pert_nonzero {
            continue;
        }
        for (q, out) in cell.iter_mut().enumerate() {
            let p = table.p[q];
            let (foot, pm) = momentum_foot([e1, e2], b, p, dt);
            let st = stencil_at(&grid, foot);
            let mut v = if base_zero { scratch.block[q] } else { st.eval(&scratch.block, np) };
            if !pert_zero && base_nonzero {
                let s = field_sensitivities([e1, e2], b, p, pm, foot_gradient(&grid, foot, base), dt);
                v += s[0] * de1 + s[1] * de2 + s[2] * db;
            }
            *out = v;
        }
    }
}

/// Transpose of [`push_momentum_tangent`]. On entry `bar` holds the adjoint
/// of the pushed state; on exit the adjoint of the state before the push.
/// Field adjoints are accumulated into `fields_bar`.
pub fn push_momentum_adjoint(
    bar: &mut Distribution,
    f1: &Distribution,
    fields: &CenterFields,
    fields_bar: &mut CenterFields,
    table: &MomentumTable,
    dt: f64,
    scratch: &mut Scratch,
) {
    let grid = f1.grid;
    let np = grid.np;
    for c in 0..grid.nx * grid.nx {
        let cell = bar.cell_mut(c);
        if cell.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (e1, e2, b) = fields.at(c);
        let base_zero = fields_vanish(fields, c);
        let base = f1.cell(c);
        let base_nonzero = base.iter().any(|&v| v != 0.0);
        scratch.block.copy_from_slice(cell);
        if !base_zero {
            cell.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut acc = [0.0; 3];
        for q in 0..grid.np2() {
            let w = scratch.block[q];
            if w == 0.0 {
                continue;
            }
            let p = table.p[q];
            let (foot, pm) = momentum_foot([e1, e2], b, p, dt);
            let st = stencil_at(&grid, foot);
            if !base_zero {
                st.scatter(w, cell, np);
            }
            if base_nonzero {
                let s = field_sensitivities([e1, e2], b, p, pm, foot_gradient(&grid, foot, base), dt);
                acc[0] += s[0] * w;
                acc[1] += s[1] * w;
                acc[2] += s[2] * w;
            }
        }
        fields_bar.e1.data[c] += acc[0];
        fields_bar.e2.data[c] += acc[1];
        fields_bar.b.data[c] += acc[2];
    }
}

/// Full split step `X(dt/2) P(dt) X(dt/2)` with fields frozen at the half
/// step. Returns an error when the momentum boundary carries more than
/// `escape_tolerance` of the `L^1` mass afterwards.
pub fn transport_step(
    f: &mut Distribution,
    fields: &CenterFields,
    table: &MomentumTable,
    dt: f64,
    escape_tolerance: f64,
    scratch: &mut Scratch,
) -> Result<()> {
    advect_space(f, table, 0.5 * dt, scratch);
    push_momentum(f, fields, table, dt, scratch);
    advect_space(f, table, 0.5 * dt, scratch);
    let frac = f.momentum_boundary_fraction(2);
    if frac > escape_tolerance {
        return Err(SolverError::MomentumEscape { step: 0, fraction: frac, tolerance: escape_tolerance });
    }
    Ok(())
}

/// Which samples survived a [`flush_small`], one bit per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlushMask {
    bits: Vec<u64>,
}

impl FlushMask {
    /// Zeroes the samples that were flushed; the linearization of the flush.
    pub fn apply(&self, f: &mut Distribution) {
        for (w, chunk) in self.bits.iter().zip(f.values.chunks_mut(64)) {
            if *w == u64::MAX {
                continue;
            }
            for (b, v) in chunk.iter_mut().enumerate() {
                if w >> b & 1 == 0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Sets samples with `|f| < eps` to zero. Keeps the discrete support from
/// creeping outward through interpolation tails far below any physical
/// amplitude.
pub fn flush_small(f: &mut Distribution, eps: f64, mask: Option<&mut FlushMask>) {
    if eps <= 0.0 {
        if let Some(m) = mask {
            m.bits = vec![u64::MAX; f.values.len().div_ceil(64)];
        }
        return;
    }
    match mask {
        None => {
            for v in f.values.iter_mut() {
                *v = if abs(*v) < eps { 0.0 } else { *v };
            }
        }
        Some(m) => {
            m.bits.clear();
            for chunk in f.values.chunks_mut(64) {
                let mut w = 0u64;
                for (b, v) in chunk.iter_mut().enumerate() {
                    if abs(*v) < eps {
                        *v = 0.0;
                    } else {
                        w |= 1 << b;
                    }
                }
                if chunk.len() < 64 {
                    w |= !0u64 << chunk.len();
                }
                m.bits.push(w);
            }
        }
    }
}

/// Sets negative samples to zero and rescales to the previous mass. Not
/// differentiable; forward runs only.
pub fn clip_and_renormalize(f: &mut Distribution) -> f64 {
    let before: f64 = f.values.iter().sum();
    let mut undershoot: f64 = 0.0;
    for v in f.values.iter_mut() {
        if *v < 0.0 {
            undershoot = undershoot.max(-*v);
            *v = 0.0;
        }
    }
    let after: f64 = f.values.iter().sum();
    if after > 0.0 {
        f.scale(before / after);
    }
    undershoot
}

/// Midpoint-rule integration of `x' = v(p)`, `p' = K(t, x, p)` from `t_from`
/// to `t_to` in `steps` substeps. `force(t, x, p)` supplies `K`. The flag is
/// set when the path leaves `|p_i| <= p_extent`.
pub fn trace_characteristic(
    t_from: f64,
    t_to: f64,
    x: Vec2,
    p: Vec2,
    steps: usize,
    p_extent: f64,
    force: impl Fn(f64, Vec2, Vec2) -> Vec2,
) -> (Vec2, Vec2, bool) {
    let steps = steps.max(1);
    let h = (t_to - t_from) / steps as f64;
    let (mut x, mut p) = (x, p);
    let mut escaped = false;
    for s in 0..steps {
        let t = t_from + s as f64 * h;
        let v = relativistic_velocity(p);
        let k = force(t, x, p);
        let xm = [x[0] + 0.5 * h * v[0], x[1] + 0.5 * h * v[1]];
        let pm = [p[0] + 0.5 * h * k[0], p[1] + 0.5 * h * k[1]];
        let vm = relativistic_velocity(pm);
        let km = force(t + 0.5 * h, xm, pm);
        x = [x[0] + h * vm[0], x[1] + h * vm[1]];
        p = [p[0] + h * km[0], p[1] + h * km[1]];
        if crate::math::abs(p[0]) > p_extent || crate::math::abs(p[1]) > p_extent {
            escaped = true;
        }
    }
    (x, p, escaped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use rand::{Rng, SeedableRng};

    fn grid() -> PhaseGrid {
        PhaseGrid::new(1.0, 2.0, 10, 12, 0.5, 5).unwrap()
    }

    fn random_dist(g: PhaseGrid, seed: u64, inner: bool) -> Distribution {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = Distribution::zeros(g);
        for v in f.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        if inner {
            // zero a frame so that active-box growth is exercised
            for i1 in 0..g.nx {
                for i2 in 0..g.nx {
                    if i1 < 2 || i2 < 3 || i1 >= g.nx - 3 || i2 >= g.nx - 2 {
                        f.cell_mut(i1 * g.nx + i2).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
        }
        f
    }

    fn random_fields(n: usize, seed: u64, scale: f64) -> CenterFields {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = || ScalarField::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0));
        CenterFields { e1: r(), e2: r(), b: r() }
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid();
        let t = g.momentum_table();
        let mut f = Distribution::zeros(g);
        let mut s = Scratch::new(&g);
        transport_step(&mut f, &random_fields(g.nx, 1, 1.0), &t, g.dt(), 1e-8, &mut s).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn space_advection_transpose_is_exact() {
        let g = grid();
        let t = g.momentum_table();
        let mut s = Scratch::new(&g);
        for inner in [false, true] {
            let a = random_dist(g, 3, inner);
            let b = random_dist(g, 4, !inner);
            let mut xa = a.clone();
            advect_space(&mut xa, &t, 0.37, &mut s);
            let mut xtb = b.clone();
            advect_space_transpose(&mut xtb, &t, 0.37, &mut s);
            let lhs = xa.dot(&b);
            let rhs = a.dot(&xtb);
            assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0), "{lhs} {rhs}");
        }
    }

    #[test]
    fn active_box_restriction_matches_full_update() {
        let g = grid();
        let t = g.momentum_table();
        let mut s = Scratch::new(&g);
        let mut a = random_dist(g, 5, true);
        // also restrict momenta
        for c in 0..g.nx * g.nx {
            for (q, v) in a.cell_mut(c).iter_mut().enumerate() {
                if q / g.np < 3 {
                    *v = 0.0;
                }
            }
        }
        let mut fast = a.clone();
        advect_space(&mut fast, &t, 0.29, &mut s);
        // reference: explicit per-slice shift on the whole grid
        let mut reference = Distribution::zeros(g);
        let dx = g.dx();
        let nx = g.nx;
        for q in 0..g.np2() {
            let v = t.v[q];
            let st1 = ShiftStencil::new(0.29 * v[0] / dx);
            let st2 = ShiftStencil::new(0.29 * v[1] / dx);
            let mut tmp = vec![0.0; nx * nx];
            for i2 in 0..nx {
                let src: Vec<f64> = (0..nx).map(|i1| a.values[(i1 * nx + i2) * g.np2() + q]).collect();
                let mut dst = vec![0.0; nx];
                st1.apply(&src, &mut dst);
                for i1 in 0..nx {
                    tmp[i1 * nx + i2] = dst[i1];
                }
            }
            for i1 in 0..nx {
                let mut dst = vec![0.0; nx];
                st2.apply(&tmp[i1 * nx..(i1 + 1) * nx], &mut dst);
                for i2 in 0..nx {
                    reference.values[(i1 * nx + i2) * g.np2() + q] = dst[i2];
                }
            }
        }
        for (x, y) in fast.values.iter().zip(&reference.values) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn momentum_push_transpose_and_tangent() {
        let g = grid();
        let t = g.momentum_table();
        let mut s = Scratch::new(&g);
        let dt = 0.2;
        let mut fields = random_fields(g.nx, 6, 0.8);
        // a cell with vanishing fields exercises the identity shortcut
        fields.e1.data[7] = 0.0;
        fields.e2.data[7] = 0.0;
        fields.b.data[7] = 0.0;
        let f1 = random_dist(g, 7, false);
        let df1 = random_dist(g, 8, false);
        let dfields = random_fields(g.nx, 9, 1.0);
        let bar = random_dist(g, 10, false);

        let mut tang = df1.clone();
        push_momentum_tangent(&mut tang, &f1, &fields, &dfields, &t, dt, &mut s);
        let mut adj = bar.clone();
        let mut fb = CenterFields::zeros(g.nx);
        push_momentum_adjoint(&mut adj, &f1, &fields, &mut fb, &t, dt, &mut s);
        let lhs = tang.dot(&bar);
        let rhs = df1.dot(&adj) + fb.e1.dot(&dfields.e1) + fb.e2.dot(&dfields.e2) + fb.b.dot(&dfields.b);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} {rhs}");

        // tangent against central differences of the nonlinear push
        let h = 1e-6;
        let mut fp = fields.clone();
        fp.axpy(h, &dfields);
        let mut fm = fields.clone();
        fm.axpy(-h, &dfields);
        let mut a = f1.clone();
        a.axpy(h, &df1);
        push_momentum(&mut a, &fp, &t, dt, &mut s);
        let mut b = f1.clone();
        b.axpy(-h, &df1);
        push_momentum(&mut b, &fm, &t, dt, &mut s);
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for ((x, y), z) in a.values.iter().zip(&b.values).zip(&tang.values) {
            let fd = (x - y) / (2.0 * h);
            err = err.max((fd - z).abs());
            scale = scale.max(z.abs());
        }
        assert!(err < 1e-6 * scale, "{err} {scale}");
    }

    #[test]
    fn push_is_identity_without_fields() {
        let g = grid();
        let t = g.momentum_table();
        let mut s = Scratch::new(&g);
        let f = random_dist(g, 11, false);
        let mut h = f.clone();
        push_momentum(&mut h, &CenterFields::zeros(g.nx), &t, 0.3, &mut s);
        assert_eq!(h, f);
        // and the interpolation at zero displacement reproduces samples exactly
        let mut fields = CenterFields::zeros(g.nx);
        fields.e1.data[0] = 1e-300;
        let mut h = f.clone();
        push_momentum(&mut h, &fields, &t, 0.3, &mut s);
        assert_eq!(h.cell(1), f.cell(1));
    }

    #[test]
    fn uniform_electric_field_shifts_momenta() {
        // f(p) = polynomial of degree 3 in p1 inside the box: the push is exact
        let g = PhaseGrid::new(1.0, 4.0, 8, 32, 0.5, 5).unwrap();
        let t = g.momentum_table();
        let mut s = Scratch::new(&g);
        let poly = |p: [f64; 2]| 1.0 + 0.3 * p[0] - 0.2 * p[0] * p[0] + 0.05 * p[0].powi(3) + 0.1 * p[1];
        let mut f = Distribution::from_fn(g, |_, p| poly(p));
        let mut fields = CenterFields::zeros(8);
        fields.e1.fill(0.5);
        push_momentum(&mut f, &fields, &t, 0.2, &mut s);
        for k1 in 4..28 {
            for k2 in 4..28 {
                let p = [g.p_coord(k1), g.p_coord(k2)];
                let v = f.cell(9)[k1 * g.np + k2];
                assert!((v - poly([p[0] - 0.1, p[1]])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn characteristic_examples() {
        let p = [0.6, -0.8];
        let (x, q, esc) = trace_characteristic(0.0, 1.5, [0.1, 0.2], p, 7, 5.0, |_, _, _| [0.0, 0.0]);
        let v = relativistic_velocity(p);
        assert!((x[0] - 0.1 - 1.5 * v[0]).abs() < 1e-14 && (x[1] - 0.2 - 1.5 * v[1]).abs() < 1e-14);
        assert_eq!(q, p);
        assert!(!esc);

        let dt = 1e-2;
        let (_, q, _) = trace_characteristic(0.0, dt, [0.0, 0.0], p, 1, 5.0, |_, _, _| [0.7, 0.0]);
        assert!((q[0] - p[0] - dt * 0.7).abs() < 1e-15);

        // gyration: |p| drifts at O(dt^3) per step, O(dt^2) overall
        let mut drift = [0.0; 2];
        for (m, steps) in [100usize, 200].iter().enumerate() {
            let (_, q, _) = trace_characteristic(0.0, 2.0, [0.0, 0.0], [1.0, 0.0], *steps, 5.0, |_, _, p| lorentz_force([0.0, 0.0], 2.0, p));
            drift[m] = (norm(q) - 1.0).abs();
        }
        assert!(drift[0] < 1e-3 && drift[0] / drift[1] > 3.5, "{drift:?}");

        let (_, _, esc) = trace_characteristic(0.0, 1.0, [0.0, 0.0], [0.0, 0.0], 10, 0.5, |_, _, _| [1.0, 0.0]);
        assert!(esc);
    }

    #[test]
    fn force_is_divergence_free_in_momentum() {
        let fields = random_fields(8, 12, 1.0);
        let k = ForceField { fields: &fields };
        let h = 1e-4;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let c = rng.gen_range(0..64);
            let d = (k.at(c, [p[0] + h, p[1]])[0] - k.at(c, [p[0] - h, p[1]])[0]
                + k.at(c, [p[0], p[1] + h])[1]
                - k.at(c, [p[0], p[1] - h])[1])
                / (2.0 * h);
            assert!(d.abs() < 1e-8);
        }
    }
}
