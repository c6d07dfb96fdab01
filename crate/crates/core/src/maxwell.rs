//! Staggered leapfrog solver for the 2D Maxwell system
//!
//! ```text
//! d_t E1 - d_x2 B = -J1,   d_t E2 + d_x1 B = -J2,   d_t B + d_x1 E2 - d_x2 E1 = 0
//! ```
//!
//! with `J = j_f + U`. Both `E` and `B` are stored at integer time levels and
//! advanced by the kick-drift-kick form of the Yee scheme:
//! `B^{n+1/2} = B^n - dt/2 curl E^n`, `E^{n+1} = E^n + dt (curl* B^{n+1/2} - J^{n+1/2})`,
//! `B^{n+1} = B^{n+1/2} - dt/2 curl E^{n+1}`. This is algebraically the
//! classic staggered leapfrog, so discrete `div curl* = 0` holds exactly.

use crate::control::{ControlModel, ControlTrajectory};
use crate::error::{Result, SolverError};
use crate::field::{CenterFields, CenterVector, EdgeField, FieldState, ScalarField};
use crate::grid::SpatialGrid;
use crate::math::sqrt;
use alloc::format;
use alloc::vec::Vec;

/// Current sources entering the field update at one half step.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellSource {
    pub j_plasma: EdgeField,
    pub u_ext: EdgeField,
}

impl MaxwellSource {
    pub fn zeros(n: usize) -> Self {
        Self { j_plasma: EdgeField::zeros(n), u_ext: EdgeField::zeros(n) }
    }

    pub fn total(&self) -> EdgeField {
        let mut t = self.j_plasma.clone();
        t.axpy(1.0, &self.u_ext);
        t
    }
}

/// `d_x1 E2 - d_x2 E1` at the `b` locations (interior only).
pub fn curl_e(e1: &ScalarField, e2: &ScalarField, dx: f64) -> ScalarField {
    let n = e1.n;
    let mut out = ScalarField::zeros(n);
    let inv = 1.0 / dx;
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let v = (e2.get(i1 + 1, i2) - e2.get(i1, i2)) - (e1.get(i1, i2 + 1) - e1.get(i1, i2));
            out.set(i1, i2, v * inv);
        }
    }
    out
}

/// `(d_x2 B, -d_x1 B)` at the `e1`/`e2` locations (interior only). With
/// zero boundary layers this is the exact transpose of [`curl_e`].
pub fn curl_b(b: &ScalarField, dx: f64) -> EdgeField {
    let n = b.n;
    let mut out = EdgeField::zeros(n);
    let inv = 1.0 / dx;
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            out.c1.set(i1, i2, (b.get(i1, i2) - b.get(i1, i2 - 1)) * inv);
            out.c2.set(i1, i2, -(b.get(i1, i2) - b.get(i1 - 1, i2)) * inv);
        }
    }
    out
}

/// Discrete divergence of an edge field at cell centers.
pub fn divergence(c1: &ScalarField, c2: &ScalarField, dx: f64) -> ScalarField {
    let n = c1.n;
    let mut out = ScalarField::zeros(n);
    let inv = 1.0 / dx;
    for i1 in 0..n {
        for i2 in 0..n {
            let w1 = if i1 > 0 { c1.get(i1 - 1, i2) } else { 0.0 };
            let w2 = if i2 > 0 { c2.get(i1, i2 - 1) } else { 0.0 };
            out.set(i1, i2, (c1.get(i1, i2) - w1 + c2.get(i1, i2) - w2) * inv);
        }
    }
    out
}

/// Weights of the face interpolation `(-1, 7, 7, -1) / 12` from the centers
/// `i - 1 ..= i + 2` to the edge `i + 1/2`. Its staggered difference is the
/// fourth-order central difference of the center values.
const FACE: [(isize, f64); 4] = [(-1, -1.0 / 12.0), (0, 7.0 / 12.0), (1, 7.0 / 12.0), (2, -1.0 / 12.0)];

/// Interpolates a cell-centered vector onto the staggered edges (interior
/// edges only; centers outside the grid count as zero).
pub fn average_to_edges(j: &CenterVector) -> EdgeField {
    let n = j.c1.n;
    let mut out = EdgeField::zeros(n);
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let (mut a, mut b) = (0.0, 0.0);
            for (m, w) in FACE {
                if let Some(k) = i1.checked_add_signed(m).filter(|&k| k < n) {
                    a += w * j.c1.data[k * n + i2];
                }
                if let Some(k) = i2.checked_add_signed(m).filter(|&k| k < n) {
                    b += w * j.c2.data[i1 * n + k];
                }
            }
            out.c1.data[i1 * n + i2] = a;
            out.c2.data[i1 * n + i2] = b;
        }
    }
    out
}

/// Transpose of [`average_to_edges`].
pub fn average_to_edges_transpose(e: &EdgeField) -> CenterVector {
    let n = e.c1.n;
    let mut out = CenterVector::zeros(n);
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            let (a, b) = (e.c1.data[i1 * n + i2], e.c2.data[i1 * n + i2]);
            for (m, w) in FACE {
                if let Some(k) = i1.checked_add_signed(m).filter(|&k| k < n) {
                    out.c1.data[k * n + i2] += w * a;
                }
                if let Some(k) = i2.checked_add_signed(m).filter(|&k| k < n) {
                    out.c2.data[i1 * n + k] += w * b;
                }
            }
        }
    }
    out
}

/// Interpolates the staggered fields to cell centers. `E` uses the
/// transpose of [`average_to_edges`], so that `int E . j` is the same on
/// edges and centers; `B` uses four-point averages.
pub fn fields_to_centers(e1: &ScalarField, e2: &ScalarField, b: &ScalarField) -> CenterFields {
    let n = b.n;
    let e = average_to_edges_transpose(&EdgeField { c1: e1.clone(), c2: e2.clone() });
    let mut out = CenterFields::zeros(n);
    out.e1 = e.c1;
    out.e2 = e.c2;
    for i1 in 1..n {
        for i2 in 1..n {
            out.b.set(
                i1,
                i2,
                0.25 * (b.get(i1 - 1, i2 - 1) + b.get(i1 - 1, i2) + b.get(i1, i2 - 1) + b.get(i1, i2)),
            );
        }
    }
    out
}

/// Transpose of [`fields_to_centers`]; returns `(e1, e2, b)` adjoints.
pub fn fields_to_centers_transpose(c: &CenterFields) -> FieldState {
    let n = c.b.n;
    let e = average_to_edges(&CenterVector { c1: c.e1.clone(), c2: c.e2.clone() });
    let mut out = FieldState::zeros(n);
    out.e1 = e.c1;
    out.e2 = e.c2;
    for i1 in 1..n {
        for i2 in 1..n {
            let q = 0.25 * c.b.get(i1, i2);
            out.b.data[(i1 - 1) * n + i2 - 1] += q;
            out.b.data[(i1 - 1) * n + i2] += q;
            out.b.data[i1 * n + i2 - 1] += q;
            out.b.data[i1 * n + i2] += q;
        }
    }
    out
}

/// Clears the outermost layer of an edge field (the Dirichlet layer).
pub fn clear_boundary(s: &mut ScalarField) {
    let n = s.n;
    for k in 0..n {
        s.set(0, k, 0.0);
        s.set(n - 1, k, 0.0);
        s.set(k, 0, 0.0);
        s.set(k, n - 1, 0.0);
    }
}

/// Returns an error when `dt` violates the 2D leapfrog stability bound.
pub fn check_cfl(grid: &SpatialGrid, dt: f64) -> Result<()> {
    let bound = grid.maxwell_cfl_bound();
    if dt > bound * (1.0 + 1e-12) {
        return Err(SolverError::Cfl { dt, bound });
    }
    Ok(())
}

/// `B <- B - tau curl E`.
pub fn kick_b(fields: &mut FieldState, tau: f64, dx: f64) {
    let c = curl_e(&fields.e1, &fields.e2, dx);
    fields.b.axpy(-tau, &c);
}

/// `E <- E + tau (curl* B - J)`.
pub fn drift_e(fields: &mut FieldState, current: &EdgeField, tau: f64, dx: f64) {
    let c = curl_b(&fields.b, dx);
    fields.e1.axpy(tau, &c.c1);
    fields.e2.axpy(tau, &c.c2);
    fields.e1.axpy(-tau, &current.c1);
    fields.e2.axpy(-tau, &current.c2);
}

/// One leapfrog step of the field equations with sources sampled at the
/// half step. The zero boundary layer is never written.
pub fn maxwell_step(fields: &mut FieldState, src: &MaxwellSource, dt: f64, dx: f64) {
    let total = src.total();
    maxwell_step_total(fields, &total, dt, dx);
}

pub fn maxwell_step_total(fields: &mut FieldState, current: &EdgeField, dt: f64, dx: f64) {
    kick_b(fields, 0.5 * dt, dx);
    drift_e(fields, current, dt, dx);
    kick_b(fields, 0.5 * dt, dx);
}

/// Leapfrog-invariant field energy
/// `1/2 sum(|E^n|^2 + B^{n-1/2} B^{n+1/2}) dx^2`, written with the
/// integer-time `B^n` as `1/2 sum(|E|^2 + B^2 - (dt/2)^2 (curl E)^2) dx^2`.
/// With vanishing sources it is conserved to round-off.
pub fn field_energy(fields: &FieldState, grid: &SpatialGrid, dt: f64) -> f64 {
    let c = curl_e(&fields.e1, &fields.e2, grid.dx());
    let q = 0.25 * dt * dt;
    0.5 * (fields.e1.sum_sq() + fields.e2.sum_sq() + fields.b.sum_sq() - q * c.sum_sq()) * grid.cell_area()
}

/// Plain `1/2 sum(|E|^2 + B^2) dx^2`.
pub fn field_energy_plain(fields: &FieldState, grid: &SpatialGrid) -> f64 {
    0.5 * (fields.e1.sum_sq() + fields.e2.sum_sq() + fields.b.sum_sq()) * grid.cell_area()
}

/// Fields generated by the control alone from zero data, at every integer
/// time level `0..=nt`.
pub fn external_field_solve(model: &ControlModel, u: &ControlTrajectory, grid: &SpatialGrid) -> Result<Vec<FieldState>> {
    check_cfl(grid, u.dt)?;
    if model.n != grid.n {
        return Err(SolverError::ShapeMismatch { what: "control model grid", expected: grid.n, found: model.n });
    }
    if u.n_coils != model.len() {
        return Err(SolverError::ShapeMismatch { what: "coil count", expected: model.len(), found: u.n_coils });
    }
    let dx = grid.dx();
    let mut fields = FieldState::zeros(grid.n);
    let mut out = Vec::with_capacity(u.nt + 1);
    out.push(fields.clone());
    for n in 0..u.nt {
        let src = model.current_at_half_step(u, n);
        maxwell_step_total(&mut fields, &src, u.dt, dx);
        out.push(fields.clone());
    }
    Ok(out)
}

/// `L^2` norm of `div E - (rho_f - rho_bg) + int_0^t div U` at cell centers.
pub fn divergence_residual(
    fields: &FieldState,
    rho: &ScalarField,
    background: &ScalarField,
    div_u_integral: &ScalarField,
    grid: &SpatialGrid,
) -> f64 {
    let mut r = divergence(&fields.e1, &fields.e2, grid.dx());
    r.axpy(-1.0, rho);
    r.axpy(1.0, background);
    r.axpy(1.0, div_u_integral);
    r.l2_norm(grid)
}

/// Solves `-lap phi = s` with the five-point Laplacian on cell centers
/// `2..n-2` (zero on the two outer layers) by conjugate gradients, and
/// returns `E = -grad phi` on the interior edges together with the final
/// relative residual.
pub fn poisson_electric_field(source: &ScalarField, grid: &SpatialGrid, tol: f64, max_iter: usize) -> (EdgeField, f64) {
    let n = grid.n;
    let dx = grid.dx();
    let inv2 = 1.0 / (dx * dx);
    let inside = |i: usize| i >= 2 && i + 2 < n;
    let apply = |x: &ScalarField, out: &mut ScalarField| {
        for i1 in 0..n {
            for i2 in 0..n {
                if !(inside(i1) && inside(i2)) {
                    out.set(i1, i2, 0.0);
                    continue;
                }
                let v = 4.0 * x.get(i1, i2)
                    - x.get(i1 - 1, i2)
                    - x.get(i1 + 1, i2)
                    - x.get(i1, i2 - 1)
                    - x.get(i1, i2 + 1);
                out.set(i1, i2, v * inv2);
            }
        }
    };
    let mut b = source.clone();
    for i1 in 0..n {
        for i2 in 0..n {
            if !(inside(i1) && inside(i2)) {
                b.set(i1, i2, 0.0);
            }
        }
    }
    let bnorm = sqrt(b.sum_sq());
    let mut phi = ScalarField::zeros(n);
    let mut residual = 0.0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = ScalarField::zeros(n);
        let mut rr = r.sum_sq();
        for _ in 0..max_iter {
            apply(&p, &mut ap);
            let alpha = rr / p.dot(&ap);
            phi.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            let rr_new = r.sum_sq();
            if sqrt(rr_new) <= tol * bnorm {
                rr = rr_new;
                break;
            }
            let beta = rr_new / rr;
            for (pv, rv) in p.data.iter_mut().zip(&r.data) {
                *pv = rv + beta * *pv;
            }
            rr = rr_new;
        }
        residual = sqrt(rr) / bnorm;
    }
    let mut e = EdgeField::zeros(n);
    for i1 in 1..n - 1 {
        for i2 in 1..n - 1 {
            e.c1.set(i1, i2, -(phi.get(i1 + 1, i2) - phi.get(i1, i2)) / dx);
            e.c2.set(i1, i2, -(phi.get(i1, i2 + 1) - phi.get(i1, i2)) / dx);
        }
    }
    (e, residual)
}

/// Validates that two spatial arrays match the grid.
pub fn check_shape(what: &'static str, s: &ScalarField, grid: &SpatialGrid) -> Result<()> {
    if s.n != grid.n {
        return Err(SolverError::ShapeMismatch { what, expected: grid.n, found: s.n });
    }
    Ok(())
}

#[allow(dead_code)]
fn describe(grid: &SpatialGrid) -> alloc::string::String {
    format!("{}x{} over [-{e},{e}]^2", grid.n, grid.n, e = grid.extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_interior(n: usize, rng: &mut impl Rng) -> ScalarField {
        let mut s = ScalarField::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        clear_boundary(&mut s);
        s
    }

    #[test]
    fn curls_are_mutual_transposes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10;
        let dx = 0.3;
        let e1 = random_interior(n, &mut rng);
        let e2 = random_interior(n, &mut rng);
        let b = random_interior(n, &mut rng);
        let lhs = curl_e(&e1, &e2, dx).dot(&b);
        let cb = curl_b(&b, dx);
        let rhs = cb.c1.dot(&e1) + cb.c2.dot(&e2);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn divergence_of_curl_vanishes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = random_interior(12, &mut rng);
        let c = curl_b(&b, 0.1);
        let d = divergence(&c.c1, &c.c2, 0.1);
        // the last row and column sit against the truncated Dirichlet layer
        for i in 0..11 {
            for j in 0..11 {
                assert!(d.get(i, j).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn averaging_transposes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 9;
        let j = CenterVector { c1: random_interior(n, &mut rng), c2: random_interior(n, &mut rng) };
        let e = EdgeField { c1: random_interior(n, &mut rng), c2: random_interior(n, &mut rng) };
        let lhs = average_to_edges(&j).dot(&e);
        let t = average_to_edges_transpose(&e);
        let rhs = t.c1.dot(&j.c1) + t.c2.dot(&j.c2);
        assert!((lhs - rhs).abs() < 1e-12);

        let f = FieldState { e1: random_interior(n, &mut rng), e2: random_interior(n, &mut rng), b: random_interior(n, &mut rng) };
        let c = CenterFields { e1: random_interior(n, &mut rng), e2: random_interior(n, &mut rng), b: random_interior(n, &mut rng) };
        let fc = fields_to_centers(&f.e1, &f.e2, &f.b);
        let lhs = fc.e1.dot(&c.e1) + fc.e2.dot(&c.e2) + fc.b.dot(&c.b);
        let rhs = fields_to_centers_transpose(&c).dot(&f);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let mut f = FieldState::zeros(16);
        maxwell_step(&mut f, &MaxwellSource::zeros(16), 0.05, 0.1);
        assert_eq!(f, FieldState::zeros(16));
    }

    #[test]
    fn uniform_interior_b_is_static() {
        let n = 16;
        let mut f = FieldState::zeros(n);
        // constant B away from the boundary: curl vanishes where E is updated
        // except next to the Dirichlet layer, which is far from the probe
        f.b = ScalarField::from_fn(n, |_, _| 1.0);
        clear_boundary(&mut f.b);
        let before = f.b.get(8, 8);
        maxwell_step(&mut f, &MaxwellSource::zeros(n), 0.05, 0.1);
        assert_eq!(f.b.get(8, 8), before);
        assert_eq!(f.e1.get(8, 8), 0.0);
        assert_eq!(f.e2.get(8, 8), 0.0);
    }

    #[test]
    fn vacuum_energy_is_leapfrog_invariant() {
        let grid = SpatialGrid::new(48, 2.0).unwrap();
        let dx = grid.dx();
        let dt = 0.5 * dx;
        let mut f = FieldState::zeros(48);
        f.b = ScalarField::from_fn(48, |i, j| {
            let (x, y) = (grid.coord(i) + 0.5 * dx, grid.coord(j) + 0.5 * dx);
            (-(x * x + y * y) / 0.08).exp()
        });
        clear_boundary(&mut f.b);
        let w0 = field_energy(&f, &grid, dt);
        for _ in 0..40 {
            maxwell_step(&mut f, &MaxwellSource::zeros(48), dt, dx);
        }
        let w1 = field_energy(&f, &grid, dt);
        assert!(((w1 - w0) / w0).abs() < 1e-12, "{}", (w1 - w0) / w0);
        // the plain energy differs only at O(dt^2)
        let plain = field_energy_plain(&f, &grid);
        assert!(((plain - w0) / w0).abs() < 0.1);
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        assert!(check_cfl(&grid, 0.5 * grid.dx()).is_ok());
        assert!(matches!(check_cfl(&grid, grid.dx()), Err(SolverError::Cfl { .. })));
    }

    #[test]
    fn poisson_field_has_prescribed_divergence() {
        let grid = SpatialGrid::new(32, 2.0).unwrap();
        let s = ScalarField::from_fn(32, |i, j| {
            let (x, y) = (grid.coord(i), grid.coord(j));
            (-(x - 0.3).powi(2) / 0.05 - y * y / 0.05).exp() - (-(x + 0.3).powi(2) / 0.05 - y * y / 0.05).exp()
        });
        let (e, res) = poisson_electric_field(&s, &grid, 1e-12, 2000);
        assert!(res < 1e-12);
        let d = divergence(&e.c1, &e.c2, grid.dx());
        for i in 3..29 {
            for j in 3..29 {
                assert!((d.get(i, j) - s.get(i, j)).abs() < 1e-9);
            }
        }
    }
}
