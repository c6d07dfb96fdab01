//! The phase-space density and its velocity moments.

use crate::field::{CenterVector, ScalarField};
use crate::grid::{MomentumTable, PhaseGrid};
use crate::math::{abs, sqrt, FOUR_PI};
use alloc::vec;
use alloc::vec::Vec;

/// Absolute threshold below which a sample counts as outside the support.
pub const SUPPORT_EPSILON: f64 = 1e-12;

/// Samples of `f(t_k, x, p)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

/// Exponent of a discrete Lebesgue norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

/// Index ranges (half-open) that contain every nonzero sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveBox {
    pub x1: (usize, usize),
    pub x2: (usize, usize),
    pub p1: (usize, usize),
    pub p2: (usize, usize),
}

impl ActiveBox {
    pub fn is_empty(&self) -> bool {
        self.x1.0 >= self.x1.1
    }

    /// Grows every range by `cells_x` / `cells_p`, clamped to the grid.
    pub fn grown(&self, grid: &PhaseGrid, cells_x: usize, cells_p: usize) -> Self {
        if self.is_empty() {
            return *self;
        }
        let g = |r: (usize, usize), c: usize, n: usize| (r.0.saturating_sub(c), (r.1 + c).min(n));
        Self {
            x1: g(self.x1, cells_x, grid.nx),
            x2: g(self.x2, cells_x, grid.nx),
            p1: g(self.p1, cells_p, grid.np),
            p2: g(self.p2, cells_p, grid.np),
        }
    }

    pub fn full(grid: &PhaseGrid) -> Self {
        Self { x1: (0, grid.nx), x2: (0, grid.nx), p1: (0, grid.np), p2: (0, grid.np) }
    }
}

impl Distribution {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f(x, p)` at the cell centers.
    pub fn from_fn(grid: PhaseGrid, mut f: impl FnMut([f64; 2], [f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i1 in 0..grid.nx {
            let x1 = grid.x_coord(i1);
            for i2 in 0..grid.nx {
                let x2 = grid.x_coord(i2);
                for k1 in 0..grid.np {
                    let p1 = grid.p_coord(k1);
                    for k2 in 0..grid.np {
                        values.push(f([x1, x2], [p1, grid.p_coord(k2)]));
                    }
                }
            }
        }
        Self { grid, values }
    }

    /// Momentum block of spatial cell `c = i1 * nx + i2`.
    #[inline]
    pub fn cell(&self, c: usize) -> &[f64] {
        let np2 = self.grid.np2();
        &self.values[c * np2..(c + 1) * np2]
    }

    #[inline]
    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        let np2 = self.grid.np2();
        &mut self.values[c * np2..(c + 1) * np2]
    }

    pub fn axpy(&mut self, a: f64, other: &Distribution) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    pub fn dot(&self, other: &Distribution) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.min(v))
    }

    /// Signed mass `sum f dx^2 dp^2`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn lq_norm(&self, q: Norm) -> f64 {
        lq_norm(self, q)
    }

    /// Bounding index box of all exactly-nonzero samples.
    pub fn active_box(&self) -> ActiveBox {
        let g = &self.grid;
        let np = g.np;
        let mut bx = ActiveBox { x1: (usize::MAX, 0), x2: (usize::MAX, 0), p1: (usize::MAX, 0), p2: (usize::MAX, 0) };
        for i1 in 0..g.nx {
            for i2 in 0..g.nx {
                let c = i1 * g.nx + i2;
                let block = self.cell(c);
                let mut any = false;
                for k1 in 0..np {
                    let row = &block[k1 * np..(k1 + 1) * np];
                    let first = row.iter().position(|&v| v != 0.0);
                    if let Some(lo) = first {
                        let hi = row.iter().rposition(|&v| v != 0.0).unwrap_or(lo);
                        any = true;
                        bx.p1 = (bx.p1.0.min(k1), bx.p1.1.max(k1 + 1));
                        bx.p2 = (bx.p2.0.min(lo), bx.p2.1.max(hi + 1));
                    }
                }
                if any {
                    bx.x1 = (bx.x1.0.min(i1), bx.x1.1.max(i1 + 1));
                    bx.x2 = (bx.x2.0.min(i2), bx.x2.1.max(i2 + 1));
                }
            }
        }
        if bx.x1.0 == usize::MAX {
            return ActiveBox { x1: (0, 0), x2: (0, 0), p1: (0, 0), p2: (0, 0) };
        }
        bx
    }

    /// Fraction of the `L^1` norm held by the `width` outermost momentum layers.
    pub fn momentum_boundary_fraction(&self, width: usize) -> f64 {
        let g = &self.grid;
        let np = g.np;
        let mut edge = 0.0;
        let mut total = 0.0;
        let w = width.min(np);
        for c in 0..g.nx * g.nx {
            for (k1, row) in self.cell(c).chunks_exact(np).enumerate() {
                let s: f64 = row.iter().map(|v| abs(*v)).sum();
                total += s;
                if k1 < w || k1 + w >= np {
                    edge += s;
                } else {
                    edge += row[..w].iter().chain(&row[np - w..]).map(|v| abs(*v)).sum::<f64>();
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Largest `|f|` on the `width` outermost spatial layers.
    pub fn spatial_boundary_max(&self, width: usize) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for i1 in 0..g.nx {
            for i2 in 0..g.nx {
                if i1 < width || i2 < width || i1 + width >= g.nx || i2 + width >= g.nx {
                    let c = i1 * g.nx + i2;
                    m = self.cell(c).iter().fold(m, |a, &v| a.max(abs(v)));
                }
            }
        }
        m
    }
}

/// `rho_f = 4 pi sum_p f dp^2` at every cell center.
pub fn charge_density(f: &Distribution) -> ScalarField {
    let g = &f.grid;
    let w = FOUR_PI * g.momentum_weight();
    let mut rho = ScalarField::zeros(g.nx);
    for (c, out) in rho.data.iter_mut().enumerate() {
        *out = w * f.cell(c).iter().sum::<f64>();
    }
    rho
}

/// `j_f = 4 pi sum_p v(p) f dp^2` at every cell center.
pub fn current_density(f: &Distribution, table: &MomentumTable) -> CenterVector {
    let g = &f.grid;
    let w = FOUR_PI * g.momentum_weight();
    let mut j = CenterVector::zeros(g.nx);
    for c in 0..g.nx * g.nx {
        let (mut a1, mut a2) = (0.0, 0.0);
        for (v, &fv) in table.v.iter().zip(f.cell(c)) {
            a1 += v[0] * fv;
            a2 += v[1] * fv;
        }
        j.c1.data[c] = w * a1;
        j.c2.data[c] = w * a2;
    }
    j
}

/// Kinetic energy density `4 pi sum_p sqrt(1 + |p|^2) f dp^2`.
pub fn kinetic_energy_density(f: &Distribution, table: &MomentumTable) -> ScalarField {
    let g = &f.grid;
    let w = FOUR_PI * g.momentum_weight();
    let mut e = ScalarField::zeros(g.nx);
    for (c, out) in e.data.iter_mut().enumerate() {
        *out = w * table.gamma.iter().zip(f.cell(c)).map(|(gm, fv)| gm * fv).sum::<f64>();
    }
    e
}

/// Discrete `L^q` norm over phase space, quadrature-weighted for finite `q`.
pub fn lq_norm(f: &Distribution, q: Norm) -> f64 {
    let vol = f.grid.cell_volume();
    match q {
        Norm::L1 => f.values.iter().map(|v| abs(*v)).sum::<f64>() * vol,
        Norm::L2 => sqrt(f.values.iter().map(|v| v * v).sum::<f64>() * vol),
        Norm::Linf => f.values.iter().fold(0.0, |m, v| m.max(abs(*v))),
    }
}

/// Largest `|x|` and `|p|` over cell centers where `|f| >= eps`; `(0, 0)`
/// when nothing exceeds the threshold.
pub fn support_radii_eps(f: &Distribution, eps: f64) -> (f64, f64) {
    let g = &f.grid;
    let np = g.np;
    let mut p_radius_sq: f64 = 0.0;
    let mut x_radius_sq: f64 = 0.0;
    let pk: Vec<f64> = (0..np).map(|k| g.p_coord(k)).collect();
    for i1 in 0..g.nx {
        let x1 = g.x_coord(i1);
        for i2 in 0..g.nx {
            let x2 = g.x_coord(i2);
            let block = f.cell(i1 * g.nx + i2);
            let mut any = false;
            for k1 in 0..np {
                for k2 in 0..np {
                    if abs(block[k1 * np + k2]) >= eps {
                        any = true;
                        p_radius_sq = p_radius_sq.max(pk[k1] * pk[k1] + pk[k2] * pk[k2]);
                    }
                }
            }
            if any {
                x_radius_sq = x_radius_sq.max(x1 * x1 + x2 * x2);
            }
        }
    }
    (sqrt(x_radius_sq), sqrt(p_radius_sq))
}

/// [`support_radii_eps`] at [`SUPPORT_EPSILON`].
pub fn support_radii(f: &Distribution) -> (f64, f64) {
    support_radii_eps(f, SUPPORT_EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::relativistic_velocity;

    fn grid(nx: usize, np: usize, p_extent: f64) -> PhaseGrid {
        PhaseGrid::new(1.0, p_extent, nx, np, 0.1, 1).unwrap()
    }

    #[test]
    fn zero_density_has_zero_moments_and_norms() {
        let g = grid(8, 8, 2.0);
        let f = Distribution::zeros(g);
        let t = g.momentum_table();
        assert_eq!(charge_density(&f).max_abs(), 0.0);
        let j = current_density(&f, &t);
        assert_eq!(j.c1.max_abs() + j.c2.max_abs(), 0.0);
        for q in [Norm::L1, Norm::L2, Norm::Linf] {
            assert_eq!(lq_norm(&f, q), 0.0);
        }
        assert_eq!(support_radii(&f), (0.0, 0.0));
    }

    #[test]
    fn constant_on_k_cells_has_expected_l1() {
        let g = grid(8, 8, 2.0);
        let mut f = Distribution::zeros(g);
        for k in 0..5 {
            f.values[k * 37] = 0.25;
        }
        let expected = 0.25 * 5.0 * g.cell_volume();
        assert!((lq_norm(&f, Norm::L1) - expected).abs() < 1e-15);
        assert_eq!(lq_norm(&f, Norm::Linf), 0.25);
    }

    /// Gaussian of unit momentum integral in each cell: rho = 4 pi.
    #[test]
    fn gaussian_charge_matches_analytic_integral() {
        let s = 0.5;
        let g = grid(8, 64, 8.0 * s);
        let norm = 1.0 / (2.0 * core::f64::consts::PI * s * s);
        let f = Distribution::from_fn(g, |_, p| norm * (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * s * s)).exp());
        let rho = charge_density(&f);
        for v in &rho.data {
            assert!((v / (4.0 * core::f64::consts::PI) - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn even_density_carries_no_current() {
        let g = grid(8, 16, 2.0);
        let f = Distribution::from_fn(g, |x, p| (1.0 + x[0] * x[0]) * (-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp());
        let j = current_density(&f, &g.momentum_table());
        assert!(j.c1.max_abs() < 1e-13 && j.c2.max_abs() < 1e-13);
    }

    /// A narrow bump around p* carries current v(p*) rho up to O(width^2).
    #[test]
    fn sharp_bump_current_is_velocity_times_density() {
        let g = grid(8, 128, 3.0);
        let pstar = 1.0;
        let w = 0.06;
        let f = Distribution::from_fn(g, |_, p| {
            (-((p[0] - pstar).powi(2) + p[1] * p[1]) / (2.0 * w * w)).exp()
        });
        let rho = charge_density(&f);
        let j = current_density(&f, &g.momentum_table());
        let v = relativistic_velocity([pstar, 0.0]);
        let c = 10;
        assert!((j.c1.data[c] / rho.data[c] - v[0]).abs() < 5e-3);
        assert!(j.c2.data[c].abs() < 1e-12 * rho.data[c]);
    }

    /// The momentum quadrature converges at second order on a compact C^2 bump.
    #[test]
    fn charge_quadrature_second_order() {
        // (1 - r^2)^3 on the unit disc integrates to pi / 4.
        let exact = core::f64::consts::PI / 4.0;
        let err = |np: usize| {
            let g = grid(8, np, 1.3);
            let f = Distribution::from_fn(g, |_, p| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                if r2 < 1.0 {
                    (1.0 - r2).powi(3)
                } else {
                    0.0
                }
            });
            (charge_density(&f).data[0] / (4.0 * core::f64::consts::PI) - exact).abs()
        };
        let (e1, e2) = (err(24), err(48));
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn current_bounded_by_charge() {
        let g = grid(8, 16, 3.0);
        let f = Distribution::from_fn(g, |x, p| ((x[0] + 2.0) * (p[0] + 4.0) * (p[1] * p[1] + 0.1)).abs());
        let rho = charge_density(&f);
        let j = current_density(&f, &g.momentum_table());
        for c in 0..rho.data.len() {
            let m = (j.c1.data[c].powi(2) + j.c2.data[c].powi(2)).sqrt();
            assert!(m <= rho.data[c]);
        }
    }

    #[test]
    fn support_radii_and_active_box() {
        let g = grid(8, 8, 2.0);
        let mut f = Distribution::zeros(g);
        f.values[g.idx(2, 5, 1, 6)] = 1.0;
        let (rx, rp) = support_radii(&f);
        let ex = (g.x_coord(2).powi(2) + g.x_coord(5).powi(2)).sqrt();
        let ep = (g.p_coord(1).powi(2) + g.p_coord(6).powi(2)).sqrt();
        assert_eq!((rx, rp), (ex, ep));
        let b = f.active_box();
        assert_eq!(b, ActiveBox { x1: (2, 3), x2: (5, 6), p1: (1, 2), p2: (6, 7) });
        f.values[g.idx(2, 5, 1, 6)] = 1e-13;
        assert_eq!(support_radii(&f), (0.0, 0.0));
    }
}
