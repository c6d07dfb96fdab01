//! Uniform grids over the truncated phase space `[-X,X]^2 x [-P,P]^2` and
//! the time interval `[0,T]`.
//!
//! Samples sit at cell centers (midpoint rule). Arrays over phase space are
//! row-major in `(x1, x2, p1, p2)` order, so one spatial cell owns a
//! contiguous block of `np * np` momentum samples.

use crate::error::{Result, SolverError};
use crate::kinematics::{lorentz_factor, relativistic_velocity, Vec2};
use crate::math::sqrt;
use alloc::format;
use alloc::vec::Vec;

/// Uniform 2D spatial grid with `n x n` cells over `[-extent, extent]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    pub n: usize,
    pub extent: f64,
}

impl SpatialGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 8 {
            return Err(SolverError::Config(format!("spatial grid needs n >= 8, got {n}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(SolverError::Config(format!("spatial extent must be positive, got {extent}")));
        }
        Ok(Self { n, extent })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// Cell-center coordinate of index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn idx(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n + i2
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        let dx = self.dx();
        dx * dx
    }

    /// Largest stable time step of the staggered leapfrog Maxwell scheme.
    #[inline]
    pub fn maxwell_cfl_bound(&self) -> f64 {
        self.dx() / core::f64::consts::SQRT_2
    }
}

/// Phase-space and time discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub x_extent: f64,
    pub p_extent: f64,
    pub nx: usize,
    pub np: usize,
    pub t_final: f64,
    pub nt: usize,
}

impl PhaseGrid {
    pub fn new(x_extent: f64, p_extent: f64, nx: usize, np: usize, t_final: f64, nt: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if nx < 8 {
            problems.push(format!("nx must be >= 8 (got {nx})"));
        }
        if np < 8 {
            problems.push(format!("np must be >= 8 (got {np})"));
        }
        if !(x_extent > 0.0) || !x_extent.is_finite() {
            problems.push(format!("x_extent must be positive (got {x_extent})"));
        }
        if !(p_extent > 0.0) || !p_extent.is_finite() {
            problems.push(format!("p_extent must be positive (got {p_extent})"));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            problems.push(format!("t_final must be positive (got {t_final})"));
        }
        if nt == 0 {
            problems.push(format!("nt must be >= 1 (got {nt})"));
        }
        if problems.is_empty() {
            let g = Self { x_extent, p_extent, nx, np, t_final, nt };
            if g.dt() > g.dx() {
                problems.push(format!("dt = {} exceeds dx = {} (unit light speed bound)", g.dt(), g.dx()));
            }
            if problems.is_empty() {
                return Ok(g);
            }
        }
        Err(SolverError::Config(problems.join("; ")))
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.x_extent / self.nx as f64
    }

    #[inline]
    pub fn dp(&self) -> f64 {
        2.0 * self.p_extent / self.np as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    #[inline]
    pub fn x_coord(&self, i: usize) -> f64 {
        -self.x_extent + (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn p_coord(&self, k: usize) -> f64 {
        -self.p_extent + (k as f64 + 0.5) * self.dp()
    }

    pub fn spatial(&self) -> SpatialGrid {
        SpatialGrid { n: self.nx, extent: self.x_extent }
    }

    /// Momentum samples per spatial cell.
    #[inline]
    pub fn np2(&self) -> usize {
        self.np * self.np
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nx * self.np2()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i1: usize, i2: usize, k1: usize, k2: usize) -> usize {
        ((i1 * self.nx + i2) * self.np + k1) * self.np + k2
    }

    /// `dp^2`, the momentum quadrature weight.
    #[inline]
    pub fn momentum_weight(&self) -> f64 {
        let dp = self.dp();
        dp * dp
    }

    /// `dx^2 dp^2`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let dx = self.dx();
        dx * dx * self.momentum_weight()
    }

    /// Checks the finite-propagation margin `x_extent >= R_fields + L + R + T`.
    pub fn check_support_margin(&self, field_radius: f64, control_radius: f64, plasma_radius: f64) -> Result<()> {
        let required = field_radius + control_radius + plasma_radius + self.t_final;
        if self.x_extent < required {
            return Err(SolverError::Config(format!(
                "x_extent = {} is below the support margin R~ + L + R + T = {} + {} + {} + {} = {}",
                self.x_extent, field_radius, control_radius, plasma_radius, self.t_final, required
            )));
        }
        Ok(())
    }

    pub fn momentum_table(&self) -> MomentumTable {
        MomentumTable::new(self)
    }
}

/// Per-momentum-sample constants reused by every kernel.
#[derive(Debug, Clone)]
pub struct MomentumTable {
    /// Momentum coordinates, indexed by `q = k1 * np + k2`.
    pub p: Vec<Vec2>,
    /// Relativistic velocities of `p`.
    pub v: Vec<Vec2>,
    /// Lorentz factors `sqrt(1 + |p|^2)`.
    pub gamma: Vec<f64>,
}

impl MomentumTable {
    pub fn new(grid: &PhaseGrid) -> Self {
        let np = grid.np;
        let mut p = Vec::with_capacity(np * np);
        for k1 in 0..np {
            for k2 in 0..np {
                p.push([grid.p_coord(k1), grid.p_coord(k2)]);
            }
        }
        let v = p.iter().map(|&q| relativistic_velocity(q)).collect();
        let gamma = p.iter().map(|&q| lorentz_factor(q)).collect();
        Self { p, v, gamma }
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| sqrt(v[0] * v[0] + v[1] * v[1])).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings_follow_extents() {
        let g = PhaseGrid::new(2.0, 3.0, 16, 12, 1.0, 10).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.dp(), 0.5);
        assert_eq!(g.dt(), 0.1);
        assert_eq!(g.x_coord(0), -2.0 + 0.125);
        assert_eq!(g.p_coord(11), 3.0 - 0.25);
        assert_eq!(g.len(), 16 * 16 * 144);
    }

    #[test]
    fn dt_above_dx_is_rejected() {
        let err = PhaseGrid::new(1.0, 1.0, 8, 8, 1.0, 2).unwrap_err();
        assert!(matches!(err, SolverError::Config(ref m) if m.contains("exceeds dx")));
    }

    #[test]
    fn all_violations_are_reported() {
        let err = PhaseGrid::new(-1.0, 0.0, 4, 4, 1.0, 0).unwrap_err();
        let SolverError::Config(msg) = err else { panic!() };
        for needle in ["nx", "np", "x_extent", "p_extent", "nt"] {
            assert!(msg.contains(needle), "{msg}");
        }
    }

    #[test]
    fn support_margin_names_required_value() {
        let g = PhaseGrid::new(2.0, 3.0, 16, 16, 1.0, 10).unwrap();
        assert!(g.check_support_margin(0.0, 0.5, 0.5).is_ok());
        let err = g.check_support_margin(0.0, 0.8, 0.5).unwrap_err();
        assert!(matches!(err, SolverError::Config(ref m) if m.contains("2.3")));
    }
}
