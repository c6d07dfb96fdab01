//! Coil controls `U(t, x) = sum_j u_j(t) z_j(x)` with fixed spatial profiles
//! and scalar intensities constrained to `|u_j| <= 1`.

use crate::error::{Result, SolverError};
use crate::field::{EdgeField, ScalarField};
use crate::grid::SpatialGrid;
use crate::math::{abs, cos, sin, sqrt};
use crate::maxwell::{curl_b, divergence};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Analytic coil shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoilProfile {
    /// Azimuthal current concentrated in the annulus `|r - radius| < width`.
    /// Built as the discrete curl of a smooth radial step, so it is exactly
    /// divergence free on the grid.
    Ring { center: [f64; 2], radius: f64, width: f64, strength: f64 },
    /// Straight current strip along `angle` with smooth `(1 - s^2)^3` falloff
    /// in both directions.
    Strip { center: [f64; 2], angle: f64, half_length: f64, half_width: f64, strength: f64 },
}

fn bump(s: f64) -> f64 {
    if abs(s) >= 1.0 {
        0.0
    } else {
        let a = 1.0 - s * s;
        a * a * a
    }
}

/// `1` for `s <= 0`, `0` for `s >= 1`, quintic (C^2) in between.
fn smooth_step_down(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

impl CoilProfile {
    /// Outer radius (about the origin) beyond which the profile vanishes.
    pub fn outer_radius(&self) -> f64 {
        match *self {
            CoilProfile::Ring { center, radius, width, .. } => sqrt(center[0] * center[0] + center[1] * center[1]) + radius + width,
            CoilProfile::Strip { center, half_length, half_width, .. } => {
                sqrt(center[0] * center[0] + center[1] * center[1]) + sqrt(half_length * half_length + half_width * half_width)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CoilProfile::Ring { radius, width, strength, .. } => radius > 0.0 && width > 0.0 && width < radius && strength != 0.0,
            CoilProfile::Strip { half_length, half_width, strength, .. } => half_length > 0.0 && half_width > 0.0 && strength != 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SolverError::Config(format!("invalid coil profile {self:?}")))
        }
    }

    /// Samples the profile on the staggered edge locations.
    pub fn sample(&self, grid: &SpatialGrid) -> EdgeField {
        let n = grid.n;
        let h = 0.5 * grid.dx();
        match *self {
            CoilProfile::Ring { center, radius, width, strength } => {
                let psi = ScalarField::from_fn(n, |i1, i2| {
                    let x = grid.coord(i1) + h - center[0];
                    let y = grid.coord(i2) + h - center[1];
                    let r = sqrt(x * x + y * y);
                    smooth_step_down((r - (radius - width)) / (2.0 * width))
                });
                let mut z = curl_b(&psi, grid.dx());
                let peak = z.c1.max_abs().max(z.c2.max_abs());
                if peak > 0.0 {
                    z.scale(strength / peak);
                }
                z
            }
            CoilProfile::Strip { center, angle, half_length, half_width, strength } => {
                let (d1, d2) = (cos(angle), sin(angle));
                let shape = |x: f64, y: f64| {
                    let (rx, ry) = (x - center[0], y - center[1]);
                    let s = rx * d1 + ry * d2;
                    let t = -rx * d2 + ry * d1;
                    strength * bump(s / half_length) * bump(t / half_width)
                };
                let mut z = EdgeField::zeros(n);
                for i1 in 1..n - 1 {
                    for i2 in 1..n - 1 {
                        let (x, y) = (grid.coord(i1), grid.coord(i2));
                        z.c1.set(i1, i2, d1 * shape(x + h, y));
                        z.c2.set(i1, i2, d2 * shape(x, y + h));
                    }
                }
                z
            }
        }
    }
}

/// Sampled coil profiles `z_j` together with `c_j = ||z_j||^2` and the
/// common support radius `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlModel {
    pub n: usize,
    pub dx: f64,
    pub profiles: Vec<EdgeField>,
    pub c: Vec<f64>,
    pub radii: Vec<f64>,
    pub support_radius: f64,
}

impl ControlModel {
    pub fn from_profiles(grid: &SpatialGrid, coils: &[CoilProfile]) -> Result<Self> {
        let mut sampled = Vec::with_capacity(coils.len());
        for c in coils {
            c.validate()?;
            sampled.push(c.sample(grid));
        }
        Self::from_samples(grid, sampled)
    }

    /// Wraps already sampled profiles. Each must be nonzero and vanish on the
    /// two outermost layers.
    pub fn from_samples(grid: &SpatialGrid, profiles: Vec<EdgeField>) -> Result<Self> {
        let n = grid.n;
        let dx = grid.dx();
        let mut problems = Vec::new();
        let mut c = Vec::with_capacity(profiles.len());
        let mut radii = Vec::with_capacity(profiles.len());
        for (j, z) in profiles.iter().enumerate() {
            if z.c1.n != n || z.c2.n != n {
                return Err(SolverError::ShapeMismatch { what: "coil profile", expected: n, found: z.c1.n });
            }
            let cj = z.sum_sq() * grid.cell_area();
            if !(cj > 0.0) || !cj.is_finite() {
                problems.push(format!("coil {j} has an empty or non-finite profile"));
            }
            if z.c1.boundary_max(2).max(z.c2.boundary_max(2)) > 0.0 {
                problems.push(format!("coil {j} reaches the boundary layer"));
            }
            c.push(cj);
            radii.push(sampled_radius(grid, z));
        }
        if !problems.is_empty() {
            return Err(SolverError::Config(problems.join("; ")));
        }
        let support_radius = radii.iter().copied().fold(0.0, f64::max);
        Ok(Self { n, dx, profiles, c, radii, support_radius })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// `sum_j a_j z_j`.
    pub fn combine(&self, a: &[f64]) -> EdgeField {
        let mut out = EdgeField::zeros(self.n);
        for (z, &aj) in self.profiles.iter().zip(a) {
            if aj != 0.0 {
                out.axpy(aj, z);
            }
        }
        out
    }

    /// `U^{n+1/2} = sum_j (u_j^n + u_j^{n+1}) / 2 z_j`.
    pub fn current_at_half_step(&self, u: &ControlTrajectory, n: usize) -> EdgeField {
        self.combine(&u.half_step(n))
    }

    pub fn current_at(&self, u: &ControlTrajectory, k: usize) -> EdgeField {
        let a: Vec<f64> = (0..u.n_coils).map(|j| u.get(j, k)).collect();
        self.combine(&a)
    }

    /// Plain sums `<z_j, w>` (no area weight), the transpose of [`Self::combine`].
    pub fn project(&self, w: &EdgeField) -> Vec<f64> {
        self.profiles.iter().map(|z| z.dot(w)).collect()
    }

    /// Cell-centered divergence of each profile.
    pub fn profile_divergences(&self) -> Vec<ScalarField> {
        self.profiles.iter().map(|z| divergence(&z.c1, &z.c2, self.dx)).collect()
    }
}

fn sampled_radius(grid: &SpatialGrid, z: &EdgeField) -> f64 {
    let n = grid.n;
    let h = 0.5 * grid.dx();
    let mut r: f64 = 0.0;
    for i1 in 0..n {
        for i2 in 0..n {
            let (x, y) = (grid.coord(i1), grid.coord(i2));
            if z.c1.get(i1, i2) != 0.0 {
                r = r.max(sqrt((x + h) * (x + h) + y * y));
            }
            if z.c2.get(i1, i2) != 0.0 {
                r = r.max(sqrt(x * x + (y + h) * (y + h)));
            }
        }
    }
    r
}

/// Coil intensities `u_j(t_k)` for `k = 0..=nt`, stored coil-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    pub n_coils: usize,
    pub nt: usize,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl ControlTrajectory {
    pub fn zeros(n_coils: usize, nt: usize, dt: f64) -> Self {
        Self { n_coils, nt, dt, values: vec![0.0; n_coils * (nt + 1)] }
    }

    /// Samples `f(j, t_k)`.
    pub fn from_fn(n_coils: usize, nt: usize, dt: f64, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut u = Self::zeros(n_coils, nt, dt);
        for j in 0..n_coils {
            for k in 0..=nt {
                u.values[j * (nt + 1) + k] = f(j, k as f64 * dt);
            }
        }
        u
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * (self.nt + 1) + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        self.values[j * (self.nt + 1) + k] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * (self.nt + 1)..(j + 1) * (self.nt + 1)]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let m = self.nt + 1;
        &mut self.values[j * m..(j + 1) * m]
    }

    /// Averaged intensities at `t_{n+1/2}`.
    pub fn half_step(&self, n: usize) -> Vec<f64> {
        (0..self.n_coils).map(|j| 0.5 * (self.get(j, n) + self.get(j, n + 1))).collect()
    }

    pub fn axpy(&mut self, a: f64, other: &ControlTrajectory) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    /// Euclidean inner product over all samples.
    pub fn dot(&self, other: &ControlTrajectory) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.dot(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(abs(*x)))
    }

    pub fn is_feasible(&self) -> bool {
        self.values.iter().all(|x| abs(*x) <= 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn check_shape(&self, n_coils: usize, nt: usize) -> Result<()> {
        if self.n_coils != n_coils {
            return Err(SolverError::ShapeMismatch { what: "control coils", expected: n_coils, found: self.n_coils });
        }
        if self.nt != nt {
            return Err(SolverError::ShapeMismatch { what: "control time levels", expected: nt + 1, found: self.nt + 1 });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring() -> CoilProfile {
        CoilProfile::Ring { center: [0.0, 0.0], radius: 0.6, width: 0.2, strength: 1.0 }
    }

    #[test]
    fn ring_is_discretely_divergence_free_and_compact() {
        let grid = SpatialGrid::new(40, 2.0).unwrap();
        let m = ControlModel::from_profiles(&grid, &[ring()]).unwrap();
        let d = &m.profile_divergences()[0];
        assert!(d.max_abs() < 1e-12);
        assert!(m.c[0] > 0.0);
        assert!(m.support_radius <= 0.8 + grid.dx());
        let z = &m.profiles[0];
        assert!((z.c1.max_abs().max(z.c2.max_abs()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ring_current_is_azimuthal() {
        let grid = SpatialGrid::new(64, 2.0).unwrap();
        let z = ring().sample(&grid);
        let h = 0.5 * grid.dx();
        // on the positive x1 axis the current points along +-x2
        let i = (0..64).find(|&i| grid.coord(i) > 0.6).unwrap();
        let j = 32;
        let along = z.c2.get(i, j - 1);
        let across = z.c1.get(i, j);
        assert!(along.abs() > 10.0 * across.abs(), "{along} {across} {h}");
    }

    #[test]
    fn strip_constant_equals_quadrature() {
        let grid = SpatialGrid::new(64, 2.0).unwrap();
        let strip = CoilProfile::Strip { center: [0.0, 0.0], angle: 0.0, half_length: 1.0, half_width: 0.3, strength: 1.0 };
        let m = ControlModel::from_profiles(&grid, &[strip]).unwrap();
        // int (1-s^2)^6 ds over [-1,1] = 2048/3003
        let exact = 2048.0 / 3003.0 * 0.3 * 2048.0 / 3003.0;
        assert!(((m.c[0] - exact) / exact).abs() < 1e-3, "{} {}", m.c[0], exact);
    }

    #[test]
    fn empty_profile_is_rejected() {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        assert!(ControlModel::from_samples(&grid, vec![EdgeField::zeros(16)]).is_err());
    }

    #[test]
    fn half_step_current_is_averaged() {
        let grid = SpatialGrid::new(32, 2.0).unwrap();
        let m = ControlModel::from_profiles(&grid, &[ring()]).unwrap();
        let mut u = ControlTrajectory::zeros(1, 4, 0.05);
        u.set(0, 1, 1.0);
        let a = m.current_at_half_step(&u, 0);
        let mut expect = m.profiles[0].clone();
        expect.scale(0.5);
        assert_eq!(a, expect);
        let p = m.project(&m.profiles[0]);
        assert!((p[0] * grid.cell_area() - m.c[0]).abs() < 1e-14);
    }

    #[test]
    fn feasibility() {
        let mut u = ControlTrajectory::zeros(2, 3, 0.1);
        assert!(u.is_feasible());
        u.set(1, 2, -1.0);
        assert!(u.is_feasible());
        u.set(1, 2, 1.0 + 1e-12);
        assert!(!u.is_feasible());
    }
}
