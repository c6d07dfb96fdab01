//! Spatial arrays and the staggered electromagnetic state.
//!
//! Staggering (TE-type Yee layout), with cell centers `x_i = -X + (i + 1/2) dx`:
//!
//! | array | sample location              |
//! |-------|------------------------------|
//! | `e1`  | `(x_i + dx/2, x_j)`          |
//! | `e2`  | `(x_i, x_j + dx/2)`          |
//! | `b`   | `(x_i + dx/2, x_j + dx/2)`   |
//!
//! Densities, currents and the divergence live at cell centers. Index
//! `n - 1` of a staggered axis lies on the box edge; it and index `0` form
//! the zero Dirichlet layer that the field update never touches.

use crate::grid::SpatialGrid;
use crate::math::sqrt;
use alloc::vec;
use alloc::vec::Vec;

/// Scalar samples on an `n x n` spatial array, row-major `(i1, i2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i1 in 0..n {
            for i2 in 0..n {
                data.push(f(i1, i2));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.data[i1 * self.n + i2]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, v: f64) {
        self.data[i1 * self.n + i2] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.n, other.n);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(crate::math::abs(*x)))
    }

    /// Discrete `L^2` norm with cell area `dx^2`.
    pub fn l2_norm(&self, grid: &SpatialGrid) -> f64 {
        sqrt(self.sum_sq() * grid.cell_area())
    }

    /// Largest magnitude over the `width` outermost layers.
    pub fn boundary_max(&self, width: usize) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let edge = i1 < width || i2 < width || i1 + width >= n || i2 + width >= n;
                if edge {
                    m = m.max(crate::math::abs(self.get(i1, i2)));
                }
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// An in-plane vector field sampled on the staggered edges (`c1` on the
/// `e1` locations, `c2` on the `e2` locations). Used for currents and
/// control profiles entering the field update.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub c1: ScalarField,
    pub c2: ScalarField,
}

impl EdgeField {
    pub fn zeros(n: usize) -> Self {
        Self { c1: ScalarField::zeros(n), c2: ScalarField::zeros(n) }
    }

    pub fn axpy(&mut self, a: f64, other: &EdgeField) {
        self.c1.axpy(a, &other.c1);
        self.c2.axpy(a, &other.c2);
    }

    pub fn scale(&mut self, a: f64) {
        self.c1.scale(a);
        self.c2.scale(a);
    }

    pub fn dot(&self, other: &EdgeField) -> f64 {
        self.c1.dot(&other.c1) + self.c2.dot(&other.c2)
    }

    pub fn sum_sq(&self) -> f64 {
        self.c1.sum_sq() + self.c2.sum_sq()
    }

    pub fn fill(&mut self, v: f64) {
        self.c1.fill(v);
        self.c2.fill(v);
    }
}

/// A vector field sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterVector {
    pub c1: ScalarField,
    pub c2: ScalarField,
}

impl CenterVector {
    pub fn zeros(n: usize) -> Self {
        Self { c1: ScalarField::zeros(n), c2: ScalarField::zeros(n) }
    }
}

/// Electromagnetic state `(E1, E2, B)` on the staggered layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub e1: ScalarField,
    pub e2: ScalarField,
    pub b: ScalarField,
}

impl FieldState {
    pub fn zeros(n: usize) -> Self {
        Self { e1: ScalarField::zeros(n), e2: ScalarField::zeros(n), b: ScalarField::zeros(n) }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.b.n
    }

    pub fn axpy(&mut self, a: f64, other: &FieldState) {
        self.e1.axpy(a, &other.e1);
        self.e2.axpy(a, &other.e2);
        self.b.axpy(a, &other.b);
    }

    pub fn dot(&self, other: &FieldState) -> f64 {
        self.e1.dot(&other.e1) + self.e2.dot(&other.e2) + self.b.dot(&other.b)
    }

    pub fn sub(&self, other: &FieldState) -> FieldState {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.e1.max_abs().max(self.e2.max_abs()).max(self.b.max_abs())
    }

    pub fn boundary_max(&self, width: usize) -> f64 {
        self.e1
            .boundary_max(width)
            .max(self.e2.boundary_max(width))
            .max(self.b.boundary_max(width))
    }

    pub fn is_finite(&self) -> bool {
        self.e1.is_finite() && self.e2.is_finite() && self.b.is_finite()
    }

    pub fn electric(&self) -> EdgeField {
        EdgeField { c1: self.e1.clone(), c2: self.e2.clone() }
    }
}

/// Fields interpolated to cell centers: the values the momentum push sees.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterFields {
    pub e1: ScalarField,
    pub e2: ScalarField,
    pub b: ScalarField,
}

impl CenterFields {
    pub fn zeros(n: usize) -> Self {
        Self { e1: ScalarField::zeros(n), e2: ScalarField::zeros(n), b: ScalarField::zeros(n) }
    }

    /// Field triple at cell `(i1, i2)`.
    #[inline]
    pub fn at(&self, c: usize) -> (f64, f64, f64) {
        (self.e1.data[c], self.e2.data[c], self.b.data[c])
    }

    pub fn axpy(&mut self, a: f64, other: &CenterFields) {
        self.e1.axpy(a, &other.e1);
        self.e2.axpy(a, &other.e2);
        self.b.axpy(a, &other.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_max_sees_only_outer_layers() {
        let mut s = ScalarField::zeros(8);
        s.set(3, 4, 5.0);
        assert_eq!(s.boundary_max(2), 0.0);
        s.set(1, 4, -2.0);
        assert_eq!(s.boundary_max(2), 2.0);
        assert_eq!(s.boundary_max(1), 0.0);
    }

    #[test]
    fn axpy_and_dot() {
        let mut a = ScalarField::from_fn(8, |i, j| (i + j) as f64);
        let b = ScalarField::from_fn(8, |_, _| 1.0);
        a.axpy(2.0, &b);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(b.dot(&b), 64.0);
    }
}
