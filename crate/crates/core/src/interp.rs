//! Four-point Lagrange interpolation on uniform grids with zero extension
//! outside the sampled range.
//!
//! The stencil for a point at fractional position `y = base + theta`
//! (`0 <= theta < 1`) uses nodes `base - 1 ..= base + 2`. The scheme is
//! exact on cubics and reproduces samples at grid points.

use crate::distribution::Distribution;
use crate::grid::PhaseGrid;
use crate::math::floor;

/// Interpolation weights for nodes `-1, 0, 1, 2` at offset `theta`.
#[inline(always)]
pub fn lagrange_weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// `d/dtheta` of [`lagrange_weights`].
#[inline(always)]
pub fn lagrange_weight_derivs(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        -(3.0 * t2 - 6.0 * t + 2.0) / 6.0,
        (3.0 * t2 - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t2 - 2.0 * t - 2.0) / 2.0,
        (3.0 * t2 - 1.0) / 6.0,
    ]
}

/// Splits a fractional grid coordinate into `(base, theta)`.
#[inline(always)]
pub fn split(y: f64) -> (isize, f64) {
    let b = floor(y);
    (b as isize, y - b)
}

/// Precomputed stencil for shifting a whole line by a constant displacement
/// `d` (in cells): `out[i] = in(i - d)`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftStencil {
    /// Offset of the first stencil node relative to the target index.
    pub first: isize,
    pub w: [f64; 4],
}

impl ShiftStencil {
    #[inline]
    pub fn new(d: f64) -> Self {
        let (base, t) = split(-d);
        Self { first: base - 1, w: lagrange_weights(t) }
    }

    /// Applies the shift to `src`, writing all of `dst`.
    #[inline]
    pub fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let n = src.len() as isize;
        for (i, out) in dst.iter_mut().enumerate() {
            let s0 = i as isize + self.first;
            let mut acc = 0.0;
            if s0 >= 0 && s0 + 3 < n {
                let s = s0 as usize;
                acc = self.w[0] * src[s] + self.w[1] * src[s + 1] + self.w[2] * src[s + 2] + self.w[3] * src[s + 3];
            } else {
                for m in 0..4 {
                    let s = s0 + m as isize;
                    if s >= 0 && s < n {
                        acc += self.w[m] * src[s as usize];
                    }
                }
            }
            *out = acc;
        }
    }
}

/// 1D interpolation of samples `v` (node `i` at coordinate `i`) at `y`.
pub fn interp1(v: &[f64], y: f64) -> f64 {
    let (base, t) = split(y);
    let w = lagrange_weights(t);
    let n = v.len() as isize;
    let mut acc = 0.0;
    for (m, wm) in w.iter().enumerate() {
        let s = base - 1 + m as isize;
        if s >= 0 && s < n {
            acc += wm * v[s as usize];
        }
    }
    acc
}

/// Bicubic stencil at a point of an `np x np` slice, in index units.
#[derive(Debug, Clone, Copy)]
pub struct Stencil2 {
    pub b1: isize,
    pub b2: isize,
    pub w1: [f64; 4],
    pub w2: [f64; 4],
    pub dw1: [f64; 4],
    pub dw2: [f64; 4],
}

impl Stencil2 {
    #[inline]
    pub fn new(y1: f64, y2: f64) -> Self {
        let (b1, t1) = split(y1);
        let (b2, t2) = split(y2);
        Self {
            b1: b1 - 1,
            b2: b2 - 1,
            w1: lagrange_weights(t1),
            w2: lagrange_weights(t2),
            dw1: lagrange_weight_derivs(t1),
            dw2: lagrange_weight_derivs(t2),
        }
    }

    #[inline]
    fn interior(&self, n: usize) -> bool {
        let n = n as isize;
        self.b1 >= 0 && self.b2 >= 0 && self.b1 + 3 < n && self.b2 + 3 < n
    }

    /// Interpolated value.
    #[inline]
    pub fn eval(&self, slice: &[f64], n: usize) -> f64 {
        let mut acc = 0.0;
        if self.interior(n) {
            let r0 = self.b1 as usize * n + self.b2 as usize;
            for a in 0..4 {
                let r = r0 + a * n;
                let row = self.w2[0] * slice[r]
                    + self.w2[1] * slice[r + 1]
                    + self.w2[2] * slice[r + 2]
                    + self.w2[3] * slice[r + 3];
                acc += self.w1[a] * row;
            }
        } else {
            for a in 0..4 {
                let i = self.b1 + a as isize;
                if i < 0 || i >= n as isize {
                    continue;
                }
                for c in 0..4 {
                    let j = self.b2 + c as isize;
                    if j < 0 || j >= n as isize {
                        continue;
                    }
                    acc += self.w1[a] * self.w2[c] * slice[i as usize * n + j as usize];
                }
            }
        }
        acc
    }

    /// Value and gradient with respect to the index coordinates `(y1, y2)`.
    #[inline]
    pub fn eval_grad(&self, slice: &[f64], n: usize) -> (f64, f64, f64) {
        let (mut v, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for a in 0..4 {
            let i = self.b1 + a as isize;
            if i < 0 || i >= n as isize {
                continue;
            }
            let mut row_w = 0.0;
            let mut row_dw = 0.0;
            for c in 0..4 {
                let j = self.b2 + c as isize;
                if j < 0 || j >= n as isize {
                    continue;
                }
                let s = slice[i as usize * n + j as usize];
                row_w += self.w2[c] * s;
                row_dw += self.dw2[c] * s;
            }
            v += self.w1[a] * row_w;
            g1 += self.dw1[a] * row_w;
            g2 += self.w1[a] * row_dw;
        }
        (v, g1, g2)
    }

    /// Transpose of [`Stencil2::eval`]: adds `value * weight` into the
    /// stencil nodes of `slice`.
    #[inline]
    pub fn scatter(&self, value: f64, slice: &mut [f64], n: usize) {
        if self.interior(n) {
            let r0 = self.b1 as usize * n + self.b2 as usize;
            for a in 0..4 {
                let r = r0 + a * n;
                let va = value * self.w1[a];
                slice[r] += va * self.w2[0];
                slice[r + 1] += va * self.w2[1];
                slice[r + 2] += va * self.w2[2];
                slice[r + 3] += va * self.w2[3];
            }
        } else {
            for a in 0..4 {
                let i = self.b1 + a as isize;
                if i < 0 || i >= n as isize {
                    continue;
                }
                for c in 0..4 {
                    let j = self.b2 + c as isize;
                    if j < 0 || j >= n as isize {
                        continue;
                    }
                    slice[i as usize * n + j as usize] += value * self.w1[a] * self.w2[c];
                }
            }
        }
    }
}

/// Separable cubic interpolation of `f` at an arbitrary phase-space point.
/// Points outside the sampled box see zero extension.
pub fn interpolate4(f: &Distribution, x: [f64; 2], p: [f64; 2]) -> f64 {
    let g: &PhaseGrid = &f.grid;
    let (dx, dp) = (g.dx(), g.dp());
    let yx = [(x[0] + g.x_extent) / dx - 0.5, (x[1] + g.x_extent) / dx - 0.5];
    let yp = [(p[0] + g.p_extent) / dp - 0.5, (p[1] + g.p_extent) / dp - 0.5];
    let sx: [(isize, [f64; 4]); 2] = core::array::from_fn(|a| {
        let (b, t) = split(yx[a]);
        (b - 1, lagrange_weights(t))
    });
    let sp: [(isize, [f64; 4]); 2] = core::array::from_fn(|a| {
        let (b, t) = split(yp[a]);
        (b - 1, lagrange_weights(t))
    });
    let (nx, np) = (g.nx as isize, g.np as isize);
    let mut acc = 0.0;
    for a in 0..4 {
        let i1 = sx[0].0 + a as isize;
        if i1 < 0 || i1 >= nx {
            continue;
        }
        for b in 0..4 {
            let i2 = sx[1].0 + b as isize;
            if i2 < 0 || i2 >= nx {
                continue;
            }
            let wx = sx[0].1[a] * sx[1].1[b];
            for c in 0..4 {
                let k1 = sp[0].0 + c as isize;
                if k1 < 0 || k1 >= np {
                    continue;
                }
                for d in 0..4 {
                    let k2 = sp[1].0 + d as isize;
                    if k2 < 0 || k2 >= np {
                        continue;
                    }
                    let w = wx * sp[0].1[c] * sp[1].1[d];
                    acc += w * f.values[g.idx(i1 as usize, i2 as usize, k1 as usize, k2 as usize)];
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_partition_unity_and_hit_nodes() {
        for &t in &[0.0, 0.1, 0.5, 0.77, 0.999] {
            let w = lagrange_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let dw = lagrange_weight_derivs(t);
            assert!(dw.iter().sum::<f64>().abs() < 1e-14);
        }
        assert_eq!(lagrange_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn derivative_weights_match_fd() {
        let t = 0.3;
        let h = 1e-7;
        let (wp, wm) = (lagrange_weights(t + h), lagrange_weights(t - h));
        let dw = lagrange_weight_derivs(t);
        for m in 0..4 {
            assert!(((wp[m] - wm[m]) / (2.0 * h) - dw[m]).abs() < 1e-8);
        }
    }

    #[test]
    fn shift_of_reversed_displacement_is_the_transpose() {
        let n = 12;
        for &d in &[0.3, -0.7, 1.45, -2.2] {
            let fwd = ShiftStencil::new(d);
            let bwd = ShiftStencil::new(-d);
            // columns of the forward matrix vs rows of the backward matrix
            for j in 0..n {
                let mut e = [0.0; 12];
                e[j] = 1.0;
                let mut col = [0.0; 12];
                fwd.apply(&e, &mut col);
                let mut row = [0.0; 12];
                for i in 0..n {
                    let mut ei = [0.0; 12];
                    ei[i] = 1.0;
                    let mut tmp = [0.0; 12];
                    bwd.apply(&ei, &mut tmp);
                    row[i] = tmp[j];
                }
                for i in 0..n {
                    assert!((col[i] - row[i]).abs() < 1e-14, "d={d} i={i} j={j}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn cubics_are_reproduced(c0 in -2f64..2.0, c1 in -2f64..2.0, c2 in -2f64..2.0, c3 in -2f64..2.0, y in 2.0f64..9.0) {
            let poly = |x: f64| c0 + c1 * x + c2 * x * x + c3 * x * x * x;
            let v: [f64; 12] = core::array::from_fn(|i| poly(i as f64));
            prop_assert!((interp1(&v, y) - poly(y)).abs() < 1e-9);
        }

        #[test]
        fn bicubic_scatter_is_transpose(y1 in -1.5f64..8.5, y2 in -1.5f64..8.5, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 8;
            let a: [f64; 64] = core::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let s = Stencil2::new(y1, y2);
            let r: f64 = rng.gen_range(-1.0..1.0);
            let mut sc = [0.0; 64];
            s.scatter(r, &mut sc, n);
            let lhs = r * s.eval(&a, n);
            let rhs: f64 = sc.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() < 1e-13);
            let (v, _, _) = s.eval_grad(&a, n);
            prop_assert!((v - s.eval(&a, n)).abs() < 1e-13);
        }
    }
}
