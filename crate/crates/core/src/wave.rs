//! Quadrature of the 2D wave solution formula
//!
//! ```text
//! u(t,x) = 1/(2 pi) int_0^t int_{|x-y|<t-tau} f(tau,y) / sqrt((t-tau)^2 - |x-y|^2) dy dtau
//!        + 1/(2 pi) int_{|y|<1} (g(x+ty) + t grad g(x+ty).y + t h(x+ty)) / sqrt(1-|y|^2) dy
//! ```
//!
//! for `u_tt - lap u = f, u(0) = g, u_t(0) = h`. With `y = x + r w` and
//! `s = sqrt(a^2 - r^2)` the disc integral becomes `int_0^{2pi} int_0^a
//! f(x + sqrt(a^2 - s^2) w) ds dtheta`; the further substitution
//! `s = a sin(phi)` leaves a smooth integrand. Gauss-Legendre is used in `phi`
//! and `tau`, the trapezoid rule in the periodic angle.

use crate::error::{Result, SolverError};
use crate::math::{abs, cos, sin, PI};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if abs(dz) < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature resolution of the oracle.
#[derive(Debug, Clone)]
pub struct WaveOracle {
    tau: (Vec<f64>, Vec<f64>),
    phi: (Vec<f64>, Vec<f64>),
    n_theta: usize,
    /// Evaluation points must satisfy `|x_i| <= extent`.
    pub extent: f64,
}

impl WaveOracle {
    pub fn new(n_tau: usize, n_phi: usize, n_theta: usize, extent: f64) -> Self {
        Self { tau: gauss_legendre(n_tau), phi: gauss_legendre(n_phi), n_theta, extent }
    }

    /// `int_0^{2pi} int_0^{pi/2} F(x + a cos(phi) w) a cos(phi) dphi dtheta`,
    /// the disc integral of `F / sqrt(a^2 - r^2)` over `|y - x| < a`.
    fn disc(&self, a: f64, x: [f64; 2], mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let (nodes, weights) = &self.phi;
        let dth = 2.0 * PI / self.n_theta as f64;
        let mut acc = 0.0;
        for m in 0..self.n_theta {
            let th = m as f64 * dth;
            let (c, s) = (cos(th), sin(th));
            let mut inner = 0.0;
            for (z, w) in nodes.iter().zip(weights) {
                let phi = 0.25 * PI * (z + 1.0);
                let r = a * cos(phi);
                inner += w * f([x[0] + r * c, x[1] + r * s]) * r;
            }
            acc += inner * 0.25 * PI;
        }
        acc * dth
    }

    fn check_point(&self, x: [f64; 2]) -> Result<()> {
        if !(abs(x[0]) <= self.extent && abs(x[1]) <= self.extent) {
            return Err(SolverError::Domain(format!("evaluation point ({}, {}) lies outside the grid", x[0], x[1])));
        }
        Ok(())
    }

    /// Retarded-potential contribution of a space-time source `f(t, y)`.
    pub fn source_term(&self, source: impl Fn(f64, [f64; 2]) -> f64, t: f64, x: [f64; 2]) -> Result<f64> {
        self.check_point(x)?;
        if t <= 0.0 {
            return Ok(0.0);
        }
        let (nodes, weights) = &self.tau;
        let mut acc = 0.0;
        for (z, w) in nodes.iter().zip(weights) {
            let tau = 0.5 * t * (z + 1.0);
            acc += w * self.disc(t - tau, x, |y| source(tau, y));
        }
        Ok(acc * 0.5 * t / (2.0 * PI))
    }

    /// Initial-data contribution for `u(0) = g`, `u_t(0) = h`; `grad_g` is
    /// the spatial gradient of `g`.
    pub fn data_term(
        &self,
        g: impl Fn([f64; 2]) -> f64,
        grad_g: impl Fn([f64; 2]) -> [f64; 2],
        h: impl Fn([f64; 2]) -> f64,
        t: f64,
        x: [f64; 2],
    ) -> Result<f64> {
        self.check_point(x)?;
        if t <= 0.0 {
            return Ok(g(x));
        }
        // in the unit-disc variable y = (z - x) / t
        let v = self.disc(1.0, [0.0, 0.0], |y| {
            let z = [x[0] + t * y[0], x[1] + t * y[1]];
            let dg = grad_g(z);
            g(z) + t * (dg[0] * y[0] + dg[1] * y[1]) + t * h(z)
        });
        Ok(v / (2.0 * PI))
    }

    /// Full solution of the Cauchy problem.
    pub fn evaluate(
        &self,
        source: impl Fn(f64, [f64; 2]) -> f64,
        g: impl Fn([f64; 2]) -> f64,
        grad_g: impl Fn([f64; 2]) -> [f64; 2],
        h: impl Fn([f64; 2]) -> f64,
        t: f64,
        x: [f64; 2],
    ) -> Result<f64> {
        Ok(self.source_term(source, t, x)? + self.data_term(g, grad_g, h, t, x)?)
    }
}

/// Convenience wrapper with zero initial data.
pub fn wave_oracle(source: impl Fn(f64, [f64; 2]) -> f64, t: f64, x: [f64; 2], extent: f64) -> Result<f64> {
    WaveOracle::new(64, 64, 128, extent).source_term(source, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}");
        }
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    #[test]
    fn zero_source_gives_zero() {
        assert_eq!(wave_oracle(|_, _| 0.0, 1.3, [0.2, 0.1], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_source_gives_half_t_squared() {
        for t in [0.3, 1.0, 2.5] {
            let u = wave_oracle(|_, _| 1.0, t, [0.0, 0.5], 2.0).unwrap();
            assert!((u - 0.5 * t * t).abs() < 1e-12, "{u}");
        }
    }

    #[test]
    fn polynomial_source_matches_closed_form() {
        // f = t: u = t^3 / 6
        let u = wave_oracle(|t, _| t, 1.2, [0.1, 0.0], 2.0).unwrap();
        assert!((u - 1.2f64.powi(3) / 6.0).abs() < 1e-12);
        // f = x1^2 - 2 t^2 ... check via u = t^2 x1^2/2 - t^4/12 + ... : use
        // u = t^2 x1^2 / 2 solves u_tt - lap u = x1^2 - t^2
        let x = [0.4, -0.3];
        let t = 0.9;
        let u = wave_oracle(|t, y| y[0] * y[0] - t * t, t, x, 2.0).unwrap();
        assert!((u - 0.5 * t * t * x[0] * x[0]).abs() < 1e-12, "{u}");
    }

    #[test]
    fn initial_data_term_reproduces_plane_wave_and_constants() {
        let o = WaveOracle::new(16, 48, 96, 5.0);
        // u = cos(x1 - t): g = cos x1, h = sin x1
        let (t, x) = (0.8, [0.3, -0.2]);
        let u = o
            .data_term(|y| y[0].cos(), |y| [-y[0].sin(), 0.0], |y| y[0].sin(), t, x)
            .unwrap();
        assert!((u - (x[0] - t).cos()).abs() < 1e-12, "{u}");
        // u = 1 + t
        let u = o.data_term(|_| 1.0, |_| [0.0, 0.0], |_| 1.0, t, x).unwrap();
        assert!((u - 1.0 - t).abs() < 1e-12);
    }

    #[test]
    fn outside_point_is_a_domain_error() {
        assert!(matches!(wave_oracle(|_, _| 1.0, 1.0, [2.5, 0.0], 2.0), Err(SolverError::Domain(_))));
    }
}
