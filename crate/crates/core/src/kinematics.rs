//! Relativistic kinematics in units where the speed of light is one.

use crate::math::sqrt;

pub type Vec2 = [f64; 2];

/// `sqrt(1 + |p|^2)`.
#[inline]
pub fn lorentz_factor(p: Vec2) -> f64 {
    sqrt(1.0 + p[0] * p[0] + p[1] * p[1])
}

/// Particle velocity `p / sqrt(1 + |p|^2)`; always strictly sub-luminal.
#[inline]
pub fn relativistic_velocity(p: Vec2) -> Vec2 {
    let g = lorentz_factor(p);
    [p[0] / g, p[1] / g]
}

/// Rotation by +90 degrees: `(a1, a2) -> (-a2, a1)`.
#[inline]
pub fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

/// Jacobian `d v_i / d p_j` of [`relativistic_velocity`].
#[inline]
pub fn velocity_jacobian(p: Vec2) -> [[f64; 2]; 2] {
    let g = lorentz_factor(p);
    let g3 = g * g * g;
    [
        [1.0 / g - p[0] * p[0] / g3, -p[0] * p[1] / g3],
        [-p[1] * p[0] / g3, 1.0 / g - p[1] * p[1] / g3],
    ]
}

/// Lorentz-type force `K = E - v_perp B` for in-plane `E` and scalar `B`.
#[inline]
pub fn lorentz_force(e: Vec2, b: f64, p: Vec2) -> Vec2 {
    let v = relativistic_velocity(p);
    let vp = perp(v);
    [e[0] - vp[0] * b, e[1] - vp[1] * b]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    sqrt(a[0] * a[0] + a[1] * a[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec2, b: Vec2) -> bool {
        (a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(relativistic_velocity([0.0, 0.0]), [0.0, 0.0]);
        assert!(close(relativistic_velocity([1.0, 0.0]), [1.0 / 2f64.sqrt(), 0.0]));
        let s = 26f64.sqrt();
        assert!(close(relativistic_velocity([3.0, 4.0]), [3.0 / s, 4.0 / s]));
    }

    #[test]
    fn perp_examples() {
        assert_eq!(perp([1.0, 0.0]), [-0.0, 1.0]);
        assert_eq!(perp([0.0, 1.0]), [-1.0, 0.0]);
        assert_eq!(perp([2.0, -3.0]), [3.0, 2.0]);
    }

    #[test]
    fn force_matches_component_form() {
        // E + (v2, -v1) B
        let p = [0.7, -1.3];
        let v = relativistic_velocity(p);
        let k = lorentz_force([0.2, -0.1], 0.9, p);
        assert!(close(k, [0.2 + v[1] * 0.9, -0.1 - v[0] * 0.9]));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = [0.4, -2.1];
        let jac = velocity_jacobian(p);
        let h = 1e-6;
        for j in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[j] += h;
            pm[j] -= h;
            let (vp, vm) = (relativistic_velocity(pp), relativistic_velocity(pm));
            for i in 0..2 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - jac[i][j]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn velocity_is_subluminal_and_odd(p1 in -1e3f64..1e3, p2 in -1e3f64..1e3) {
            let v = relativistic_velocity([p1, p2]);
            prop_assert!(norm(v) < 1.0);
            let w = relativistic_velocity([-p1, -p2]);
            prop_assert_eq!(w, [-v[0], -v[1]]);
        }

        #[test]
        fn perp_twice_is_negation(a1 in -1e6f64..1e6, a2 in -1e6f64..1e6) {
            prop_assert_eq!(perp(perp([a1, a2])), [-a1, -a2]);
        }

        #[test]
        fn magnetic_force_is_orthogonal_to_velocity(p1 in -5f64..5.0, p2 in -5f64..5.0, b in -3f64..3.0) {
            let v = relativistic_velocity([p1, p2]);
            let k = lorentz_force([0.0, 0.0], b, [p1, p2]);
            prop_assert!((k[0] * v[0] + k[1] * v[1]).abs() < 1e-14);
        }
    }
}
