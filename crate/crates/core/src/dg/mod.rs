//! Discontinuous Galerkin building blocks: quadrature, modal bases, element
//! maps, fields, projections, error norms, and face averages/jumps.

pub mod basis;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod mass;
pub mod quadrature;

pub use basis::{Basis1D, Basis2D, LocalFace, Tab1D, Tab2D};
pub use field::{l2_error, l2_norm_squared, project_l2, DGField, ElementGeometry, Host};
pub use geometry::{ColumnQuad, FacePoint, Interval, MapFactors};
pub use quadrature::{QuadRule, QuadRule2D};

use crate::error::{Error, Result};

/// Average and (vector-valued) jump of a scalar across a face with traces
/// `a` on the side with outward normal `n` and `b` on the other side.
#[inline]
pub fn jump_avg_scalar(a: f64, b: f64, n: [f64; 2]) -> (f64, [f64; 2]) {
    (0.5 * (a + b), [(a - b) * n[0], (a - b) * n[1]])
}

/// Average and (scalar-valued) jump of a vector across a face.
#[inline]
pub fn jump_avg_vector(a: [f64; 2], b: [f64; 2], n: [f64; 2]) -> ([f64; 2], f64) {
    (
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
        (a[0] - b[0]) * n[0] + (a[1] - b[1]) * n[1],
    )
}

/// Estimated order of convergence between two refinement levels.
pub fn eoc(err_coarse: f64, err_fine: f64, dx_coarse: f64, dx_fine: f64) -> Result<f64> {
    for (what, v) in [
        ("coarse error", err_coarse),
        ("fine error", err_fine),
        ("coarse mesh size", dx_coarse),
        ("fine mesh size", dx_fine),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { what, value: v });
        }
    }
    if dx_coarse == dx_fine {
        return Err(Error::NonPositive {
            what: "mesh size ratio - 1",
            value: 0.0,
        });
    }
    Ok((err_coarse / err_fine).ln() / (dx_coarse / dx_fine).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jump_of_scalar_example() {
        let (avg, jump) = jump_avg_scalar(2.0, 4.0, [1.0, 0.0]);
        assert_eq!(avg, 3.0);
        assert_eq!(jump, [-2.0, 0.0]);
        let (avg, jump) = jump_avg_scalar(1.5, 1.5, [0.6, 0.8]);
        assert_eq!((avg, jump), (1.5, [0.0, 0.0]));
    }

    #[test]
    fn product_identities_hold_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let n = [theta.cos(), theta.sin()];
            let (a1, a2, b1, b2): (f64, f64, f64, f64) = (
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            // [ab] = {a}[b] + [a]{b}
            let (_, jab) = jump_avg_scalar(a1 * b1, a2 * b2, n);
            let (aa, ja) = jump_avg_scalar(a1, a2, n);
            let (ab, jb) = jump_avg_scalar(b1, b2, n);
            for k in 0..2 {
                let rhs = aa * jb[k] + ja[k] * ab;
                assert!((jab[k] - rhs).abs() <= 1e-13 * (1.0 + jab[k].abs()));
            }
            // {ab} = {a}{b} + 1/4 [a].[b]
            let (avg_ab, _) = jump_avg_scalar(a1 * b1, a2 * b2, n);
            let rhs = aa * ab + 0.25 * (ja[0] * jb[0] + ja[1] * jb[1]);
            assert!((avg_ab - rhs).abs() <= 1e-13 * (1.0 + avg_ab.abs()));
        }
    }

    proptest::proptest! {
        #[test]
        fn vector_product_rule(
            a in (-10.0f64..10.0, -10.0f64..10.0),
            v1 in (-10.0f64..10.0, -10.0f64..10.0),
            v2 in (-10.0f64..10.0, -10.0f64..10.0),
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            // [a v] = {a}[v] + [a].{v}
            let n = [theta.cos(), theta.sin()];
            let (v1, v2) = ([v1.0, v1.1], [v2.0, v2.1]);
            let (_, jav) = jump_avg_vector([a.0 * v1[0], a.0 * v1[1]], [a.1 * v2[0], a.1 * v2[1]], n);
            let (aa, ja) = jump_avg_scalar(a.0, a.1, n);
            let (av, jv) = jump_avg_vector(v1, v2, n);
            let rhs = aa * jv + ja[0] * av[0] + ja[1] * av[1];
            proptest::prop_assert!((jav - rhs).abs() <= 1e-13 * (1.0 + jav.abs()));
        }
    }

    #[test]
    fn eoc_examples() {
        assert!((eoc(2.47e-1, 5.52e-2, 2.0, 1.0).unwrap() - 2.16).abs() < 5e-3);
        assert_eq!(eoc(0.3, 0.3, 2.0, 1.0).unwrap(), 0.0);
        assert!((eoc(4.0e-3, 1.0e-3, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(eoc(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(eoc(1.0, -1.0, 2.0, 1.0).is_err());
    }
}
