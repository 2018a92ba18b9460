//! Pointwise numerical fluxes of the free-flow system. Each case carries the
//! traces its face class needs, so a missing penalty or interface value is a
//! type error rather than a runtime one. Fluxes are seen from the side whose
//! outward unit normal is `n`.

use crate::error::{Error, Result};
use crate::mesh::FaceClass;

/// Interior lateral penalty from the normal velocities on both sides.
#[inline]
pub fn lambda_interior(un_own: f64, un_other: f64) -> f64 {
    let m = 0.5 * (un_own.abs() + un_other.abs());
    m + (m * m + 1.0).sqrt()
}

/// Penalty on inflow faces from the interior normal velocity.
#[inline]
pub fn lambda_inflow(un: f64) -> f64 {
    un.abs() + (un * un + 1.0).sqrt()
}

/// Lower bound satisfied by the penalty for any trace.
#[inline]
pub fn lambda_lower_bound(un: f64) -> f64 {
    let r = std::f64::consts::SQRT_2;
    (r + 1.0) / r * un.abs() + 1.0 / r
}

/// Penalty on a face of the given class. `un_other` is the neighbour trace
/// on interior lateral faces.
pub fn compute_lambda_u(class: FaceClass, un_own: f64, un_other: Option<f64>) -> Result<f64> {
    match (class, un_other) {
        (FaceClass::Lateral, Some(o)) => Ok(lambda_interior(un_own, o)),
        (FaceClass::Lateral, None) => Err(Error::Missing("neighbour trace for lateral penalty")),
        (FaceClass::Inflow, _) => Ok(lambda_inflow(un_own)),
        (c, _) => Err(Error::WrongFaceClass {
            flux: "lambda_U",
            class: format!("{c:?}"),
        }),
    }
}

/// Depth-integrated mass flux through lateral faces (horizontal velocity
/// dotted with the horizontal normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhCase {
    Lateral { own: f64, other: f64 },
    Inflow { own: f64 },
    Outflow { u_hat: f64 },
}

#[inline]
pub fn flux_r_h(case: RhCase, nx: f64) -> f64 {
    match case {
        RhCase::Lateral { own, other } => 0.5 * (own + other) * nx,
        RhCase::Inflow { own } => own * nx,
        RhCase::Outflow { u_hat } => u_hat * nx,
    }
}

/// `R_H` dispatch by face class; fails on non-lateral classes.
pub fn flux_r_h_checked(class: FaceClass, case: RhCase, nx: f64) -> Result<f64> {
    let ok = matches!(
        (class, case),
        (FaceClass::Lateral, RhCase::Lateral { .. })
            | (FaceClass::Inflow, RhCase::Inflow { .. })
            | (FaceClass::Outflow, RhCase::Outflow { .. })
    );
    if ok {
        Ok(flux_r_h(case, nx))
    } else {
        Err(Error::WrongFaceClass {
            flux: "R_H",
            class: format!("{class:?}"),
        })
    }
}

/// Advective momentum flux cases. `u` is the horizontal velocity, `w` the
/// vertical one, `xi` the elevation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuCase {
    /// Interior lateral face: traces on both sides and the penalty.
    Lateral {
        u: [f64; 2],
        xi: [f64; 2],
        lambda: f64,
    },
    /// Interior horizontal face: `u` on both sides, `below` = (u, w) of the
    /// lower element, single-valued `xi`.
    Horizontal {
        u: [f64; 2],
        below: [f64; 2],
        xi: f64,
    },
    Inflow {
        u: f64,
        xi_hat: f64,
        u_hat: f64,
        lambda: f64,
    },
    Outflow {
        u: f64,
        u_hat: f64,
        xi: f64,
    },
    Top {
        u: f64,
        w: f64,
        xi: f64,
    },
    /// Interface: `darcy_flux` is the seepage velocity dotted with `n`.
    Bottom {
        u: f64,
        darcy_flux: f64,
        xi: f64,
    },
}

#[inline]
pub fn flux_r_u(case: RuCase, n: [f64; 2]) -> f64 {
    match case {
        RuCase::Lateral { u, xi, lambda } => {
            0.5 * (u[0] * u[0] + u[1] * u[1]) * n[0]
                + 0.5 * (xi[0] + xi[1]) * n[0]
                + 0.5 * lambda * (u[0] - u[1])
        }
        RuCase::Horizontal { u, below, xi } => {
            0.5 * (u[0] + u[1]) * (below[0] * n[0] + below[1] * n[1]) + xi * n[0]
        }
        RuCase::Inflow {
            u,
            xi_hat,
            u_hat,
            lambda,
        } => u * u * n[0] + xi_hat * n[0] + 0.5 * lambda * (u - u_hat),
        RuCase::Outflow { u, u_hat, xi } => u * u_hat * n[0] + xi * n[0],
        RuCase::Top { u, w, xi } => u * (u * n[0] + w * n[1]) + xi * n[0],
        RuCase::Bottom { u, darcy_flux, xi } => u * darcy_flux + xi * n[0],
    }
}

/// Bottom friction law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Friction {
    /// `C_f u`.
    Linear(f64),
    /// `C_f |u| u`.
    Quadratic(f64),
}

impl Friction {
    pub fn new_linear(c: f64) -> Result<Self> {
        Self::check(c).map(|_| Friction::Linear(c))
    }

    pub fn new_quadratic(c: f64) -> Result<Self> {
        Self::check(c).map(|_| Friction::Quadratic(c))
    }

    fn check(c: f64) -> Result<()> {
        if c >= 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositive {
                what: "friction coefficient",
                value: c,
            })
        }
    }

    #[inline]
    pub fn stress(self, u: f64) -> f64 {
        match self {
            Friction::Linear(c) => c * u,
            Friction::Quadratic(c) => c * u.abs() * u,
        }
    }
}

/// Diffusive momentum flux cases (`Q` is the 2-vector `-D grad u`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuCase {
    Interior { q: [[f64; 2]; 2] },
    /// Lateral boundary: one-sided.
    Boundary { q: [f64; 2] },
    Top,
    Bottom { u: f64, friction: Friction },
}

#[inline]
pub fn flux_s_u(case: SuCase, n: [f64; 2]) -> f64 {
    match case {
        SuCase::Interior { q } => {
            0.5 * ((q[0][0] + q[1][0]) * n[0] + (q[0][1] + q[1][1]) * n[1])
        }
        SuCase::Boundary { q } => q[0] * n[0] + q[1] * n[1],
        SuCase::Top => 0.0,
        SuCase::Bottom { u, friction } => friction.stress(u),
    }
}

/// Trace of `u` used by the auxiliary equation (multiplied by `n` there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SqCase {
    Interior { u: [f64; 2] },
    Boundary { u_hat: f64 },
    /// Top and bottom: one-sided.
    OneSided { u: f64 },
}

#[inline]
pub fn flux_s_q(case: SqCase) -> f64 {
    match case {
        SqCase::Interior { u } => 0.5 * (u[0] + u[1]),
        SqCase::Boundary { u_hat } => u_hat,
        SqCase::OneSided { u } => u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_interior(0.0, 0.0), 1.0);
        assert_eq!(lambda_inflow(0.75), 2.0);
        assert!((lambda_lower_bound(0.75) - 1.98744).abs() < 1e-5);
        assert!(lambda_inflow(0.75) >= lambda_lower_bound(0.75));
        assert!(compute_lambda_u(FaceClass::Top, 1.0, None).is_err());
        assert!(compute_lambda_u(FaceClass::Lateral, 1.0, None).is_err());
        assert_eq!(compute_lambda_u(FaceClass::Inflow, -0.75, None).unwrap(), 2.0);
    }

    #[test]
    fn r_h_examples() {
        assert_eq!(flux_r_h(RhCase::Lateral { own: 0.4, other: 0.4 }, 1.0), 0.4);
        assert_eq!(flux_r_h(RhCase::Outflow { u_hat: 0.3 }, 1.0), 0.3);
        assert_eq!(flux_r_h(RhCase::Lateral { own: 1.0, other: 3.0 }, 1.0), 2.0);
        assert!(flux_r_h_checked(FaceClass::Top, RhCase::Inflow { own: 1.0 }, 1.0).is_err());
    }

    #[test]
    fn r_u_examples() {
        let n = [1.0, 0.0];
        let cont = flux_r_u(
            RuCase::Lateral {
                u: [0.3, 0.3],
                xi: [2.0, 2.0],
                lambda: 7.0,
            },
            n,
        );
        assert!((cont - (0.09 + 2.0)).abs() < 1e-15);
        let inflow = flux_r_u(
            RuCase::Inflow {
                u: 0.2,
                xi_hat: 5.0,
                u_hat: 0.2,
                lambda: 3.0,
            },
            [-1.0, 0.0],
        );
        assert!((inflow - (0.2 * -0.2 - 5.0)).abs() < 1e-15);
        let n = [0.1, -0.99];
        let b = flux_r_u(
            RuCase::Bottom {
                u: 0.5,
                darcy_flux: 0.0,
                xi: 3.0,
            },
            n,
        );
        assert_eq!(b, 3.0 * 0.1);
    }

    #[test]
    fn s_u_examples() {
        assert_eq!(flux_s_u(SuCase::Top, [0.0, 1.0]), 0.0);
        let s = flux_s_u(
            SuCase::Bottom {
                u: 2.0,
                friction: Friction::Linear(0.01),
            },
            [0.0, -1.0],
        );
        assert_eq!(s, 0.02);
        assert_eq!(Friction::Quadratic(0.01).stress(-2.0), -0.04);
        assert_eq!(Friction::Linear(0.01).stress(0.0), 0.0);
        assert!(Friction::new_linear(-1.0).is_err());
        let q = [0.2, -0.1];
        assert_eq!(
            flux_s_u(SuCase::Interior { q: [q, q] }, [0.6, 0.8]),
            flux_s_u(SuCase::Boundary { q }, [0.6, 0.8])
        );
    }

    #[test]
    fn interior_fluxes_are_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut r = || rng.gen_range(-3.0..3.0);
            let (a, b, xa, xb) = (r(), r(), r(), r());
            let (qa, qb) = ([r(), r()], [r(), r()]);
            let (ub, wb) = (r(), r());
            let th: f64 = r();
            let n = [th.cos(), th.sin()];
            let m = [-n[0], -n[1]];
            let lam = lambda_interior(a * n[0], b * n[0]);
            let lam2 = lambda_interior(b * m[0], a * m[0]);
            assert_eq!(lam, lam2);

            let own = flux_r_u(RuCase::Lateral { u: [a, b], xi: [xa, xb], lambda: lam }, n);
            let nbr = flux_r_u(RuCase::Lateral { u: [b, a], xi: [xb, xa], lambda: lam }, m);
            assert!((own + nbr).abs() < 1e-13);

            let own = flux_r_u(RuCase::Horizontal { u: [a, b], below: [ub, wb], xi: xa }, n);
            let nbr = flux_r_u(RuCase::Horizontal { u: [b, a], below: [ub, wb], xi: xa }, m);
            assert!((own + nbr).abs() < 1e-13);

            let own = flux_s_u(SuCase::Interior { q: [qa, qb] }, n);
            let nbr = flux_s_u(SuCase::Interior { q: [qb, qa] }, m);
            assert!((own + nbr).abs() < 1e-13);

            let own = flux_r_h(RhCase::Lateral { own: a, other: b }, n[0]);
            let nbr = flux_r_h(RhCase::Lateral { own: b, other: a }, m[0]);
            assert!((own + nbr).abs() < 1e-13);

            let own = flux_s_q(SqCase::Interior { u: [a, b] });
            let nbr = flux_s_q(SqCase::Interior { u: [b, a] });
            assert_eq!(own * n[0], -(nbr * m[0]));
        }
    }
}
