//! Manufactured solution on the vertical slice `(0, 100)` with interface
//! `z_b(x) = 0.005 x`, free-flow viscosity `0.05 I`, and Darcy conductivity
//! `0.01 I`, together with the source terms that make it an exact solution of
//! the continuous coupled system (g = 1).
//!
//! ```text
//! xi(t,x)  = 5 + 0.003 sin(0.08 x + 0.08 t)
//! u(t,x,z) = r(t,x) (cos(0.1 z) - cos(0.1 z_b(x)))
//! w(t,x,z) = n(t,x,z) + eps(t,x)
//! h(t,x,z) = xi(t,x) + (sin(0.3 z) - sin(0.3 z_b(x))) m(t,x)
//! r(t,x)   = sin(0.07 x + 0.4 t),   m(t,x) = cos(0.07 x + 0.07 t)
//! ```
//!
//! `n` makes `u_x + w_z = 0`; `eps` shifts `w` so that the normal flux is
//! continuous across the interface. All derivatives below are closed forms.

use crate::error::{Error, Result};

/// Interface slope `dz_b/dx`.
pub const SLOPE: f64 = 0.005;
/// Free-flow eddy viscosity (isotropic).
pub const VISCOSITY: f64 = 0.05;
/// Darcy conductivity (isotropic).
pub const CONDUCTIVITY: f64 = 0.01;
/// Horizontal extent of the slice.
pub const LENGTH: f64 = 100.0;
/// Depth of the bottom of the Darcy block.
pub const DARCY_BOTTOM: f64 = -5.0;
/// End of the simulated time interval.
pub const END_TIME: f64 = 10.0;

/// Names accepted by [`eval_exact`].
pub const FIELDS: [&str; 8] = ["xi", "u", "w", "qx", "qz", "h", "darcy_u", "darcy_w"];
/// Names accepted by [`eval_forcing`].
pub const EQUATIONS: [&str; 4] = ["momentum", "pce", "darcy", "continuity"];

#[inline]
pub fn zb(x: f64) -> f64 {
    SLOPE * x
}

/// Free-surface elevation.
#[inline]
pub fn xi(t: f64, x: f64) -> f64 {
    5.0 + 0.003 * (0.08 * x + 0.08 * t).sin()
}


/// Values needed repeatedly at one `(t, x)`.
#[derive(Debug, Clone, Copy)]
struct Column {
    r: f64,
    r_x: f64,
    r_xx: f64,
    r_t: f64,
    m: f64,
    m_x: f64,
    m_xx: f64,
    m_t: f64,
    xi: f64,
    xi_x: f64,
    xi_xx: f64,
    zb: f64,
    /// sin(0.1 zb), cos(0.1 zb)
    s1b: f64,
    c1b: f64,
    /// sin(0.3 zb), cos(0.3 zb)
    s3b: f64,
    c3b: f64,
}

impl Column {
    #[inline]
    fn new(t: f64, x: f64) -> Self {
        let (sr, cr) = (0.07 * x + 0.4 * t).sin_cos();
        let (sm, cm) = (0.07 * x + 0.07 * t).sin_cos();
        let (sx, cx) = (0.08 * x + 0.08 * t).sin_cos();
        let zb = zb(x);
        let (s1b, c1b) = (0.1 * zb).sin_cos();
        let (s3b, c3b) = (0.3 * zb).sin_cos();
        Self {
            r: sr,
            r_x: 0.07 * cr,
            r_xx: -0.0049 * sr,
            r_t: 0.4 * cr,
            m: cm,
            m_x: -0.07 * sm,
            m_xx: -0.0049 * cm,
            m_t: -0.07 * sm,
            xi: 5.0 + 0.003 * sx,
            xi_x: 0.00024 * cx,
            xi_xx: -0.0000192 * sx,
            zb,
            s1b,
            c1b,
            s3b,
            c3b,
        }
    }

    /// `n(t, x, z)` and `dn/dz`.
    #[inline]
    fn n(&self, z: f64) -> (f64, f64) {
        let (s1, c1) = (0.1 * z).sin_cos();
        let n = -self.r_x * (10.0 * s1 - z * self.c1b) - 0.1 * SLOPE * self.r * z * self.s1b;
        let n_z = -self.r_x * (c1 - self.c1b) - 0.1 * SLOPE * self.r * self.s1b;
        (n, n_z)
    }

    /// Head gradient at the interface `(h_x, h_z)` at `z = zb`.
    #[inline]
    fn head_gradient_at_interface(&self) -> (f64, f64) {
        let s_x = -0.3 * SLOPE * self.c3b;
        (self.xi_x + s_x * self.m, 0.3 * self.c3b * self.m)
    }

    #[inline]
    fn eps(&self) -> f64 {
        let (hx, hz) = self.head_gradient_at_interface();
        CONDUCTIVITY * (SLOPE * hx - hz) - self.n(self.zb).0
    }
}

/// Horizontal velocity and derivatives at one point.
#[derive(Debug, Clone, Copy)]
struct Velocity {
    u: f64,
    u_t: f64,
    u_x: f64,
    u_z: f64,
    u_xx: f64,
    u_zz: f64,
}

#[inline]
fn velocity(col: &Column, z: f64) -> Velocity {
    let (s1, c1) = (0.1 * z).sin_cos();
    let a = c1 - col.c1b;
    let a_x = 0.1 * SLOPE * col.s1b;
    let a_xx = 0.1 * SLOPE * 0.1 * SLOPE * col.c1b;
    let a_z = -0.1 * s1;
    let a_zz = -0.01 * c1;
    Velocity {
        u: col.r * a,
        u_t: col.r_t * a,
        u_x: col.r_x * a + col.r * a_x,
        u_z: col.r * a_z,
        u_xx: col.r_xx * a + 2.0 * col.r_x * a_x + col.r * a_xx,
        u_zz: col.r * a_zz,
    }
}

/// Hydraulic head and derivatives at one point.
#[derive(Debug, Clone, Copy)]
struct Head {
    h: f64,
    h_t: f64,
    h_x: f64,
    h_z: f64,
    h_xx: f64,
    h_zz: f64,
}

#[inline]
fn head(col: &Column, z: f64) -> Head {
    let (s3, c3) = (0.3 * z).sin_cos();
    let s = s3 - col.s3b;
    let s_x = -0.3 * SLOPE * col.c3b;
    let s_xx = 0.3 * SLOPE * 0.3 * SLOPE * col.s3b;
    let s_z = 0.3 * c3;
    let s_zz = -0.09 * s3;
    // xi_t == xi_x for this solution
    Head {
        h: col.xi + s * col.m,
        h_t: col.xi_x + s * col.m_t,
        h_x: col.xi_x + s_x * col.m + s * col.m_x,
        h_z: s_z * col.m,
        h_xx: col.xi_xx + s_xx * col.m + 2.0 * s_x * col.m_x + s * col.m_xx,
        h_zz: s_zz * col.m,
    }
}

/// Pointwise exact free-flow state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeFlowSample {
    pub u: f64,
    pub w: f64,
    /// Viscous flux `Q = -D grad u`.
    pub q: [f64; 2],
    /// Momentum source.
    pub f_u: f64,
}

/// Pointwise exact Darcy state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarcySample {
    pub h: f64,
    /// Seepage velocity `-D~ grad h`.
    pub flux: [f64; 2],
    /// Darcy source.
    pub f: f64,
}

pub fn free_flow(t: f64, x: f64, z: f64) -> FreeFlowSample {
    let col = Column::new(t, x);
    let v = velocity(&col, z);
    let (n, n_z) = col.n(z);
    let w = n + col.eps();
    let w_z = n_z;
    let f_u = v.u_t + 2.0 * v.u * v.u_x + v.u_z * w + v.u * w_z + col.xi_x
        - VISCOSITY * (v.u_xx + v.u_zz);
    FreeFlowSample {
        u: v.u,
        w,
        q: [-VISCOSITY * v.u_x, -VISCOSITY * v.u_z],
        f_u,
    }
}

pub fn darcy(t: f64, x: f64, z: f64) -> DarcySample {
    let col = Column::new(t, x);
    let h = head(&col, z);
    DarcySample {
        h: h.h,
        flux: [-CONDUCTIVITY * h.h_x, -CONDUCTIVITY * h.h_z],
        f: h.h_t - CONDUCTIVITY * (h.h_xx + h.h_zz),
    }
}

/// Source of the depth-integrated continuity equation,
/// `xi_t + d/dx int_{zb}^{xi} u dz + (u~ . n) |dS/dx|` with `n` the outward
/// free-flow normal on the interface.
pub fn pce_source(t: f64, x: f64) -> f64 {
    let col = Column::new(t, x);
    let depth = col.xi - col.zb;
    let (sxi, cxi) = (0.1 * col.xi).sin_cos();
    let b = 10.0 * (sxi - col.s1b) - depth * col.c1b;
    let b_x = col.xi_x * (cxi - col.c1b) + 0.1 * SLOPE * depth * col.s1b;
    let (hx, hz) = col.head_gradient_at_interface();
    // n |dS/dx| = (SLOPE, -1)
    let seepage_out = -CONDUCTIVITY * (SLOPE * hx - hz);
    col.xi_x + col.r_x * b + col.r * b_x + seepage_out
}

/// `u_x + w_z` from closed-form derivatives (zero by construction).
pub fn divergence(t: f64, x: f64, z: f64) -> f64 {
    let col = Column::new(t, x);
    velocity(&col, z).u_x + col.n(z).1
}

pub fn eval_exact(field: &str, t: f64, x: f64, z: f64) -> Result<f64> {
    Ok(match field {
        "xi" => xi(t, x),
        "u" => free_flow(t, x, z).u,
        "w" => free_flow(t, x, z).w,
        "qx" => free_flow(t, x, z).q[0],
        "qz" => free_flow(t, x, z).q[1],
        "h" => darcy(t, x, z).h,
        "darcy_u" => darcy(t, x, z).flux[0],
        "darcy_w" => darcy(t, x, z).flux[1],
        other => return Err(Error::UnknownField(other.to_string())),
    })
}

pub fn eval_forcing(equation: &str, t: f64, x: f64, z: f64) -> Result<f64> {
    Ok(match equation {
        "momentum" => free_flow(t, x, z).f_u,
        "pce" => pce_source(t, x),
        "darcy" => darcy(t, x, z).f,
        "continuity" => divergence(t, x, z),
        other => return Err(Error::UnknownField(other.to_string())),
    })
}

/// Per-column cache of the `x`-only factors, for evaluating the free-flow
/// momentum source at many points sharing a few abscissae.
#[derive(Debug, Clone)]
pub struct ColumnCache {
    cols: Vec<Column>,
    t: f64,
    xs: Vec<f64>,
}

impl ColumnCache {
    pub fn new(xs: Vec<f64>) -> Self {
        let t = f64::NAN;
        Self {
            cols: Vec::new(),
            t,
            xs,
        }
    }

    /// Refreshes the cache for time `t`; cheap if `t` is unchanged.
    pub fn at_time(&mut self, t: f64) {
        if self.t == t {
            return;
        }
        self.t = t;
        self.cols = self.xs.iter().map(|&x| Column::new(t, x)).collect();
    }

    pub fn free_flow(&self, i: usize, z: f64) -> FreeFlowSample {
        let col = &self.cols[i];
        let v = velocity(col, z);
        let (n, n_z) = col.n(z);
        let w = n + col.eps();
        let f_u = v.u_t + 2.0 * v.u * v.u_x + v.u_z * w + v.u * n_z + col.xi_x
            - VISCOSITY * (v.u_xx + v.u_zz);
        FreeFlowSample {
            u: v.u,
            w,
            q: [-VISCOSITY * v.u_x, -VISCOSITY * v.u_z],
            f_u,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::QuadRule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn anchor_values() {
        assert_eq!(xi(0.0, 0.0), 5.0);
        for z in [0.0, 1.0, 3.3, 5.0] {
            assert_eq!(free_flow(0.0, 0.0, z).u, 0.0);
        }
        assert_eq!(zb(0.0), 0.0);
        assert!((zb(100.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn head_matches_elevation_on_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = rng.gen_range(0.0..10.0);
            let x = rng.gen_range(0.0..100.0);
            assert!((darcy(t, x, zb(x)).h - xi(t, x)).abs() < 1e-14);
            assert!(free_flow(t, x, zb(x)).u.abs() < 1e-15);
        }
    }

    #[test]
    fn divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = rng.gen_range(0.0..10.0);
            let x = rng.gen_range(0.0..100.0);
            let z = rng.gen_range(zb(x)..5.01);
            assert!(divergence(t, x, z).abs() < 1e-10);
            assert_eq!(eval_forcing("continuity", t, x, z).unwrap(), divergence(t, x, z));
        }
    }

    #[test]
    fn interface_flux_continuity_defines_eps() {
        // w(zb) equals the free-flow normal velocity matching the Darcy flux:
        // (u, w).(SLOPE, -1) = (u~, w~).(SLOPE, -1) with u(zb) = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = rng.gen_range(0.0..10.0);
            let x = rng.gen_range(0.0..100.0);
            let ff = free_flow(t, x, zb(x));
            let d = darcy(t, x, zb(x));
            let lhs = ff.u * SLOPE - ff.w;
            let rhs = d.flux[0] * SLOPE - d.flux[1];
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn column_cache_matches_direct_evaluation() {
        let xs = vec![0.3, 17.0, 99.1];
        let mut cache = ColumnCache::new(xs.clone());
        cache.at_time(2.5);
        for (i, &x) in xs.iter().enumerate() {
            for z in [0.5, 2.0, 4.9] {
                assert_eq!(cache.free_flow(i, z), free_flow(2.5, x, z));
            }
        }
    }

    #[test]
    fn unknown_names_are_errors() {
        assert!(eval_exact("vorticity", 0.0, 0.0, 0.0).is_err());
        assert!(eval_forcing("energy", 0.0, 0.0, 0.0).is_err());
        for f in FIELDS {
            assert!(eval_exact(f, 1.0, 2.0, 3.0).unwrap().is_finite());
        }
    }

    // Finite-difference oracle: residuals of the continuous equations built
    // only from values of the exact fields.
    pub(crate) mod oracle {
        use super::super::*;
        use crate::dg::QuadRule;

        const H: f64 = 1e-5;

        fn u(t: f64, x: f64, z: f64) -> f64 {
            free_flow(t, x, z).u
        }
        fn w(t: f64, x: f64, z: f64) -> f64 {
            free_flow(t, x, z).w
        }
        fn hd(t: f64, x: f64, z: f64) -> f64 {
            darcy(t, x, z).h
        }

        pub fn momentum(t: f64, x: f64, z: f64) -> f64 {
            let u_t = (u(t + H, x, z) - u(t - H, x, z)) / (2.0 * H);
            let uu = |x: f64, z: f64| u(t, x, z) * u(t, x, z);
            let uw = |x: f64, z: f64| u(t, x, z) * w(t, x, z);
            let adv_x = (uu(x + H, z) - uu(x - H, z)) / (2.0 * H);
            let adv_z = (uw(x, z + H) - uw(x, z - H)) / (2.0 * H);
            let h2 = 1e-3;
            let lap = (u(t, x + h2, z) + u(t, x - h2, z) + u(t, x, z + h2) + u(t, x, z - h2)
                - 4.0 * u(t, x, z))
                / (h2 * h2);
            let xi_x = (xi(t, x + H) - xi(t, x - H)) / (2.0 * H);
            u_t + adv_x + adv_z - VISCOSITY * lap + xi_x
        }

        pub fn darcy_source(t: f64, x: f64, z: f64) -> f64 {
            let h_t = (hd(t + H, x, z) - hd(t - H, x, z)) / (2.0 * H);
            let h2 = 1e-3;
            let lap = (hd(t, x + h2, z) + hd(t, x - h2, z) + hd(t, x, z + h2) + hd(t, x, z - h2)
                - 4.0 * hd(t, x, z))
                / (h2 * h2);
            h_t - CONDUCTIVITY * lap
        }

        fn depth_integral(t: f64, x: f64) -> f64 {
            let rule = QuadRule::gauss_legendre(20);
            let (lo, hi) = (zb(x), xi(t, x));
            let half = 0.5 * (hi - lo);
            rule.integrate(|s| u(t, x, lo + (1.0 + s) * half)) * half
        }

        pub fn pce(t: f64, x: f64) -> f64 {
            let xi_t = (xi(t + H, x) - xi(t - H, x)) / (2.0 * H);
            let hx = 1e-3;
            let flux_x = (depth_integral(t, x + hx) - depth_integral(t, x - hx)) / (2.0 * hx);
            let z = zb(x);
            let h_x = (hd(t, x + H, z) - hd(t, x - H, z)) / (2.0 * H);
            let h_z = (hd(t, x, z + H) - hd(t, x, z - H)) / (2.0 * H);
            let seep = -CONDUCTIVITY * (SLOPE * h_x - h_z);
            xi_t + flux_x + seep
        }
    }

    fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale)
    }

    #[test]
    fn forcing_matches_finite_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t = rng.gen_range(0.0..10.0);
            let x = rng.gen_range(1.0..99.0);
            let z = rng.gen_range(zb(x)..5.0);
            let zd = rng.gen_range(-5.0..zb(x));
            let fu = eval_forcing("momentum", t, x, z).unwrap();
            assert!(rel_close(fu, oracle::momentum(t, x, z), 1e-3, 1e-6), "{fu}");
            let fd = eval_forcing("darcy", t, x, zd).unwrap();
            assert!(rel_close(fd, oracle::darcy_source(t, x, zd), 1e-3, 1e-6), "{fd}");
            let fh = eval_forcing("pce", t, x, 0.0).unwrap();
            assert!(rel_close(fh, oracle::pce(t, x), 1e-3, 1e-6), "{fh}");
        }
        let _ = QuadRule::gauss_legendre(2);
    }
}
