//! Quick invariant checks behind the `selftest` command. Each check is a
//! reduced version of one property the integration tests pin down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialKind, RunConfig};
use crate::dg::{jump_avg_scalar, jump_avg_vector};
use crate::driver::build;
use crate::error::Result;
use crate::freeflow::flux::{flux_r_h, flux_r_u, lambda_inflow, lambda_interior, lambda_lower_bound, RhCase, RuCase};
use crate::freeflow::{BcMode, FreeFlow, HydroState};
use crate::mesh::{BoundaryTag, DarcyBoundary};
use crate::subsurface::DarcyState;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Measured defect, compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> SelfCheck {
    SelfCheck {
        name,
        passed: value <= tolerance,
        value,
        tolerance,
    }
}

fn closed_box(p: usize, walls: BoundaryTag, gravity: f64, bump: f64) -> RunConfig {
    let mut c = RunConfig::manufactured(1, p);
    c.initial.kind = InitialKind::Rest;
    c.initial.bump_amplitude = bump;
    c.boundary.mode = BcMode::Physical;
    c.boundary.walls = [walls; 2];
    c.boundary.darcy_lateral = DarcyBoundary::Neumann;
    c.boundary.darcy_base = DarcyBoundary::Neumann;
    c.domain.bed_offset = -5.0;
    c.domain.darcy_bottom = -10.0;
    c.physics.gravity = gravity;
    c.physics.friction = 0.01;
    c.time.dt = Some(0.01);
    c
}

fn penalty_bound(rng: &mut ChaCha8Rng) -> SelfCheck {
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        let (a, b) = (rng.gen_range(-1e3..=1e3), rng.gen_range(-1e3..=1e3));
        worst = worst.max(lambda_lower_bound(a) - lambda_inflow(a).next_up());
        let m = 0.5 * (f64::abs(a) + f64::abs(b));
        worst = worst.max(lambda_lower_bound(m) - lambda_interior(a, b).next_up());
    }
    check("penalty lower bound", worst.max(0.0), 0.0)
}

fn identities(rng: &mut ChaCha8Rng) -> SelfCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut r = || rng.gen_range(-10.0..10.0);
        let (a1, a2, b1, b2, th) = (r(), r(), r(), r(), r());
        let n = [f64::cos(th), f64::sin(th)];
        let (_, jab) = jump_avg_scalar(a1 * b1, a2 * b2, n);
        let (aa, ja) = jump_avg_scalar(a1, a2, n);
        let (ab, jb) = jump_avg_scalar(b1, b2, n);
        worst = worst.max((jab[0] - aa * jb[0] - ja[0] * ab).abs());
        let (_, jv) = jump_avg_vector([a1, b1], [a2, b2], n);
        worst = worst.max((jv - ja[0] - jb[1]).abs());
        let lam = lambda_interior(a1, a2);
        let f = flux_r_u(RuCase::Lateral { u: [a1, a2], xi: [b1, b2], lambda: lam }, n);
        let g = flux_r_u(RuCase::Lateral { u: [a2, a1], xi: [b2, b1], lambda: lam }, [-n[0], -n[1]]);
        worst = worst.max((f + g).abs() / f.abs().max(1.0));
        let f = flux_r_h(RhCase::Lateral { own: a1, other: a2 }, n[0]);
        worst = worst.max((f + flux_r_h(RhCase::Lateral { own: a2, other: a1 }, -n[0])).abs());
    }
    check("jump and flux identities", worst, 1e-13)
}

fn plug_back(rng: &mut ChaCha8Rng) -> Result<SelfCheck> {
    let c = closed_box(2, BoundaryTag::Inflow, 9.81, 0.1);
    let sim = build(&c)?;
    let mut ff: FreeFlow = sim.free;
    let mut st = HydroState::zeros(sim.mesh.columns(), sim.mesh.layers(), c.orders());
    st.u.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let flux: Vec<f64> = (0..sim.mesh.columns() * ff.points_per_direction()).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
    ff.solve_auxiliary_q(&mut st, &sim.mesh, 0.0)?;
    ff.solve_vertical_velocity(&mut st, &sim.mesh, &flux, 0.0)?;
    let r = ff.q_residual(&st, &sim.mesh, 0.0)?.max(ff.w_residual(&st, &sim.mesh, &flux, 0.0)?);
    Ok(check("local solve residuals", r, 1e-11))
}

fn rest() -> Result<SelfCheck> {
    let mut sim = build(&closed_box(1, BoundaryTag::Inflow, 9.81, 0.0))?;
    for _ in 0..100 {
        sim.step()?;
    }
    let m = sim.hydro.u.max_abs().max(sim.hydro.xi.max_abs()).max(sim.subsurface.h.max_abs());
    Ok(check("lake at rest", m, 1e-12))
}

fn conservation() -> Result<SelfCheck> {
    let c = closed_box(1, BoundaryTag::Outflow, 9.81, 0.1);
    let mut sim = build(&c)?;
    sim.subsurface.h = DarcyState::project(&sim.mesh, c.darcy_orders(), |x, _| 0.05 * (x / 20.0).cos())?.h;
    let mut prev = sim.volume();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        sim.step()?;
        let v = sim.volume();
        worst = worst.max((v - prev).abs());
        prev = v;
    }
    Ok(check("volume conservation", worst, 1e-12))
}

fn energy() -> Result<SelfCheck> {
    let mut sim = build(&closed_box(1, BoundaryTag::Inflow, 1.0, 0.1))?;
    let mut prev = sim.energy()?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        sim.step()?;
        let e = sim.energy()?;
        worst = worst.max(e.total() - prev.total());
        for (_, v) in e.dissipation() {
            worst = worst.max(-v);
        }
        prev = e;
    }
    Ok(check("energy decay", worst.max(0.0), 1e-14))
}

/// Runs every check; `seed` drives the randomized inputs.
pub fn run_all(seed: u64) -> Result<Vec<SelfCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        penalty_bound(&mut rng),
        identities(&mut rng),
        plug_back(&mut rng)?,
        rest()?,
        conservation()?,
        energy()?,
    ])
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all(1).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
