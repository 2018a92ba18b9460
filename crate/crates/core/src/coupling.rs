//! Interface exchange between the two sub-solvers, the subcycled coupled
//! time step, and the energy budget.
//!
//! One coupled step of length `subcycles * dt`:
//! 1. freeze the seepage flux through the interface;
//! 2. advance the free flow `subcycles` times with that flux;
//! 3. advance the head once with the same flux, so that the volume leaving
//!    one block enters the other exactly;
//! 4. recompute the seepage velocity from the new head and the dynamic head
//!    of the new free-flow state.

use std::io::Write;

use crate::dg::l2_error;
use crate::error::{Error, Result};
use crate::freeflow::{FreeFlow, Friction, HydroState};
use crate::mesh::LayeredSliceMesh;
use crate::mms;
use crate::subsurface::{Darcy, DarcyState};

/// Darcy head seen by the porous bed: `Xi + |u|^2 / (2 g)`.
#[inline]
pub fn interface_dynamic_head(xi: f64, u: f64, g: f64) -> f64 {
    xi + 0.5 * u * u / g
}

/// Tangential stress exerted by the bed on the free flow.
#[inline]
pub fn interface_friction(friction: Friction, u: f64) -> f64 {
    friction.stress(u)
}

/// Free-flow and Darcy traces on the interface at one time, per column and
/// bottom-face point.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    /// `U~ . n ds/dr` with `n` the free-flow outward normal.
    pub normal_flux: Vec<f64>,
    /// Dynamic head of the free flow.
    pub head: Vec<f64>,
    /// Bed stress `C_f u`.
    pub friction: Vec<f64>,
}

/// One row of `energy.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBudget {
    pub step: usize,
    pub time: f64,
    /// `g ||Xi||^2`
    pub xi: f64,
    /// `||U||^2`
    pub u: f64,
    /// `g ||H~||^2`
    pub head: f64,
    pub viscous: f64,
    pub jump_penalty: f64,
    pub xi_jump_penalty: f64,
    pub friction: f64,
    pub seepage: f64,
    pub darcy_penalty: f64,
    pub interface: f64,
    /// `int Xi + int H~`
    pub volume: f64,
}

impl EnergyBudget {
    pub const HEADER: &'static str = "step,time,xi,u,head,total,viscous,jump_penalty,xi_jump_penalty,friction,seepage,darcy_penalty,interface,volume";

    pub fn total(&self) -> f64 {
        self.xi + self.u + self.head
    }

    /// Dissipation terms; all are non-negative in exact arithmetic.
    pub fn dissipation(&self) -> [(&'static str, f64); 6] {
        [
            ("viscous", self.viscous),
            ("jump_penalty", self.jump_penalty),
            ("xi_jump_penalty", self.xi_jump_penalty),
            ("friction", self.friction),
            ("seepage", self.seepage),
            ("darcy_penalty", self.darcy_penalty),
        ]
    }

    pub fn write_row(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "{},{:.6},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.step,
            self.time,
            self.xi,
            self.u,
            self.head,
            self.total(),
            self.viscous,
            self.jump_penalty,
            self.xi_jump_penalty,
            self.friction,
            self.seepage,
            self.darcy_penalty,
            self.interface,
            self.volume
        )?;
        Ok(())
    }
}

/// `L2` errors of every unknown against the manufactured solution. The
/// seepage velocity is measured in gradient form, `K~^-1 U~` against
/// `-grad h~`, so its size does not scale with the conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldErrors {
    pub xi: f64,
    pub u: f64,
    pub w: f64,
    pub h: f64,
    pub darcy_u: f64,
    pub darcy_w: f64,
}

impl FieldErrors {
    pub const NAMES: [&'static str; 6] = ["xi", "u", "w", "h", "darcy_u", "darcy_w"];

    pub fn values(&self) -> [f64; 6] {
        [self.xi, self.u, self.w, self.h, self.darcy_u, self.darcy_w]
    }
}

/// Both sub-solvers, their states, and the shared mesh.
pub struct Coupled {
    pub mesh: LayeredSliceMesh,
    pub free: FreeFlow,
    pub darcy: Darcy,
    pub hydro: HydroState,
    pub subsurface: DarcyState,
    pub time: f64,
    /// Free-flow step.
    pub dt: f64,
    /// Free-flow steps per Darcy step.
    pub subcycles: usize,
    /// Largest coefficient magnitude tolerated before a step fails.
    pub limit: f64,
    pub steps: usize,
}

impl Coupled {
    /// Sets up the coupled run and computes the initial seepage velocity.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: LayeredSliceMesh,
        free: FreeFlow,
        darcy: Darcy,
        hydro: HydroState,
        subsurface: DarcyState,
        time: f64,
        dt: f64,
        subcycles: usize,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonPositive { what: "time step", value: dt });
        }
        if subcycles == 0 {
            return Err(Error::NonPositive { what: "subcycle count", value: 0.0 });
        }
        let mut c = Self {
            mesh,
            free,
            darcy,
            hydro,
            subsurface,
            time,
            dt,
            subcycles,
            limit: 1e12,
            steps: 0,
        };
        c.refresh_seepage()?;
        Ok(c)
    }

    fn refresh_seepage(&mut self) -> Result<()> {
        let head = self.free.interface_head(&self.hydro);
        self.darcy.solve_flux(&mut self.subsurface, &self.mesh, &head, self.time)
    }

    /// Free-flow and Darcy data on the interface.
    pub fn interface(&self) -> InterfaceTrace {
        InterfaceTrace {
            normal_flux: self.darcy.interface_flux(&self.subsurface, &self.mesh),
            head: self.free.interface_head(&self.hydro),
            friction: self.free.interface_friction(&self.hydro),
        }
    }

    /// Advances both blocks by `subcycles * dt`.
    pub fn step(&mut self) -> Result<()> {
        let flux = self.darcy.interface_flux(&self.subsurface, &self.mesh);
        let t0 = self.time;
        for s in 0..self.subcycles {
            let t = t0 + s as f64 * self.dt;
            self.free.step(&mut self.hydro, &mut self.mesh, &flux, t, self.dt)?;
        }
        let big = self.dt * self.subcycles as f64;
        self.darcy.step(&mut self.subsurface, &self.mesh, &flux, t0, big)?;
        self.steps += 1;
        self.time = t0 + big;
        self.refresh_seepage()?;
        let worst = self.hydro.max_abs().max(self.subsurface.h.max_abs());
        if !(worst <= self.limit) {
            return Err(Error::Unstable {
                step: self.steps,
                value: worst,
                limit: self.limit,
            });
        }
        Ok(())
    }

    /// `int Xi + int H~`.
    pub fn volume(&self) -> f64 {
        let xi: f64 = (0..self.mesh.columns())
            .map(|c| self.hydro.xi.comp(c, 0)[0] * std::f64::consts::SQRT_2 * self.mesh.surface.interval(c).half_width())
            .sum();
        xi + self.darcy.volume(&self.subsurface, &self.mesh)
    }

    /// Energy terms of the current state. Recomputes `Q` and `W` (which do
    /// not affect the prognostic state).
    pub fn energy(&mut self) -> Result<EnergyBudget> {
        let flux = self.darcy.interface_flux(&self.subsurface, &self.mesh);
        self.free.solve_auxiliary_q(&mut self.hydro, &self.mesh, self.time)?;
        let fe = self.free.energy(&self.hydro, &self.mesh, &flux, self.time);
        let de = self.darcy.energy(&self.subsurface, &self.mesh, self.time);
        let g = self.free.coeffs.gravity;
        Ok(EnergyBudget {
            step: self.steps,
            time: self.time,
            xi: g * fe.xi,
            u: fe.u,
            head: g * de.head,
            viscous: fe.viscous,
            jump_penalty: fe.jump_penalty,
            xi_jump_penalty: fe.xi_jump_penalty,
            friction: fe.friction,
            seepage: g * de.flux,
            darcy_penalty: g * de.penalty,
            interface: fe.interface,
            volume: self.volume(),
        })
    }

    /// `L2` errors against the manufactured solution at the current time.
    /// `W` is recomputed from the current state first. The conductivity
    /// must be diagonal.
    pub fn errors(&mut self) -> Result<FieldErrors> {
        let t = self.time;
        let flux = self.darcy.interface_flux(&self.subsurface, &self.mesh);
        self.free.solve_vertical_velocity(&mut self.hydro, &self.mesh, &flux, t)?;
        let free = &self.mesh.free.elements;
        let darcy = &self.mesh.darcy.elements;
        let k = self.darcy.coeffs.conductivity;
        Ok(FieldErrors {
            xi: l2_error(&self.hydro.xi, 0, |x, _| mms::xi(t, x), &self.mesh.surface.intervals()),
            u: l2_error(&self.hydro.u, 0, |x, z| mms::free_flow(t, x, z).u, free),
            w: l2_error(&self.hydro.w, 0, |x, z| mms::free_flow(t, x, z).w, free),
            h: l2_error(&self.subsurface.h, 0, |x, z| mms::darcy(t, x, z).h, darcy),
            darcy_u: l2_error(&self.subsurface.flux, 0, |x, z| mms::darcy(t, x, z).flux[0], darcy) / k[0][0],
            darcy_w: l2_error(&self.subsurface.flux, 1, |x, z| mms::darcy(t, x, z).flux[1], darcy) / k[1][1],
        })
    }
}
