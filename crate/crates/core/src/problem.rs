//! Boundary, source, and reference data shared by both sub-solvers.

use crate::mms;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    /// The manufactured solution of [`crate::mms`].
    Manufactured,
    /// Water and head at rest at `level`, no sources.
    Still { level: f64 },
}

impl Problem {
    pub fn is_manufactured(&self) -> bool {
        matches!(self, Problem::Manufactured)
    }

    pub fn xi(&self, t: f64, x: f64) -> f64 {
        match *self {
            Problem::Manufactured => mms::xi(t, x),
            Problem::Still { level } => level,
        }
    }

    /// Reference free-flow state (velocity, vertical velocity, viscous flux).
    pub fn free_flow(&self, t: f64, x: f64, z: f64) -> mms::FreeFlowSample {
        match self {
            Problem::Manufactured => mms::free_flow(t, x, z),
            Problem::Still { .. } => mms::FreeFlowSample {
                u: 0.0,
                w: 0.0,
                q: [0.0; 2],
                f_u: 0.0,
            },
        }
    }

    pub fn pce_source(&self, t: f64, x: f64) -> f64 {
        match self {
            Problem::Manufactured => mms::pce_source(t, x),
            Problem::Still { .. } => 0.0,
        }
    }

    pub fn darcy(&self, t: f64, x: f64, z: f64) -> mms::DarcySample {
        match *self {
            Problem::Manufactured => mms::darcy(t, x, z),
            Problem::Still { level } => mms::DarcySample {
                h: level,
                flux: [0.0; 2],
                f: 0.0,
            },
        }
    }
}
