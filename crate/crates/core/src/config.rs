//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeflow::{BcMode, Friction, HydroCoefficients, Orders};
use crate::mesh::{BoundaryTag, DarcyBoundary, MeshSpec};
use crate::mms;
use crate::problem::Problem;
use crate::subsurface::{DarcyCoefficients, DarcyOrders};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed for the randomized self-test inputs.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub x0: f64,
    pub x1: f64,
    /// Interface height `bed_offset + bed_slope * x`.
    pub bed_offset: f64,
    pub bed_slope: f64,
    pub darcy_bottom: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            x1: 100.0,
            bed_offset: 0.0,
            bed_slope: mms::SLOPE,
            darcy_bottom: -5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Refinement level: `2^(j+1)` columns and `2^j` layers per block.
    pub level: u32,
    pub columns: Option<usize>,
    pub layers: Option<usize>,
    pub darcy_layers: Option<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            level: 1,
            columns: None,
            layers: None,
            darcy_layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderOverrides {
    pub xi: Option<usize>,
    pub u: Option<usize>,
    pub w: Option<usize>,
    pub head: Option<usize>,
    pub flux: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub p: usize,
    pub orders: OrderOverrides,
    /// Exactness degree of the line rule; `4p + 1` when absent.
    pub quad_degree: Option<usize>,
    /// Lax-Friedrichs elevation-jump term in the mass flux.
    pub elevation_penalty: bool,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            p: 1,
            orders: OrderOverrides::default(),
            quad_degree: None,
            elevation_penalty: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Free-flow step; `2^-p 4^-j / 50` when absent.
    pub dt: Option<f64>,
    /// Darcy step; `10 dt` when absent. Must be an integer multiple of `dt`.
    pub dt_darcy: Option<f64>,
    pub end: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: None,
            dt_darcy: None,
            end: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrictionLaw {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gravity: f64,
    pub diffusion: f64,
    pub conductivity: f64,
    pub friction_law: FrictionLaw,
    pub friction: f64,
    pub eta: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            gravity: 1.0,
            diffusion: mms::VISCOSITY,
            conductivity: mms::CONDUCTIVITY,
            friction_law: FrictionLaw::Linear,
            friction: 0.01,
            eta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub mode: BcMode,
    /// Left and right free-flow walls.
    pub walls: [BoundaryTag; 2],
    pub darcy_lateral: DarcyBoundary,
    pub darcy_base: DarcyBoundary,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            mode: BcMode::Dirichlet,
            walls: [BoundaryTag::Inflow; 2],
            darcy_lateral: DarcyBoundary::Dirichlet,
            darcy_base: DarcyBoundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// Projection of the manufactured solution; also selects its sources
    /// and boundary data.
    Manufactured,
    /// Water and head at `level`, with an optional Gaussian bump on the
    /// free surface.
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub level: f64,
    pub bump_amplitude: f64,
    pub bump_center: f64,
    pub bump_width: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Manufactured,
            level: 0.0,
            bump_amplitude: 0.0,
            bump_center: 50.0,
            bump_width: 10.0,
        }
    }
}

impl InitialConfig {
    pub fn problem(&self) -> Problem {
        match self.kind {
            InitialKind::Manufactured => Problem::Manufactured,
            InitialKind::Rest => Problem::Still { level: self.level },
        }
    }

    pub fn xi(&self, x: f64) -> f64 {
        match self.kind {
            InitialKind::Manufactured => mms::xi(0.0, x),
            InitialKind::Rest => {
                let s = (x - self.bump_center) / self.bump_width;
                self.level + self.bump_amplitude * (-s * s).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `energy.csv`, one row per coupled step.
    pub energy: bool,
    /// Write the final fields and the mesh.
    pub fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            energy: true,
            fields: true,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::manufactured(1, 1)
    }
}

impl RunConfig {
    /// The manufactured-solution run on level `j` with order `p`.
    pub fn manufactured(j: u32, p: usize) -> Self {
        Self {
            domain: DomainConfig::default(),
            mesh: MeshConfig {
                level: j,
                ..MeshConfig::default()
            },
            discretization: DiscretizationConfig {
                p,
                ..DiscretizationConfig::default()
            },
            time: TimeConfig::default(),
            physics: PhysicsConfig::default(),
            boundary: BoundaryConfig::default(),
            initial: InitialConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Problem {
        self.initial.problem()
    }

    pub fn bed(&self, x: f64) -> f64 {
        self.domain.bed_offset + self.domain.bed_slope * x
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let d = &self.domain;
        let mut s = MeshSpec::level(self.mesh.level, d.x0, d.x1, d.darcy_bottom);
        s.columns = self.mesh.columns.unwrap_or(s.columns);
        s.layers = self.mesh.layers.unwrap_or(s.layers);
        s.darcy_layers = self.mesh.darcy_layers.unwrap_or(s.darcy_layers);
        s.tags = self.boundary.walls;
        s.darcy_lateral = self.boundary.darcy_lateral;
        s.darcy_base = self.boundary.darcy_base;
        s
    }

    pub fn orders(&self) -> Orders {
        let (o, d) = (&self.discretization.orders, Orders::from_p(self.discretization.p));
        Orders {
            xi: o.xi.unwrap_or(d.xi),
            u: o.u.unwrap_or(d.u),
            w: o.w.unwrap_or(d.w),
        }
    }

    pub fn darcy_orders(&self) -> DarcyOrders {
        let (o, d) = (&self.discretization.orders, DarcyOrders::from_p(self.discretization.p));
        DarcyOrders {
            head: o.head.unwrap_or(d.head),
            flux: o.flux.unwrap_or(d.flux),
        }
    }

    pub fn quad_degree(&self) -> usize {
        self.discretization.quad_degree.unwrap_or(4 * self.discretization.p + 1)
    }

    pub fn dt(&self) -> f64 {
        self.time.dt.unwrap_or_else(|| {
            let (p, j) = (self.discretization.p as i32, self.mesh.level as i32);
            2f64.powi(-p) * 4f64.powi(-j) / 50.0
        })
    }

    pub fn dt_darcy(&self) -> f64 {
        self.time.dt_darcy.unwrap_or(10.0 * self.dt())
    }

    /// Free-flow steps per Darcy step.
    pub fn subcycles(&self) -> Result<usize> {
        let r = self.dt_darcy() / self.dt();
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-9 * n {
            return Err(Error::Config(format!("dt_darcy / dt = {r} is not a positive integer")));
        }
        Ok(n as usize)
    }

    /// Number of coupled steps needed to reach the end time.
    pub fn coupled_steps(&self) -> Result<usize> {
        let r = self.time.end / self.dt_darcy();
        let n = r.round();
        if (r - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Config(format!(
                "end time {} is not a multiple of dt_darcy = {}",
                self.time.end,
                self.dt_darcy()
            )));
        }
        Ok(n as usize)
    }

    pub fn hydro_coefficients(&self) -> Result<HydroCoefficients> {
        let ph = &self.physics;
        let friction = match ph.friction_law {
            FrictionLaw::Linear => Friction::new_linear(ph.friction)?,
            FrictionLaw::Quadratic => Friction::new_quadratic(ph.friction)?,
        };
        let c = HydroCoefficients::isotropic(ph.diffusion, ph.gravity, friction);
        c.validate()?;
        Ok(c)
    }

    pub fn darcy_coefficients(&self) -> Result<DarcyCoefficients> {
        let c = DarcyCoefficients::isotropic(self.physics.conductivity, self.physics.eta);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time.end >= 0.0) {
            return Err(Error::Config(format!("end time must be non-negative, got {}", self.time.end)));
        }
        for (what, v) in [("dt", self.dt()), ("dt_darcy", self.dt_darcy())] {
            if !(v > 0.0) {
                return Err(Error::NonPositive { what, value: v });
            }
        }
        if !(self.domain.x1 > self.domain.x0) {
            return Err(Error::Config("domain must have x1 > x0".into()));
        }
        self.subcycles()?;
        self.coupled_steps()?;
        self.hydro_coefficients()?;
        self.darcy_coefficients()?;
        if self.initial.kind == InitialKind::Manufactured {
            let ph = &self.physics;
            let fixed = [
                ("gravity", ph.gravity, 1.0),
                ("diffusion", ph.diffusion, mms::VISCOSITY),
                ("conductivity", ph.conductivity, mms::CONDUCTIVITY),
                ("bed_offset", self.domain.bed_offset, 0.0),
                ("bed_slope", self.domain.bed_slope, mms::SLOPE),
            ];
            for (what, got, want) in fixed {
                if got != want {
                    return Err(Error::Config(format!("the manufactured solution assumes {what} = {want}, got {got}")));
                }
            }
        }
        if self.boundary.mode == BcMode::Dirichlet && self.initial.kind != InitialKind::Manufactured {
            return Err(Error::Config("mms-dirichlet boundaries need the manufactured initial state".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_table_steps() {
        let c = RunConfig::manufactured(2, 1);
        assert_eq!(c.dt(), 1.0 / 50.0 / 2.0 / 16.0);
        assert_eq!(c.subcycles().unwrap(), 10);
        assert_eq!(c.coupled_steps().unwrap(), 1600);
        assert_eq!(c.orders(), Orders { xi: 2, u: 1, w: 2 });
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::manufactured(1, 2);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            r#"
            seed = 7
            [mesh]
            level = 0
            [discretization]
            p = 2
            orders = { w = 3 }
            [time]
            dt = 0.01
            dt_darcy = 0.05
            end = 1.0
            [physics]
            gravity = 9.81
            friction_law = "quadratic"
            friction = 0.002
            [boundary]
            mode = "physical"
            walls = ["outflow", "inflow"]
            [initial]
            kind = "rest"
            bump_amplitude = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.subcycles().unwrap(), 5);
        assert_eq!(c.coupled_steps().unwrap(), 20);
        assert_eq!(c.orders().w, 3);
        assert_eq!(c.mesh_spec().tags, [BoundaryTag::Outflow, BoundaryTag::Inflow]);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[time]\ndt = 0.01\ndt_darcy = 0.015",
            "[time]\nend = -1.0",
            "[physics]\nfriction = -0.1",
            "[physics]\ngravity = 9.81",
            "[domain]\nbed_slope = 0.01",
            "[bogus]\nx = 1",
            "[boundary]\nmode = \"mms-dirichlet\"\n[initial]\nkind = \"rest\"",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
