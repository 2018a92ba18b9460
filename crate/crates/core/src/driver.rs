//! Simulation driver: builds a coupled run from a [`RunConfig`], steps it to
//! the end time, and runs convergence studies against the manufactured
//! solution.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::coupling::{Coupled, EnergyBudget, FieldErrors};
use crate::dg::{eoc, QuadRule};
use crate::error::{Error, Result};
use crate::freeflow::{FreeFlow, HydroState};
use crate::mesh::build_layered_mesh;
use crate::subsurface::{Darcy, DarcyState};

/// Builds the mesh, both solvers, and the projected initial state.
pub fn build(config: &RunConfig) -> Result<Coupled> {
    config.validate()?;
    let problem = config.problem();
    let init = config.initial.clone();
    let mesh = build_layered_mesh(&config.mesh_spec(), |x| config.bed(x), |x| init.xi(x))?;
    let (orders, dorders, qd) = (config.orders(), config.darcy_orders(), config.quad_degree());
    let mut free = FreeFlow::new(&mesh, orders, config.hydro_coefficients()?, config.boundary.mode, problem, qd)?;
    free.pce_penalty = config.discretization.elevation_penalty;
    let hydro = HydroState::project(&mesh, orders, |x| init.xi(x), |x, z| problem.free_flow(0.0, x, z).u)?;
    let darcy = Darcy::new(&mesh, dorders, config.darcy_coefficients()?, problem, qd)?;
    let subsurface = DarcyState::project(&mesh, dorders, |x, z| problem.darcy(0.0, x, z).h)?;
    Coupled::new(mesh, free, darcy, hydro, subsurface, 0.0, config.dt(), config.subcycles()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub time: f64,
    pub energy: EnergyBudget,
    /// Present for manufactured runs.
    pub errors: Option<FieldErrors>,
    pub seconds: f64,
}

/// Steps `sim` `steps` times, calling `log` on the initial state and after
/// every step.
pub fn advance(sim: &mut Coupled, steps: usize, mut log: impl FnMut(&mut Coupled) -> Result<()>) -> Result<()> {
    log(sim)?;
    for _ in 0..steps {
        sim.step()?;
        log(sim)?;
    }
    Ok(())
}

/// Runs `config` to its end time. With `out` set, writes `energy.csv` and,
/// if enabled, `mesh.csv` and the final fields.
pub fn run(config: &RunConfig, out: Option<&Path>) -> Result<RunSummary> {
    let start = Instant::now();
    let mut sim = build(config)?;
    let steps = config.coupled_steps()?;
    let mut energy_csv = match out {
        Some(dir) if config.output.energy => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("energy.csv"))?);
            writeln!(w, "{}", EnergyBudget::HEADER)?;
            Some(w)
        }
        _ => None,
    };
    let mut last = EnergyBudget::default();
    advance(&mut sim, steps, |s| {
        last = s.energy()?;
        for (name, v) in last.dissipation() {
            if v < 0.0 {
                return Err(Error::Config(format!("negative dissipation {name} = {v:e} at step {}", s.steps)));
            }
        }
        if let Some(w) = energy_csv.as_mut() {
            last.write_row(&mut *w)?;
        }
        Ok(())
    })?;
    if let Some(mut w) = energy_csv {
        w.flush()?;
    }
    if let Some(dir) = out.filter(|_| config.output.fields) {
        std::fs::create_dir_all(dir)?;
        sim.mesh.write_csv(BufWriter::new(File::create(dir.join("mesh.csv"))?))?;
        write_fields(&sim, dir)?;
    }
    let errors = if config.problem().is_manufactured() {
        Some(sim.errors()?)
    } else {
        None
    };
    Ok(RunSummary {
        steps: sim.steps,
        time: sim.time,
        energy: last,
        errors,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Point values of the final state at Gauss points of every element:
/// `surface.csv`, `free.csv`, and `darcy.csv`.
pub fn write_fields(sim: &Coupled, dir: &Path) -> Result<()> {
    let pts = QuadRule::gauss_legendre(3).points;
    let mut w = BufWriter::new(File::create(dir.join("surface.csv"))?);
    writeln!(w, "column,x,xi")?;
    for c in 0..sim.mesh.columns() {
        let iv = sim.mesh.surface.interval(c);
        for &s in &pts {
            writeln!(w, "{c},{:.12e},{:.12e}", iv.map(s), sim.hydro.xi.eval(c, 0, [s, 0.0])?)?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("free.csv"))?);
    writeln!(w, "element,x,z,u,w")?;
    for (e, k) in sim.mesh.free.elements.iter().enumerate() {
        for &t in &pts {
            for &s in &pts {
                let x = k.map(s, t);
                let (u, v) = (sim.hydro.u.eval(e, 0, [s, t])?, sim.hydro.w.eval(e, 0, [s, t])?);
                writeln!(w, "{e},{:.12e},{:.12e},{u:.12e},{v:.12e}", x[0], x[1])?;
            }
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("darcy.csv"))?);
    writeln!(w, "element,x,z,h,darcy_u,darcy_w")?;
    let d = &sim.subsurface;
    for (e, k) in sim.mesh.darcy.elements.iter().enumerate() {
        for &t in &pts {
            for &s in &pts {
                let x = k.map(s, t);
                let (h, a, b) = (d.h.eval(e, 0, [s, t])?, d.flux.eval(e, 0, [s, t])?, d.flux.eval(e, 1, [s, t])?);
                writeln!(w, "{e},{:.12e},{:.12e},{h:.12e},{a:.12e},{b:.12e}", x[0], x[1])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one `(p, j)` run of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub p: usize,
    pub level: u32,
    pub outcome: std::result::Result<FieldErrors, String>,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub p: usize,
    pub field: &'static str,
    pub level: u32,
    pub error: f64,
    /// Against the next coarser level; absent on level 0 or after a failed
    /// level.
    pub eoc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub runs: Vec<LevelResult>,
    pub rows: Vec<ReportRow>,
}

impl ConvergenceReport {
    pub fn row(&self, p: usize, field: &str, level: u32) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.p == p && r.field == field && r.level == level)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "p,field,j,err,eoc")?;
        for r in &self.rows {
            let eoc = r.eoc.map_or(String::new(), |v| format!("{v:.4}"));
            writeln!(w, "{},{},{},{:.6e},{eoc}", r.p, r.field, r.level, r.error)?;
        }
        Ok(())
    }
}

/// Table laid out like the usual convergence table: one block per order,
/// one line per level, error and EOC per field.
impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ps: Vec<usize> = self.runs.iter().map(|r| r.p).collect();
        ps.dedup();
        for p in ps {
            write!(f, "p = {p}\n{:>3}", "j")?;
            for name in FieldErrors::NAMES {
                write!(f, " {name:>10} {:>5}", "EOC")?;
            }
            writeln!(f, " {:>9}", "seconds")?;
            for run in self.runs.iter().filter(|r| r.p == p) {
                write!(f, "{:>3}", run.level)?;
                match &run.outcome {
                    Ok(_) => {
                        for name in FieldErrors::NAMES {
                            let r = self.row(p, name, run.level).expect("row of a successful run");
                            let eoc = r.eoc.map_or("-".to_string(), |v| format!("{v:.2}"));
                            write!(f, " {:>10.3e} {eoc:>5}", r.error)?;
                        }
                        writeln!(f, " {:>9.1}", run.seconds)?;
                    }
                    Err(e) => writeln!(f, " failed: {e}")?,
                }
            }
        }
        Ok(())
    }
}

/// Runs the manufactured solution on levels `0..levels` for every order,
/// with mesh, steps, and orders derived from `template` by level and order.
/// A failed run is recorded and skipped. `progress` sees each finished run.
pub fn converge(
    template: &RunConfig,
    levels: u32,
    orders: &[usize],
    mut progress: impl FnMut(&LevelResult),
) -> Result<ConvergenceReport> {
    if levels < 2 {
        return Err(Error::Config(format!("a convergence study needs at least 2 levels, got {levels}")));
    }
    if !template.problem().is_manufactured() {
        return Err(Error::Config("a convergence study needs the manufactured problem".into()));
    }
    let mut report = ConvergenceReport::default();
    for &p in orders {
        let mut prev: Option<(f64, FieldErrors)> = None;
        for j in 0..levels {
            let mut cfg = template.clone();
            cfg.mesh.level = j;
            cfg.discretization.p = p;
            cfg.time.dt = None;
            cfg.time.dt_darcy = None;
            let start = Instant::now();
            let outcome = run(&cfg, None).and_then(|s| s.errors.ok_or(Error::Missing("errors of a manufactured run")));
            let dx = (cfg.domain.x1 - cfg.domain.x0) / cfg.mesh_spec().columns as f64;
            let result = LevelResult {
                p,
                level: j,
                steps: cfg.coupled_steps().unwrap_or(0),
                seconds: start.elapsed().as_secs_f64(),
                outcome: outcome.map_err(|e| e.to_string()),
            };
            progress(&result);
            match &result.outcome {
                Ok(errs) => {
                    for (k, name) in FieldErrors::NAMES.into_iter().enumerate() {
                        let e = errs.values()[k];
                        let rate = prev.and_then(|(dxc, pe)| eoc(pe.values()[k], e, dxc, dx).ok());
                        report.rows.push(ReportRow {
                            p,
                            field: name,
                            level: j,
                            error: e,
                            eoc: rate,
                        });
                    }
                    prev = Some((dx, *errs));
                }
                Err(_) => prev = None,
            }
            report.runs.push(result);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialKind;
    use crate::freeflow::BcMode;
    use crate::mesh::{BoundaryTag, DarcyBoundary};

    fn rest() -> RunConfig {
        let mut c = RunConfig::manufactured(1, 1);
        c.initial.kind = InitialKind::Rest;
        c.boundary.mode = BcMode::Physical;
        c.boundary.walls = [BoundaryTag::Outflow; 2];
        c.boundary.darcy_lateral = DarcyBoundary::Neumann;
        c.boundary.darcy_base = DarcyBoundary::Neumann;
        c.domain.bed_offset = -5.0;
        c.domain.darcy_bottom = -10.0;
        c.time.dt = Some(0.01);
        c.time.end = 1.0;
        c
    }

    #[test]
    fn zero_end_time_logs_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = rest();
        c.time.end = 0.0;
        let s = run(&c, Some(dir.path())).unwrap();
        assert_eq!(s.steps, 0);
        let text = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        for f in ["mesh.csv", "surface.csv", "free.csv", "darcy.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn rest_run_stays_at_rest() {
        let s = run(&rest(), None).unwrap();
        assert_eq!(s.steps, 10);
        assert!(s.energy.u < 1e-24);
        assert!(s.energy.xi < 1e-24);
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let mut c = rest();
        c.initial.bump_amplitude = 0.1;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(&c, Some(a.path())).unwrap();
        run(&c, Some(b.path())).unwrap();
        for f in ["energy.csv", "free.csv", "darcy.csv"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn converge_reports_every_field() {
        let mut c = RunConfig::manufactured(0, 1);
        c.time.end = 0.2;
        let r = converge(&c, 2, &[1], |_| {}).unwrap();
        assert_eq!(r.rows.len(), 12);
        assert!(r.row(1, "xi", 0).unwrap().eoc.is_none());
        assert!(r.row(1, "xi", 1).unwrap().eoc.is_some());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
        assert!(r.to_string().contains("p = 1"));
    }

    #[test]
    fn manufactured_boundaries_bypass_friction() {
        let mut c = RunConfig::manufactured(1, 1);
        c.time.end = 0.2;
        let a = run(&c, None).unwrap().errors.unwrap();
        c.physics.friction = 0.0;
        assert_eq!(a, run(&c, None).unwrap().errors.unwrap());
    }

    #[test]
    fn converge_needs_two_levels() {
        assert!(converge(&RunConfig::manufactured(0, 1), 1, &[1], |_| {}).is_err());
    }
}
