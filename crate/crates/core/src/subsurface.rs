//! Darcy sub-solver: hydraulic head `H~` and seepage velocity
//! `U~ = -D~ grad H~` on the fixed porous block. The seepage velocity is
//! solved element by element from the head; the head is advanced explicitly
//! with a symmetric interior penalty on its jumps.

use crate::dg::mass::{s_moment, ColumnMass};
use crate::dg::{project_l2, Basis2D, DGField, Host, LocalFace, QuadRule, QuadRule2D, Tab2D};
use crate::error::{Error, Result};
use crate::freeflow::{check_spd, invert2};
use crate::mesh::{DarcyFaceClass, LayeredSliceMesh};
use crate::mms::DarcySample;
use crate::par::{self, Execution};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarcyCoefficients {
    /// Constant hydraulic conductivity tensor.
    pub conductivity: [[f64; 2]; 2],
    /// Jump penalty; scaled by the inverse face length.
    pub eta: f64,
}

impl DarcyCoefficients {
    pub fn isotropic(k: f64, eta: f64) -> Self {
        Self {
            conductivity: [[k, 0.0], [0.0, k]],
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_spd(self.conductivity, "conductivity")?;
        if !(self.eta > 0.0) {
            return Err(Error::NonPositive {
                what: "penalty eta",
                value: self.eta,
            });
        }
        Ok(())
    }
}

/// Orders of the head and of the seepage velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DarcyOrders {
    pub head: usize,
    pub flux: usize,
}

impl DarcyOrders {
    pub fn from_p(p: usize) -> Self {
        Self { head: p, flux: p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcyState {
    pub h: DGField,
    /// Two components: x and z.
    pub flux: DGField,
}

impl DarcyState {
    pub fn zeros(elements: usize, orders: DarcyOrders) -> Self {
        Self {
            h: DGField::zeros("h", Host::Darcy, orders.head, elements, 1),
            flux: DGField::zeros("darcy_u", Host::Darcy, orders.flux, elements, 2),
        }
    }

    pub fn project(mesh: &LayeredSliceMesh, orders: DarcyOrders, h0: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut s = Self::zeros(mesh.darcy.elements.len(), orders);
        s.h = project_l2("h", Host::Darcy, h0, &mesh.darcy.elements, orders.head)?;
        Ok(s)
    }
}

/// Quadratic terms of the Darcy energy budget.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DarcyEnergy {
    pub head: f64,
    /// `|| sqrt(D~^-1) U~ ||^2`
    pub flux: f64,
    /// `sum eta/|e| ||[H~]||^2` over interior and Dirichlet faces.
    pub penalty: f64,
}

#[derive(Debug, Clone)]
struct Tables {
    nq: usize,
    line: QuadRule,
    vol: QuadRule2D,
    tab_h: Tab2D,
    tab_u: Tab2D,
    face_h: [Tab2D; 4],
    face_u: [Tab2D; 4],
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    h_tr: Vec<f64>,
    u_tr: Vec<f64>,
    face_h: Vec<f64>,
    face_flux: Vec<f64>,
}

pub struct Darcy {
    pub orders: DarcyOrders,
    pub coeffs: DarcyCoefficients,
    pub problem: Problem,
    pub exec: Execution,
    tables: Tables,
    mass_h: Vec<ColumnMass>,
    mass_u: Vec<ColumnMass>,
    ws: Workspace,
    columns: usize,
    layers: usize,
}

impl Darcy {
    /// `quad_degree` must match the free-flow rule so interface points
    /// coincide.
    pub fn new(
        mesh: &LayeredSliceMesh,
        orders: DarcyOrders,
        coeffs: DarcyCoefficients,
        problem: Problem,
        quad_degree: usize,
    ) -> Result<Self> {
        coeffs.validate()?;
        let line = QuadRule::for_degree(quad_degree);
        let vol = QuadRule2D::tensor(line.clone());
        let bh = Basis2D::new(orders.head);
        let bu = Basis2D::new(orders.flux);
        let tables = Tables {
            nq: line.len(),
            tab_h: bh.tabulate_volume(&vol),
            tab_u: bu.tabulate_volume(&vol),
            face_h: bh.tabulate_faces(&line),
            face_u: bu.tabulate_faces(&line),
            line,
            vol,
        };
        let (sh, su) = (s_moment(orders.head), s_moment(orders.flux));
        let mass_h = mesh
            .darcy
            .elements
            .iter()
            .map(|k| ColumnMass::new(k, &sh, orders.head + 1))
            .collect::<Result<Vec<_>>>()?;
        let mass_u = mesh
            .darcy
            .elements
            .iter()
            .map(|k| ColumnMass::new(k, &su, orders.flux + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            orders,
            coeffs,
            problem,
            exec: Execution::default(),
            tables,
            mass_h,
            mass_u,
            ws: Workspace::default(),
            columns: mesh.columns(),
            layers: mesh.darcy.layers,
        })
    }

    pub fn points_per_direction(&self) -> usize {
        self.tables.nq
    }

    fn sample(&self, t: f64, p: [f64; 2]) -> DarcySample {
        self.problem.darcy(t, p[0], p[1])
    }

    fn check_interface(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.columns * self.tables.nq {
            return Err(Error::Missing("interface value at every Darcy top-face point"));
        }
        Ok(())
    }

    fn head_traces(&mut self, state: &DarcyState, mesh: &LayeredSliceMesh) {
        let tb = &self.tables;
        let nq = tb.nq;
        let ne = mesh.darcy.elements.len();
        self.ws.h_tr.resize(ne * 4 * nq, 0.0);
        par::for_each_chunk(self.exec, &mut self.ws.h_tr, 4 * nq, |e, tr| {
            let c = state.h.comp(e, 0);
            for lf in LocalFace::ALL {
                tb.face_h[lf.index()].eval_all(c, &mut tr[lf.index() * nq..(lf.index() + 1) * nq]);
            }
        });
    }

    /// Face head `H^` seen by the seepage-velocity equation.
    fn head_hat(&mut self, mesh: &LayeredSliceMesh, top_head: &[f64], t: f64) {
        let nq = self.tables.nq;
        let mut out = std::mem::take(&mut self.ws.face_h);
        out.resize(mesh.darcy.faces.len() * nq, 0.0);
        let this = &*self;
        par::for_each_chunk(self.exec, &mut out, nq, |f, out| {
            let face = &mesh.darcy.faces[f];
            let own = &this.ws.h_tr[(face.owner * 4 + face.owner_face.index()) * nq..][..nq];
            let k = &mesh.darcy.elements[face.owner];
            for q in 0..nq {
                out[q] = match face.class {
                    DarcyFaceClass::Interior => {
                        let (ne, nl) = face.neighbor.expect("interior face");
                        0.5 * (own[q] + this.ws.h_tr[(ne * 4 + nl.index()) * nq + q])
                    }
                    DarcyFaceClass::Neumann => own[q],
                    DarcyFaceClass::Dirichlet => {
                        this.sample(t, k.map_face(face.owner_face, this.tables.line.points[q])).h
                    }
                    DarcyFaceClass::Top => top_head[(face.owner / this.layers) * nq + q],
                };
            }
        });
        self.ws.face_h = out;
    }

    fn flux_rhs(&self, mesh: &LayeredSliceMesh, e: usize, state: &DarcyState, out: &mut [f64]) {
        let tb = &self.tables;
        let (nq, m) = (tb.nq, tb.tab_u.modes);
        let k = &mesh.darcy.elements[e];
        out[..2 * m].iter_mut().for_each(|v| *v = 0.0);
        let hc = state.h.comp(e, 0);
        for (q, p) in tb.vol.points.iter().enumerate() {
            let f = k.factors(p[0], p[1]);
            let wh = tb.vol.weights[q] * tb.tab_h.eval(q, hc);
            let (ds, dt) = (tb.tab_u.ds_row(q), tb.tab_u.dt_row(q));
            for i in 0..m {
                out[i] += wh * (f.c * ds[i] - f.b * dt[i]);
                out[m + i] += wh * f.a * dt[i];
            }
        }
        for lf in LocalFace::ALL {
            let fid = mesh.darcy.element_faces[e][lf.index()];
            let face = &mesh.darcy.faces[fid];
            let fp = mesh.darcy.elements[face.owner].face_point(face.owner_face, 0.0);
            let nu = [fp.normal[0] * fp.ds, fp.normal[1] * fp.ds];
            let sign = if face.owner == e { 1.0 } else { -1.0 };
            let tab = &tb.face_u[lf.index()];
            for q in 0..nq {
                let h = sign * tb.line.weights[q] * self.ws.face_h[fid * nq + q];
                for (i, phi) in tab.row(q).iter().enumerate() {
                    out[i] -= h * nu[0] * phi;
                    out[m + i] -= h * nu[1] * phi;
                }
            }
        }
    }

    /// Solves the element-local equation for the seepage velocity.
    /// `top_head` is the head imposed on the interface at every top-face
    /// point (the free-flow dynamic head).
    pub fn solve_flux(
        &mut self,
        state: &mut DarcyState,
        mesh: &LayeredSliceMesh,
        top_head: &[f64],
        t: f64,
    ) -> Result<()> {
        self.check_interface(top_head)?;
        self.head_traces(state, mesh);
        self.head_hat(mesh, top_head, t);
        let m = self.tables.tab_u.modes;
        let d = self.coeffs.conductivity;
        let mut flux = std::mem::take(&mut state.flux.coeffs);
        let st = &*state;
        par::for_each_chunk(self.exec, &mut flux, 2 * m, |e, out| {
            self.flux_rhs(mesh, e, st, out);
            let (px, pz) = out.split_at_mut(m);
            self.mass_u[e].solve(px);
            self.mass_u[e].solve(pz);
            for i in 0..m {
                let (a, b) = (px[i], pz[i]);
                px[i] = d[0][0] * a + d[0][1] * b;
                pz[i] = d[1][0] * a + d[1][1] * b;
            }
        });
        state.flux.coeffs = flux;
        Ok(())
    }

    /// Largest residual of the seepage-velocity equation relative to the
    /// largest right-hand side entry.
    pub fn flux_residual(
        &mut self,
        state: &DarcyState,
        mesh: &LayeredSliceMesh,
        top_head: &[f64],
        t: f64,
    ) -> Result<f64> {
        self.check_interface(top_head)?;
        self.head_traces(state, mesh);
        self.head_hat(mesh, top_head, t);
        let m = self.tables.tab_u.modes;
        let dinv = invert2(self.coeffs.conductivity);
        let (mut rhs, mut p, mut lhs) = (vec![0.0; 2 * m], vec![0.0; 2 * m], vec![0.0; m]);
        let mut worst: f64 = 0.0;
        for e in 0..mesh.darcy.elements.len() {
            self.flux_rhs(mesh, e, state, &mut rhs);
            let (ux, uz) = (state.flux.comp(e, 0), state.flux.comp(e, 1));
            for i in 0..m {
                p[i] = dinv[0][0] * ux[i] + dinv[0][1] * uz[i];
                p[m + i] = dinv[1][0] * ux[i] + dinv[1][1] * uz[i];
            }
            let scale = rhs.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
            for comp in 0..2 {
                self.mass_u[e].apply(&p[comp * m..(comp + 1) * m], &mut lhs);
                for i in 0..m {
                    worst = worst.max((lhs[i] - rhs[comp * m + i]).abs() / scale);
                }
            }
        }
        Ok(worst)
    }

    /// `U~ . n ds/dr` at the free-flow bottom-face points (free-flow normal),
    /// from the one-sided trace of the current seepage velocity.
    pub fn interface_flux(&self, state: &DarcyState, mesh: &LayeredSliceMesh) -> Vec<f64> {
        let tb = &self.tables;
        let nq = tb.nq;
        let mut out = vec![0.0; self.columns * nq];
        let top = LocalFace::Top;
        for c in 0..self.columns {
            let e = mesh.darcy.element(c, self.layers - 1);
            let k = &mesh.darcy.elements[e];
            let fp = k.face_point(top, 0.0);
            let (ux, uz) = (state.flux.comp(e, 0), state.flux.comp(e, 1));
            for q in 0..nq {
                let tab = &tb.face_u[top.index()];
                let v = tab.eval(q, ux) * fp.normal[0] + tab.eval(q, uz) * fp.normal[1];
                out[c * nq + q] = -v * fp.ds;
            }
        }
        out
    }

    /// Normal face fluxes `(U~ . n + penalty) ds/dr` in the owner's frame.
    fn face_fluxes(&mut self, state: &DarcyState, mesh: &LayeredSliceMesh, interface_flux: &[f64], t: f64) {
        let tb = &self.tables;
        let nq = tb.nq;
        let ne = mesh.darcy.elements.len();
        self.ws.u_tr.resize(ne * 8 * nq, 0.0);
        par::for_each_chunk(self.exec, &mut self.ws.u_tr, 8 * nq, |e, tr| {
            for comp in 0..2 {
                let c = state.flux.comp(e, comp);
                for lf in LocalFace::ALL {
                    let o = (comp * 4 + lf.index()) * nq;
                    tb.face_u[lf.index()].eval_all(c, &mut tr[o..o + nq]);
                }
            }
        });
        let mut out = std::mem::take(&mut self.ws.face_flux);
        out.resize(mesh.darcy.faces.len() * nq, 0.0);
        let this = &*self;
        let ws = &this.ws;
        let eta = this.coeffs.eta;
        par::for_each_chunk(self.exec, &mut out, nq, |f, out| {
            let face = &mesh.darcy.faces[f];
            let (e, lf) = (face.owner, face.owner_face);
            let k = &mesh.darcy.elements[e];
            let fp = k.face_point(lf, 0.0);
            let n = fp.normal;
            let pen = eta / face.length;
            let ut = |e: usize, lf: LocalFace, q: usize| {
                [ws.u_tr[e * 8 * nq + lf.index() * nq + q], ws.u_tr[e * 8 * nq + (4 + lf.index()) * nq + q]]
            };
            let ht = |e: usize, lf: LocalFace, q: usize| ws.h_tr[(e * 4 + lf.index()) * nq + q];
            for q in 0..nq {
                let uo = ut(e, lf, q);
                out[q] = match face.class {
                    DarcyFaceClass::Interior => {
                        let (ne, nl) = face.neighbor.expect("interior face");
                        let un = ut(ne, nl, q);
                        let avg = 0.5 * ((uo[0] + un[0]) * n[0] + (uo[1] + un[1]) * n[1]);
                        (avg + pen * (ht(e, lf, q) - ht(ne, nl, q))) * fp.ds
                    }
                    DarcyFaceClass::Dirichlet => {
                        let x = k.map_face(lf, tb.line.points[q]);
                        let h_hat = this.sample(t, x).h;
                        (uo[0] * n[0] + uo[1] * n[1] + pen * (ht(e, lf, q) - h_hat)) * fp.ds
                    }
                    DarcyFaceClass::Neumann => {
                        let x = k.map_face(lf, tb.line.points[q]);
                        let g = this.sample(t, x).flux;
                        (g[0] * n[0] + g[1] * n[1]) * fp.ds
                    }
                    DarcyFaceClass::Top => -interface_flux[(e / this.layers) * nq + q],
                };
            }
        });
        self.ws.face_flux = out;
    }

    fn head_rhs(&self, state: &DarcyState, mesh: &LayeredSliceMesh, e: usize, t: f64, out: &mut [f64]) {
        let tb = &self.tables;
        let (nq, m, mu) = (tb.nq, tb.tab_h.modes, tb.tab_u.modes);
        let k = &mesh.darcy.elements[e];
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        let (ux, uz) = (state.flux.comp(e, 0), state.flux.comp(e, 1));
        let manufactured = self.problem.is_manufactured();
        for (q, p) in tb.vol.points.iter().enumerate() {
            let f = k.factors(p[0], p[1]);
            let w = tb.vol.weights[q];
            let (a, b) = (tb.tab_u.eval(q, &ux[..mu]), tb.tab_u.eval(q, &uz[..mu]));
            let src = if manufactured {
                w * f.det() * self.sample(t, k.map(p[0], p[1])).f
            } else {
                0.0
            };
            let (cs, ct) = (w * a * f.c, w * (b * f.a - a * f.b));
            let (ds, dt, v) = (tb.tab_h.ds_row(q), tb.tab_h.dt_row(q), tb.tab_h.row(q));
            for i in 0..m {
                out[i] += cs * ds[i] + ct * dt[i] + src * v[i];
            }
        }
        for lf in LocalFace::ALL {
            let fid = mesh.darcy.element_faces[e][lf.index()];
            let sign = if mesh.darcy.faces[fid].owner == e { 1.0 } else { -1.0 };
            let tab = &tb.face_h[lf.index()];
            for q in 0..nq {
                let g = sign * tb.line.weights[q] * self.ws.face_flux[fid * nq + q];
                for (o, phi) in out.iter_mut().zip(tab.row(q)) {
                    *o -= g * phi;
                }
            }
        }
    }

    /// Time derivative of the head coefficients. `interface_flux` is the
    /// frozen `U~ . n ds/dr` in the free-flow frame.
    pub fn head_rate(
        &mut self,
        state: &DarcyState,
        mesh: &LayeredSliceMesh,
        interface_flux: &[f64],
        t: f64,
    ) -> Result<Vec<f64>> {
        self.check_interface(interface_flux)?;
        self.head_traces(state, mesh);
        self.face_fluxes(state, mesh, interface_flux, t);
        let m = self.tables.tab_h.modes;
        let mut rate = vec![0.0; state.h.coeffs.len()];
        par::for_each_chunk(self.exec, &mut rate, m, |e, out| {
            self.head_rhs(state, mesh, e, t, out);
            self.mass_h[e].solve(out);
        });
        Ok(rate)
    }

    /// One forward-Euler step of the head.
    pub fn step(
        &mut self,
        state: &mut DarcyState,
        mesh: &LayeredSliceMesh,
        interface_flux: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<()> {
        let rate = self.head_rate(state, mesh, interface_flux, t)?;
        for (c, r) in state.h.coeffs.iter_mut().zip(&rate) {
            *c += dt * r;
        }
        Ok(())
    }

    /// `int H~` over the block.
    pub fn volume(&self, state: &DarcyState, mesh: &LayeredSliceMesh) -> f64 {
        let tb = &self.tables;
        let mut v = 0.0;
        for (e, k) in mesh.darcy.elements.iter().enumerate() {
            let hc = state.h.comp(e, 0);
            for (q, p) in tb.vol.points.iter().enumerate() {
                v += tb.vol.weights[q] * k.factors(p[0], p[1]).det() * tb.tab_h.eval(q, hc);
            }
        }
        v
    }

    /// Quadratic energy terms; the seepage velocity must be current.
    pub fn energy(&mut self, state: &DarcyState, mesh: &LayeredSliceMesh, t: f64) -> DarcyEnergy {
        self.head_traces(state, mesh);
        let tb = &self.tables;
        let nq = tb.nq;
        let dinv = invert2(self.coeffs.conductivity);
        let mut en = DarcyEnergy::default();
        for (e, k) in mesh.darcy.elements.iter().enumerate() {
            let hc = state.h.comp(e, 0);
            let (ux, uz) = (state.flux.comp(e, 0), state.flux.comp(e, 1));
            for (q, p) in tb.vol.points.iter().enumerate() {
                let w = tb.vol.weights[q] * k.factors(p[0], p[1]).det();
                let h = tb.tab_h.eval(q, hc);
                let (a, b) = (tb.tab_u.eval(q, ux), tb.tab_u.eval(q, uz));
                en.head += w * h * h;
                en.flux += w * (a * (dinv[0][0] * a + dinv[0][1] * b) + b * (dinv[1][0] * a + dinv[1][1] * b));
            }
        }
        for face in &mesh.darcy.faces {
            let k = &mesh.darcy.elements[face.owner];
            let ds = k.face_point(face.owner_face, 0.0).ds;
            let pen = self.coeffs.eta / face.length;
            let own = &self.ws.h_tr[(face.owner * 4 + face.owner_face.index()) * nq..][..nq];
            for q in 0..nq {
                let jump = match face.class {
                    DarcyFaceClass::Interior => {
                        let (ne, nl) = face.neighbor.expect("interior face");
                        own[q] - self.ws.h_tr[(ne * 4 + nl.index()) * nq + q]
                    }
                    DarcyFaceClass::Dirichlet => {
                        own[q] - self.sample(t, k.map_face(face.owner_face, tb.line.points[q])).h
                    }
                    _ => 0.0,
                };
                en.penalty += tb.line.weights[q] * ds * pen * jump * jump;
            }
        }
        en
    }
}
