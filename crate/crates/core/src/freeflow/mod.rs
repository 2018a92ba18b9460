//! Free-flow sub-solver: elevation `Xi` on the surface mesh, horizontal
//! velocity `U`, diagnostic vertical velocity `W`, and the auxiliary viscous
//! flux `Q = -D grad U` on the layered mesh.
//!
//! Every step follows the same pattern: element traces, face fluxes computed
//! once per face, then an element gather in which neighbours see the owner's
//! flux with the opposite sign.

pub mod flux;

use serde::{Deserialize, Serialize};

pub use flux::{
    compute_lambda_u, flux_r_h, flux_r_u, flux_s_q, flux_s_u, lambda_inflow, lambda_interior,
    lambda_lower_bound, Friction, RhCase, RuCase, SqCase, SuCase,
};

use crate::dg::linalg::Lu;
use crate::dg::mass::ColumnMass;
use crate::dg::{
    basis::dot, project_l2, Basis1D, Basis2D, ColumnQuad, DGField, Host, LocalFace, QuadRule, QuadRule2D,
    Tab1D, Tab2D,
};
use crate::error::{Error, Result};
use crate::mesh::{move_mesh, smooth_free_surface, FaceClass, LayeredSliceMesh};
use crate::mms::{ColumnCache, FreeFlowSample};
use crate::par::{self, Execution};
use crate::problem::Problem;

/// Polynomial orders of the free-flow unknowns (`Q` shares the order of `U`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orders {
    pub xi: usize,
    pub u: usize,
    pub w: usize,
}

impl Orders {
    /// `Xi` and `W` at `2p`, `U` and `Q` at `p`.
    pub fn from_p(p: usize) -> Self {
        Self {
            xi: 2 * p,
            u: p,
            w: 2 * p,
        }
    }
}

/// How lateral, top, and bottom boundary traces are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BcMode {
    /// Boundary fluxes of the physical problem (inflow/outflow data,
    /// stress-free surface, bottom friction).
    #[default]
    #[serde(rename = "physical")]
    Physical,
    /// Exterior traces from the reference solution on every boundary.
    #[serde(rename = "mms-dirichlet")]
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroCoefficients {
    /// Constant eddy-viscosity tensor.
    pub diffusion: [[f64; 2]; 2],
    pub gravity: f64,
    pub friction: Friction,
}

impl HydroCoefficients {
    pub fn isotropic(d: f64, gravity: f64, friction: Friction) -> Self {
        Self {
            diffusion: [[d, 0.0], [0.0, d]],
            gravity,
            friction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_spd(self.diffusion, "eddy viscosity")?;
        if !(self.gravity > 0.0) {
            return Err(Error::NonPositive {
                what: "gravity",
                value: self.gravity,
            });
        }
        let (Friction::Linear(c) | Friction::Quadratic(c)) = self.friction;
        if !(c >= 0.0) {
            return Err(Error::Config(format!("friction coefficient must be non-negative, got {c}")));
        }
        Ok(())
    }
}

pub(crate) fn check_spd(d: [[f64; 2]; 2], what: &'static str) -> Result<()> {
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    if d[0][1] != d[1][0] {
        return Err(Error::Config(format!("{what} tensor must be symmetric")));
    }
    if !(d[0][0] > 0.0 && det > 0.0) {
        return Err(Error::NonPositive {
            what,
            value: d[0][0].min(det),
        });
    }
    Ok(())
}

pub(crate) fn invert2(d: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    [[d[1][1] / det, -d[0][1] / det], [-d[1][0] / det, d[0][0] / det]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroState {
    pub xi: DGField,
    pub u: DGField,
    pub w: DGField,
    /// Two components: x and z.
    pub q: DGField,
}

impl HydroState {
    pub fn zeros(columns: usize, layers: usize, orders: Orders) -> Self {
        let e = columns * layers;
        Self {
            xi: DGField::zeros("xi", Host::Surface, orders.xi, columns, 1),
            u: DGField::zeros("u", Host::FreeFlow, orders.u, e, 1),
            w: DGField::zeros("w", Host::FreeFlow, orders.w, e, 1),
            q: DGField::zeros("q", Host::FreeFlow, orders.u, e, 2),
        }
    }

    /// L2 projections of the initial elevation and velocity.
    pub fn project(
        mesh: &LayeredSliceMesh,
        orders: Orders,
        xi0: impl Fn(f64) -> f64,
        u0: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut s = Self::zeros(mesh.columns(), mesh.layers(), orders);
        s.xi = project_l2("xi", Host::Surface, |x, _| xi0(x), &mesh.surface.intervals(), orders.xi)?;
        s.u = project_l2("u", Host::FreeFlow, u0, &mesh.free.elements, orders.u)?;
        Ok(s)
    }

    pub fn max_abs(&self) -> f64 {
        [&self.xi, &self.u, &self.w, &self.q]
            .iter()
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }
}

/// Time derivatives of the prognostic coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
}

/// Quadratic terms of the free-flow energy budget.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeFlowEnergy {
    pub xi: f64,
    pub u: f64,
    /// `|| sqrt(D^-1) Q ||^2`
    pub viscous: f64,
    /// Sum over interior lateral faces of `lambda/2 ||[U]||^2`.
    pub jump_penalty: f64,
    /// `g lambda/2 ||[Xi]||^2` over interior lateral faces, when the mass
    /// flux carries the elevation penalty.
    pub xi_jump_penalty: f64,
    /// `<C_f U, U>` on the interface (physical mode only).
    pub friction: f64,
    /// `<g Xi + |U|^2/2, U~ . n>` on the interface.
    pub interface: f64,
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    u_vol: Vec<f64>,
    w_vol: Vec<f64>,
    q_vol: Vec<f64>,
    u_tr: Vec<f64>,
    q_tr: Vec<f64>,
    w_top: Vec<f64>,
    xi_line: Vec<f64>,
    xi_end: Vec<f64>,
    face_rh: Vec<f64>,
    face_uhat: Vec<f64>,
    face_mom: Vec<f64>,
}

/// Tables shared by all elements, built once per run.
#[derive(Debug, Clone)]
struct Tables {
    nq: usize,
    line: QuadRule,
    vol: QuadRule2D,
    tab_u: Tab2D,
    tab_w: Tab2D,
    face_u: [Tab2D; 4],
    face_w: [Tab2D; 4],
    tab_xi: Tab1D,
    xi_ends: [Vec<f64>; 2],
    /// `int L_i L_j s ds` for the `U` order.
    s_moment: Vec<f64>,
    /// Factor of the 1D vertical operator of the `W` equation.
    w_vertical: Lu,
}

impl Tables {
    fn new(orders: Orders, quad_degree: usize) -> Result<Self> {
        let line = QuadRule::for_degree(quad_degree);
        let vol = QuadRule2D::tensor(line.clone());
        let bu = Basis2D::new(orders.u);
        let bw = Basis2D::new(orders.w);
        let bx = Basis1D::new(orders.xi);

        let fine = QuadRule::for_degree(2 * orders.w + 2);
        let s_moment = crate::dg::mass::s_moment(orders.u);

        // T_ij = -int L_j L_i' dt + L_i(1) L_j(1): the t-part of the W
        // operator; the s-part is the identity for an orthonormal basis.
        let nw = orders.w + 1;
        let bwt = Basis1D::new(orders.w);
        let mut t = vec![0.0; nw * nw];
        for (&r, &wq) in fine.points.iter().zip(&fine.weights) {
            let (v, d) = bwt.eval_with_derivative(r);
            for i in 0..nw {
                for j in 0..nw {
                    t[i * nw + j] -= wq * v[j] * d[i];
                }
            }
        }
        let top = bwt.eval(1.0);
        for i in 0..nw {
            for j in 0..nw {
                t[i * nw + j] += top[i] * top[j];
            }
        }

        Ok(Self {
            nq: line.len(),
            tab_u: bu.tabulate_volume(&vol),
            tab_w: bw.tabulate_volume(&vol),
            face_u: bu.tabulate_faces(&line),
            face_w: bw.tabulate_faces(&line),
            tab_xi: bx.tabulate(&line.points),
            xi_ends: [bx.eval(-1.0), bx.eval(1.0)],
            s_moment,
            w_vertical: Lu::factor(t, nw)?,
            line,
            vol,
        })
    }
}

#[inline]
fn factors_at(k: &ColumnQuad, s: f64, t: f64) -> (f64, f64, f64) {
    let f = k.factors(s, t);
    (f.a, f.b, f.c)
}

/// Scaled normal `n ds/dr` and `ds/dr` of an owner's face.
#[inline]
fn face_scale(k: &ColumnQuad, lf: LocalFace) -> ([f64; 2], f64) {
    let p = k.face_point(lf, 0.0);
    ([p.normal[0] * p.ds, p.normal[1] * p.ds], p.ds)
}

pub struct FreeFlow {
    pub orders: Orders,
    pub coeffs: HydroCoefficients,
    pub bc: BcMode,
    pub problem: Problem,
    pub exec: Execution,
    /// Include the top-face term driven by `d/dt (Xi_s - Xi)`.
    pub mesh_penalty: bool,
    /// Lax-Friedrichs jump penalty on `Xi` in the lateral mass flux.
    pub pce_penalty: bool,
    tables: Tables,
    cache: Option<ColumnCache>,
    prev_gap: Option<(Vec<f64>, f64)>,
    ws: Workspace,
    columns: usize,
    layers: usize,
}

impl FreeFlow {
    pub fn new(
        mesh: &LayeredSliceMesh,
        orders: Orders,
        coeffs: HydroCoefficients,
        bc: BcMode,
        problem: Problem,
        quad_degree: usize,
    ) -> Result<Self> {
        coeffs.validate()?;
        if problem.is_manufactured() && coeffs.gravity != 1.0 {
            return Err(Error::Config(format!(
                "the manufactured solution assumes g = 1, got {}",
                coeffs.gravity
            )));
        }
        let tables = Tables::new(orders, quad_degree)?;
        let cache = problem.is_manufactured().then(|| {
            let mut xs = Vec::new();
            for c in 0..mesh.columns() {
                let iv = mesh.surface.interval(c);
                xs.extend(tables.line.points.iter().map(|&s| iv.map(s)));
            }
            xs.extend_from_slice(&mesh.surface.nodes);
            ColumnCache::new(xs)
        });
        Ok(Self {
            orders,
            coeffs,
            bc,
            problem,
            exec: Execution::default(),
            mesh_penalty: true,
            pce_penalty: true,
            tables,
            cache,
            prev_gap: None,
            ws: Workspace::default(),
            columns: mesh.columns(),
            layers: mesh.layers(),
        })
    }

    /// Points per direction of the element rule.
    pub fn points_per_direction(&self) -> usize {
        self.tables.nq
    }

    pub fn quadrature_line(&self) -> &QuadRule {
        &self.tables.line
    }

    fn exact(&self, t: f64, index: usize, x: f64, z: f64) -> FreeFlowSample {
        match &self.cache {
            Some(c) => c.free_flow(index, z),
            None => self.problem.free_flow(t, x, z),
        }
    }

    fn node_index(&self, node: usize) -> usize {
        self.columns * self.tables.nq + node
    }

    /// Element traces of `U` and `Xi`, face averages used by the auxiliary
    /// and vertical-velocity equations.
    fn u_pass(&mut self, state: &HydroState, mesh: &LayeredSliceMesh, t: f64) {
        if let Some(c) = self.cache.as_mut() {
            c.at_time(t);
        }
        let tb = &self.tables;
        let (nq, nv) = (tb.nq, tb.vol.len());
        let ne = mesh.free.elements.len();
        let nf = mesh.free.faces.len();
        let ws = &mut self.ws;
        ws.u_vol.resize(ne * nv, 0.0);
        ws.u_tr.resize(ne * 4 * nq, 0.0);
        ws.xi_line.resize(self.columns * nq, 0.0);
        ws.xi_end.resize(self.columns * 2, 0.0);
        ws.face_rh.resize(nf * nq, 0.0);
        ws.face_uhat.resize(nf * nq, 0.0);

        let exec = self.exec;
        par::for_each_chunk2(exec, &mut ws.u_vol, nv, &mut ws.u_tr, 4 * nq, |e, vol, tr| {
            let c = state.u.comp(e, 0);
            tb.tab_u.eval_all(c, vol);
            for lf in LocalFace::ALL {
                tb.face_u[lf.index()].eval_all(c, &mut tr[lf.index() * nq..(lf.index() + 1) * nq]);
            }
        });
        par::for_each_chunk2(exec, &mut ws.xi_line, nq, &mut ws.xi_end, 2, |c, line, end| {
            let x = state.xi.comp(c, 0);
            tb.tab_xi.eval_all(x, line);
            end[0] = dot(&tb.xi_ends[0], x);
            end[1] = dot(&tb.xi_ends[1], x);
        });

        let mut face_rh = std::mem::take(&mut ws.face_rh);
        let mut face_uhat = std::mem::take(&mut ws.face_uhat);
        let this = &*self;
        let u_tr = &this.ws.u_tr;
        let ws_xi_end = &this.ws.xi_end;
        let tb = &this.tables;
        let faces = &mesh.free.faces;
        let elems = &mesh.free.elements;
        par::for_each_chunk2(
            exec,
            &mut face_rh,
            nq,
            &mut face_uhat,
            nq,
            |f, rh, uhat| {
                let face = &faces[f];
                let k = &elems[face.owner];
                let (nu, _) = face_scale(k, face.owner_face);
                let own = &u_tr[(face.owner * 4 + face.owner_face.index()) * nq..][..nq];
                for q in 0..nq {
                    let (r, h) = match face.class {
                        FaceClass::Lateral => {
                            let (ne, nl) = face.neighbor.expect("interior face");
                            let o = u_tr[(ne * 4 + nl.index()) * nq + q];
                            let avg = flux_s_q(SqCase::Interior { u: [own[q], o] });
                            let pen = this.xi_penalty(face.owner, face.owner_face, own[q], o, ws_xi_end, Some(ne), None) * nu[0].abs();
                            (flux_r_h(RhCase::Lateral { own: own[q], other: o }, nu[0]) + pen, avg)
                        }
                        FaceClass::Horizontal => {
                            let (ne, nl) = face.neighbor.expect("interior face");
                            let o = u_tr[(ne * 4 + nl.index()) * nq + q];
                            (0.0, flux_s_q(SqCase::Interior { u: [own[q], o] }))
                        }
                        FaceClass::Inflow | FaceClass::Outflow => {
                            let p = k.map_face(face.owner_face, tb.line.points[q]);
                            let node = this.lateral_node(face.owner, face.owner_face);
                            let ex = this.exact(t, this.node_index(node), p[0], p[1]).u;
                            match (this.bc, face.class) {
                                (BcMode::Dirichlet, _) => (
                                    flux_r_h(RhCase::Lateral { own: own[q], other: ex }, nu[0])
                                        + this.xi_penalty(face.owner, face.owner_face, own[q], ex, ws_xi_end, None, Some(this.problem.xi(t, p[0]))) * nu[0].abs(),
                                    flux_s_q(SqCase::Interior { u: [own[q], ex] }),
                                ),
                                (BcMode::Physical, FaceClass::Inflow) => (
                                    flux_r_h(RhCase::Inflow { own: own[q] }, nu[0]),
                                    flux_s_q(SqCase::Boundary { u_hat: ex }),
                                ),
                                _ => (
                                    flux_r_h(RhCase::Outflow { u_hat: ex }, nu[0]),
                                    flux_s_q(SqCase::Boundary { u_hat: ex }),
                                ),
                            }
                        }
                        FaceClass::Top => (0.0, flux_s_q(SqCase::OneSided { u: own[q] })),
                        FaceClass::Bottom => match this.bc {
                            BcMode::Physical => (0.0, flux_s_q(SqCase::OneSided { u: own[q] })),
                            BcMode::Dirichlet => {
                                let p = k.map_face(face.owner_face, tb.line.points[q]);
                                let col = face.owner / this.layers;
                                let ex = this.exact(t, col * nq + q, p[0], p[1]).u;
                                (0.0, flux_s_q(SqCase::Boundary { u_hat: ex }))
                            }
                        },
                    };
                    rh[q] = r;
                    uhat[q] = h;
                }
            },
        );
        self.ws.face_rh = face_rh;
        self.ws.face_uhat = face_uhat;
    }

    /// Jump penalty `lambda/2 (Xi_own - Xi_other)` added to the lateral mass
    /// flux; zero unless enabled.
    #[allow(clippy::too_many_arguments)]
    fn xi_penalty(
        &self,
        owner: usize,
        lf: LocalFace,
        u_own: f64,
        u_other: f64,
        xi_end: &[f64],
        neighbor: Option<usize>,
        exterior: Option<f64>,
    ) -> f64 {
        if !self.pce_penalty {
            return 0.0;
        }
        let col = owner / self.layers;
        let (so, sn) = if lf == LocalFace::Right { (1, 0) } else { (0, 1) };
        let xo = xi_end[col * 2 + so];
        let xn = match (neighbor, exterior) {
            (Some(ne), _) => xi_end[(ne / self.layers) * 2 + sn],
            (None, Some(x)) => x,
            _ => xo,
        };
        let lambda = lambda_interior(u_own, u_other);
        0.5 * lambda * (xo - xn)
    }

    /// Surface node of a lateral boundary face.
    fn lateral_node(&self, owner: usize, lf: LocalFace) -> usize {
        let col = owner / self.layers;
        if lf == LocalFace::Left {
            col
        } else {
            col + 1
        }
    }

    /// Right-hand sides of the auxiliary equation for element `e`:
    /// `(U, d_m psi) - <U^ n_m, psi>` for `m = x, z`.
    fn q_rhs(&self, mesh: &LayeredSliceMesh, e: usize, out: &mut [f64]) {
        let tb = &self.tables;
        let (nq, m) = (tb.nq, tb.tab_u.modes);
        let k = &mesh.free.elements[e];
        out[..2 * m].iter_mut().for_each(|v| *v = 0.0);
        let uv = &self.ws.u_vol[e * tb.vol.len()..];
        for (q, p) in tb.vol.points.iter().enumerate() {
            let (a, b, c) = factors_at(k, p[0], p[1]);
            let wu = tb.vol.weights[q] * uv[q];
            let (ds, dt) = (tb.tab_u.ds_row(q), tb.tab_u.dt_row(q));
            for i in 0..m {
                out[i] += wu * (c * ds[i] - b * dt[i]);
                out[m + i] += wu * a * dt[i];
            }
        }
        for lf in LocalFace::ALL {
            let f = mesh.free.element_faces[e][lf.index()];
            let face = &mesh.free.faces[f];
            let (nu, _) = face_scale(&mesh.free.elements[face.owner], face.owner_face);
            let sign = if face.owner == e { 1.0 } else { -1.0 };
            let tab = &tb.face_u[lf.index()];
            for q in 0..nq {
                let h = sign * tb.line.weights[q] * self.ws.face_uhat[f * nq + q];
                let phi = tab.row(q);
                for i in 0..m {
                    out[i] -= h * nu[0] * phi[i];
                    out[m + i] -= h * nu[1] * phi[i];
                }
            }
        }
    }

    fn solve_q_inner(&self, state: &mut HydroState, mesh: &LayeredSliceMesh) -> Result<()> {
        let m = self.tables.tab_u.modes;
        let n = self.orders.u + 1;
        let d = self.coeffs.diffusion;
        let err = std::sync::Mutex::new(None);
        par::for_each_chunk(self.exec, &mut state.q.coeffs, 2 * m, |e, out| {
            self.q_rhs(mesh, e, out);
            match ColumnMass::new(&mesh.free.elements[e], &self.tables.s_moment, n) {
                Ok(mass) => {
                    let (px, pz) = out.split_at_mut(m);
                    mass.solve(px);
                    mass.solve(pz);
                    for i in 0..m {
                        let (a, b) = (px[i], pz[i]);
                        px[i] = d[0][0] * a + d[0][1] * b;
                        pz[i] = d[1][0] * a + d[1][1] * b;
                    }
                }
                Err(x) => *err.lock().unwrap() = Some(x),
            }
        });
        err.into_inner().unwrap().map_or(Ok(()), Err)
    }

    /// Solves the element-local auxiliary equation for `Q`.
    pub fn solve_auxiliary_q(
        &mut self,
        state: &mut HydroState,
        mesh: &LayeredSliceMesh,
        t: f64,
    ) -> Result<()> {
        self.u_pass(state, mesh, t);
        self.solve_q_inner(state, mesh)
    }

    /// Largest absolute residual of the auxiliary equation in the current
    /// state, relative to the largest right-hand side entry.
    pub fn q_residual(&mut self, state: &HydroState, mesh: &LayeredSliceMesh, t: f64) -> Result<f64> {
        self.u_pass(state, mesh, t);
        let m = self.tables.tab_u.modes;
        let n = self.orders.u + 1;
        let dinv = invert2(self.coeffs.diffusion);
        let mut worst: f64 = 0.0;
        let mut rhs = vec![0.0; 2 * m];
        let (mut lhs, mut p) = (vec![0.0; m], vec![0.0; 2 * m]);
        for e in 0..mesh.free.elements.len() {
            self.q_rhs(mesh, e, &mut rhs);
            let mass = ColumnMass::new(&mesh.free.elements[e], &self.tables.s_moment, n)?;
            let qx = state.q.comp(e, 0);
            let qz = state.q.comp(e, 1);
            for i in 0..m {
                p[i] = dinv[0][0] * qx[i] + dinv[0][1] * qz[i];
                p[m + i] = dinv[1][0] * qx[i] + dinv[1][1] * qz[i];
            }
            let scale = rhs.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
            for comp in 0..2 {
                mass.apply(&p[comp * m..(comp + 1) * m], &mut lhs);
                for i in 0..m {
                    worst = worst.max((lhs[i] - rhs[comp * m + i]).abs() / scale);
                }
            }
        }
        Ok(worst)
    }

    /// Right-hand side of the vertical-velocity equation of element `e`
    /// given the lower element's top traces `below` = (u, w), or the
    /// interface flux for the bottom layer.
    fn w_rhs(
        &self,
        mesh: &LayeredSliceMesh,
        e: usize,
        below: Option<(&[f64], &[f64])>,
        darcy_flux: &[f64],
        out: &mut [f64],
    ) {
        let tb = &self.tables;
        let (nq, m) = (tb.nq, tb.tab_w.modes);
        let k = &mesh.free.elements[e];
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        let uv = &self.ws.u_vol[e * tb.vol.len()..];
        for (q, p) in tb.vol.points.iter().enumerate() {
            let (_, b, c) = factors_at(k, p[0], p[1]);
            let wu = tb.vol.weights[q] * uv[q];
            let (ds, dt) = (tb.tab_w.ds_row(q), tb.tab_w.dt_row(q));
            for i in 0..m {
                out[i] += wu * (c * ds[i] - b * dt[i]);
            }
        }
        for lf in [LocalFace::Left, LocalFace::Right] {
            let f = mesh.free.element_faces[e][lf.index()];
            let sign = if mesh.free.faces[f].owner == e { 1.0 } else { -1.0 };
            let tab = &tb.face_w[lf.index()];
            for q in 0..nq {
                let h = sign * tb.line.weights[q] * self.ws.face_rh[f * nq + q];
                for (o, phi) in out.iter_mut().zip(tab.row(q)) {
                    *o -= h * phi;
                }
            }
        }
        let (nu_top, _) = face_scale(k, LocalFace::Top);
        let (nu_bot, _) = face_scale(k, LocalFace::Bottom);
        let u_top = &self.ws.u_tr[(e * 4 + LocalFace::Top.index()) * nq..][..nq];
        let col = e / self.layers;
        for q in 0..nq {
            let wq = tb.line.weights[q];
            let top = wq * u_top[q] * nu_top[0];
            let bot = wq
                * match below {
                    Some((ub, wb)) => ub[q] * nu_bot[0] + wb[q] * nu_bot[1],
                    None => darcy_flux[col * nq + q],
                };
            let (pt, pb) = (tb.face_w[LocalFace::Top.index()].row(q), tb.face_w[LocalFace::Bottom.index()].row(q));
            for i in 0..m {
                out[i] -= top * pt[i] + bot * pb[i];
            }
        }
    }

    fn solve_w_inner(&self, state: &mut HydroState, mesh: &LayeredSliceMesh, darcy_flux: &[f64]) {
        let tb = &self.tables;
        let (nq, m) = (tb.nq, tb.tab_w.modes);
        let nw = self.orders.w + 1;
        let l = self.layers;
        par::for_each_chunk(self.exec, &mut state.w.coeffs, l * m, |c, col| {
            let mut work = vec![0.0; nw];
            let mut ub = vec![0.0; nq];
            let mut wb = vec![0.0; nq];
            for k in 0..l {
                let e = c * l + k;
                let below = (k > 0).then_some((&ub[..], &wb[..]));
                let out = &mut col[k * m..(k + 1) * m];
                self.w_rhs(mesh, e, below, darcy_flux, out);
                let a = mesh.free.elements[e].half_width();
                for i1 in 0..nw {
                    let r = &mut out[i1 * nw..(i1 + 1) * nw];
                    r.iter_mut().for_each(|v| *v /= a);
                    tb.w_vertical.solve_in_place(r, &mut work);
                }
                let top = LocalFace::Top.index();
                ub.copy_from_slice(&self.ws.u_tr[(e * 4 + top) * nq..][..nq]);
                tb.face_w[top].eval_all(out, &mut wb);
            }
        });
    }

    /// Column-wise bottom-to-top solve for `W` given the interface flux
    /// (`U~ . n ds/dr` at the bottom-face points of every column).
    pub fn solve_vertical_velocity(
        &mut self,
        state: &mut HydroState,
        mesh: &LayeredSliceMesh,
        darcy_flux: &[f64],
        t: f64,
    ) -> Result<()> {
        self.check_interface(darcy_flux)?;
        self.u_pass(state, mesh, t);
        self.solve_w_inner(state, mesh, darcy_flux);
        Ok(())
    }

    /// Largest residual of the vertical-velocity equation relative to the
    /// largest right-hand side entry.
    pub fn w_residual(
        &mut self,
        state: &HydroState,
        mesh: &LayeredSliceMesh,
        darcy_flux: &[f64],
        t: f64,
    ) -> Result<f64> {
        self.check_interface(darcy_flux)?;
        self.u_pass(state, mesh, t);
        let tb = &self.tables;
        let (nq, m) = (tb.nq, tb.tab_w.modes);
        let nw = self.orders.w + 1;
        let mut rhs = vec![0.0; m];
        let mut worst: f64 = 0.0;
        let (mut ub, mut wb) = (vec![0.0; nq], vec![0.0; nq]);
        // T from its LU factor is not stored; rebuild the operator by
        // quadrature on the full tensor basis instead.
        let bw = Basis2D::new(self.orders.w);
        let fine = QuadRule2D::for_degree(2 * self.orders.w + 2);
        let ftab = bw.tabulate_volume(&fine);
        let top_tab = bw.tabulate(&fine.line.points.iter().map(|&s| [s, 1.0]).collect::<Vec<_>>());
        for c in 0..self.columns {
            for k in 0..self.layers {
                let e = c * self.layers + k;
                let below = (k > 0).then_some((&ub[..], &wb[..]));
                self.w_rhs(mesh, e, below, darcy_flux, &mut rhs);
                let a = mesh.free.elements[e].half_width();
                let wc = state.w.comp(e, 0);
                let mut lhs = vec![0.0; m];
                for q in 0..fine.len() {
                    let wv = ftab.eval(q, wc);
                    for (i, d) in ftab.dt_row(q).iter().enumerate() {
                        lhs[i] -= fine.weights[q] * a * wv * d;
                    }
                }
                for q in 0..fine.line.len() {
                    let wv = top_tab.eval(q, wc);
                    for (i, v) in top_tab.row(q).iter().enumerate() {
                        lhs[i] += fine.line.weights[q] * a * wv * v;
                    }
                }
                let scale = rhs.iter().fold(1e-300f64, |s, v| s.max(v.abs()));
                for i in 0..m {
                    worst = worst.max((lhs[i] - rhs[i]).abs() / scale);
                }
                let top = LocalFace::Top.index();
                ub.copy_from_slice(&self.ws.u_tr[(e * 4 + top) * nq..][..nq]);
                tb.face_w[top].eval_all(wc, &mut wb);
            }
        }
        let _ = nw;
        Ok(worst)
    }

    fn check_interface(&self, darcy_flux: &[f64]) -> Result<()> {
        if darcy_flux.len() != self.columns * self.tables.nq {
            return Err(Error::Missing("interface flux at every bottom-face point"));
        }
        Ok(())
    }

    /// Traces of `Q` and `W` and the momentum face fluxes.
    fn flux_pass(
        &mut self,
        state: &HydroState,
        mesh: &LayeredSliceMesh,
        darcy_flux: &[f64],
        gap_rate: Option<&[f64]>,
        t: f64,
    ) {
        let tb = &self.tables;
        let (nq, nv) = (tb.nq, tb.vol.len());
        let ne = mesh.free.elements.len();
        let nf = mesh.free.faces.len();
        let m = tb.tab_u.modes;
        let ws = &mut self.ws;
        ws.q_vol.resize(ne * 2 * nv, 0.0);
        ws.q_tr.resize(ne * 8 * nq, 0.0);
        ws.w_vol.resize(ne * nv, 0.0);
        ws.w_top.resize(ne * nq, 0.0);
        ws.face_mom.resize(nf * nq, 0.0);
        let exec = self.exec;
        par::for_each_chunk2(exec, &mut ws.q_vol, 2 * nv, &mut ws.q_tr, 8 * nq, |e, vol, tr| {
            let qc = &state.q.element(e);
            for comp in 0..2 {
                let c = &qc[comp * m..(comp + 1) * m];
                tb.tab_u.eval_all(c, &mut vol[comp * nv..(comp + 1) * nv]);
                for lf in LocalFace::ALL {
                    let o = (comp * 4 + lf.index()) * nq;
                    tb.face_u[lf.index()].eval_all(c, &mut tr[o..o + nq]);
                }
            }
        });
        par::for_each_chunk2(exec, &mut ws.w_vol, nv, &mut ws.w_top, nq, |e, vol, top| {
            let c = state.w.comp(e, 0);
            tb.tab_w.eval_all(c, vol);
            tb.face_w[LocalFace::Top.index()].eval_all(c, top);
        });

        let mut face_mom = std::mem::take(&mut self.ws.face_mom);
        let this = &*self;
        let ws = &this.ws;
        let faces = &mesh.free.faces;
        let elems = &mesh.free.elements;
        let g = this.coeffs.gravity;
        let qtr = |e: usize, lf: LocalFace, q: usize| -> [f64; 2] {
            [
                ws.q_tr[e * 8 * nq + lf.index() * nq + q],
                ws.q_tr[e * 8 * nq + (4 + lf.index()) * nq + q],
            ]
        };
        par::for_each_chunk(exec, &mut face_mom, nq, |f, out| {
            let face = &faces[f];
            let e = face.owner;
            let k = &elems[e];
            let lf = face.owner_face;
            let (_, jf) = face_scale(k, lf);
            let n = face.normal;
            let col = e / this.layers;
            let own_u = &ws.u_tr[(e * 4 + lf.index()) * nq..][..nq];
            for q in 0..nq {
                let u = own_u[q];
                let qo = qtr(e, lf, q);
                let val = match face.class {
                    FaceClass::Lateral => {
                        let (ne, nl) = face.neighbor.expect("interior face");
                        let o = ws.u_tr[(ne * 4 + nl.index()) * nq + q];
                        let (side_o, side_n) = if lf == LocalFace::Right { (1, 0) } else { (0, 1) };
                        let xo = ws.xi_end[col * 2 + side_o];
                        let xn = ws.xi_end[(ne / this.layers) * 2 + side_n];
                        let lambda = lambda_interior(u * n[0], o * n[0]);
                        flux_r_u(RuCase::Lateral { u: [u, o], xi: [g * xo, g * xn], lambda }, n)
                            + flux_s_u(SuCase::Interior { q: [qo, qtr(ne, nl, q)] }, n)
                    }
                    FaceClass::Horizontal => {
                        let (ne, nl) = face.neighbor.expect("interior face");
                        let o = ws.u_tr[(ne * 4 + nl.index()) * nq + q];
                        let below = [u, ws.w_top[e * nq + q]];
                        let xi = g * ws.xi_line[col * nq + q];
                        flux_r_u(RuCase::Horizontal { u: [u, o], below, xi }, n)
                            + flux_s_u(SuCase::Interior { q: [qo, qtr(ne, nl, q)] }, n)
                    }
                    FaceClass::Inflow | FaceClass::Outflow => {
                        let p = k.map_face(lf, tb.line.points[q]);
                        let node = this.lateral_node(e, lf);
                        let ex = this.exact(t, this.node_index(node), p[0], p[1]);
                        let side = if lf == LocalFace::Right { 1 } else { 0 };
                        let xo = g * ws.xi_end[col * 2 + side];
                        match (this.bc, face.class) {
                            (BcMode::Dirichlet, _) => {
                                let xi_ex = g * this.problem.xi(t, p[0]);
                                let lambda = lambda_interior(u * n[0], ex.u * n[0]);
                                flux_r_u(RuCase::Lateral { u: [u, ex.u], xi: [xo, xi_ex], lambda }, n)
                                    + flux_s_u(SuCase::Interior { q: [qo, ex.q] }, n)
                            }
                            (BcMode::Physical, FaceClass::Inflow) => {
                                let xi_hat = g * this.problem.xi(t, p[0]);
                                let lambda = lambda_inflow(u * n[0]);
                                flux_r_u(RuCase::Inflow { u, xi_hat, u_hat: ex.u, lambda }, n)
                                    + flux_s_u(SuCase::Boundary { q: qo }, n)
                            }
                            _ => {
                                flux_r_u(RuCase::Outflow { u, u_hat: ex.u, xi: xo }, n)
                                    + flux_s_u(SuCase::Boundary { q: qo }, n)
                            }
                        }
                    }
                    FaceClass::Top => {
                        let xi = g * ws.xi_line[col * nq + q];
                        let w = ws.w_top[e * nq + q];
                        let su = match this.bc {
                            BcMode::Physical => flux_s_u(SuCase::Top, n),
                            BcMode::Dirichlet => {
                                let p = k.map_face(lf, tb.line.points[q]);
                                let ex = this.exact(t, col * nq + q, p[0], p[1]);
                                flux_s_u(SuCase::Boundary { q: ex.q }, n)
                            }
                        };
                        let penalty = gap_rate.map_or(0.0, |r| 0.5 * n[1] * r[col * nq + q] * u);
                        flux_r_u(RuCase::Top { u, w, xi }, n) + su + penalty
                    }
                    FaceClass::Bottom => {
                        let xi = g * ws.xi_line[col * nq + q];
                        let darcy = darcy_flux[col * nq + q] / jf;
                        let su = match this.bc {
                            BcMode::Physical => flux_s_u(
                                SuCase::Bottom {
                                    u,
                                    friction: this.coeffs.friction,
                                },
                                n,
                            ),
                            BcMode::Dirichlet => flux_s_u(SuCase::Boundary { q: qo }, n),
                        };
                        flux_r_u(RuCase::Bottom { u, darcy_flux: darcy, xi }, n) + su
                    }
                };
                out[q] = val * jf;
            }
        });
        self.ws.face_mom = face_mom;
    }

    /// Momentum right-hand side of element `e` (before the mass solve).
    fn momentum_rhs(&self, mesh: &LayeredSliceMesh, e: usize, t: f64, out: &mut [f64]) {
        let tb = &self.tables;
        let (nq, nv, m) = (tb.nq, tb.vol.len(), tb.tab_u.modes);
        let k = &mesh.free.elements[e];
        let col = e / self.layers;
        let ws = &self.ws;
        let g = self.coeffs.gravity;
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        let (uv, wv) = (&ws.u_vol[e * nv..][..nv], &ws.w_vol[e * nv..][..nv]);
        let (qx, qz) = (&ws.q_vol[e * 2 * nv..][..nv], &ws.q_vol[e * 2 * nv + nv..][..nv]);
        for (q, p) in tb.vol.points.iter().enumerate() {
            let (a, b, c) = factors_at(k, p[0], p[1]);
            let i_s = q / nq;
            let wq = tb.vol.weights[q];
            let xi = ws.xi_line[col * nq + i_s];
            let force = if self.problem.is_manufactured() {
                let x = k.map(p[0], p[1]);
                self.exact(t, col * nq + i_s, x[0], x[1]).f_u
            } else {
                0.0
            };
            let ax = wq * (g * xi + uv[q] * uv[q] + qx[q]);
            let az = wq * (uv[q] * wv[q] + qz[q]);
            let f = wq * force * a * c;
            let (ds, dt, v) = (tb.tab_u.ds_row(q), tb.tab_u.dt_row(q), tb.tab_u.row(q));
            let (cs, ct) = (ax * c, az * a - ax * b);
            for i in 0..m {
                out[i] += cs * ds[i] + ct * dt[i] + f * v[i];
            }
        }
        for lf in LocalFace::ALL {
            let f = mesh.free.element_faces[e][lf.index()];
            let sign = if mesh.free.faces[f].owner == e { 1.0 } else { -1.0 };
            let tab = &tb.face_u[lf.index()];
            for q in 0..nq {
                let h = sign * tb.line.weights[q] * ws.face_mom[f * nq + q];
                for (o, phi) in out.iter_mut().zip(tab.row(q)) {
                    *o -= h * phi;
                }
            }
        }
    }

    /// PCE right-hand side of column `c` (before the mass solve).
    fn pce_rhs(&self, mesh: &LayeredSliceMesh, c: usize, darcy_flux: &[f64], t: f64, out: &mut [f64]) {
        let tb = &self.tables;
        let (nq, nv) = (tb.nq, tb.vol.len());
        let mx = tb.tab_xi.modes;
        let ws = &self.ws;
        out[..mx].iter_mut().for_each(|v| *v = 0.0);
        let iv = mesh.surface.interval(c);
        let a = iv.half_width();
        for k in 0..self.layers {
            let e = c * self.layers + k;
            let el = &mesh.free.elements[e];
            let uv = &ws.u_vol[e * nv..][..nv];
            for (q, p) in tb.vol.points.iter().enumerate() {
                let (_, _, cc) = factors_at(el, p[0], p[1]);
                let h = tb.vol.weights[q] * uv[q] * cc;
                for (o, d) in out.iter_mut().zip(tb.tab_xi.der_row(q / nq)) {
                    *o += h * d;
                }
            }
            for (lf, end) in [(LocalFace::Left, 0), (LocalFace::Right, 1)] {
                let f = mesh.free.element_faces[e][lf.index()];
                let sign = if mesh.free.faces[f].owner == e { 1.0 } else { -1.0 };
                let flux: f64 = (0..nq)
                    .map(|q| tb.line.weights[q] * ws.face_rh[f * nq + q])
                    .sum::<f64>()
                    * sign;
                for (o, d) in out.iter_mut().zip(&tb.xi_ends[end]) {
                    *o -= flux * d;
                }
            }
        }
        for q in 0..nq {
            let x = iv.map(tb.line.points[q]);
            let src = self.problem.pce_source(t, x) * a - darcy_flux[c * nq + q];
            let h = tb.line.weights[q] * src;
            for (o, d) in out.iter_mut().zip(tb.tab_xi.row(q)) {
                *o += h * d;
            }
        }
    }

    fn rates_inner(
        &self,
        mesh: &LayeredSliceMesh,
        darcy_flux: &[f64],
        t: f64,
        rates: &mut Rates,
    ) -> Result<()> {
        let m = self.tables.tab_u.modes;
        let mx = self.tables.tab_xi.modes;
        let n = self.orders.u + 1;
        rates.u.resize(mesh.free.elements.len() * m, 0.0);
        rates.xi.resize(self.columns * mx, 0.0);
        let err = std::sync::Mutex::new(None);
        par::for_each_chunk(self.exec, &mut rates.u, m, |e, out| {
            self.momentum_rhs(mesh, e, t, out);
            match ColumnMass::new(&mesh.free.elements[e], &self.tables.s_moment, n) {
                Ok(mass) => mass.solve(out),
                Err(x) => *err.lock().unwrap() = Some(x),
            }
        });
        par::for_each_chunk(self.exec, &mut rates.xi, mx, |c, out| {
            self.pce_rhs(mesh, c, darcy_flux, t, out);
            let a = mesh.surface.interval(c).half_width();
            out.iter_mut().for_each(|v| *v /= a);
        });
        err.into_inner().unwrap().map_or(Ok(()), Err)
    }

    /// `Xi_s - Xi` at the top-face points of every column.
    fn surface_gap(&self, state: &HydroState, mesh: &LayeredSliceMesh) -> Vec<f64> {
        let tb = &self.tables;
        let nq = tb.nq;
        let mut gap = vec![0.0; self.columns * nq];
        for c in 0..self.columns {
            let xc = state.xi.comp(c, 0);
            for q in 0..nq {
                let s = tb.line.points[q];
                let xs = 0.5 * (1.0 - s) * mesh.xi_s[c] + 0.5 * (1.0 + s) * mesh.xi_s[c + 1];
                gap[c * nq + q] = xs - tb.tab_xi.eval(q, xc);
            }
        }
        gap
    }

    /// Solves `Q` and `W` in place and returns the time derivatives of `Xi`
    /// and `U`. `gap_rate` is `d/dt (Xi_s - Xi)` at the top-face points.
    pub fn evaluate(
        &mut self,
        state: &mut HydroState,
        mesh: &LayeredSliceMesh,
        darcy_flux: &[f64],
        gap_rate: Option<&[f64]>,
        t: f64,
    ) -> Result<Rates> {
        self.check_interface(darcy_flux)?;
        self.u_pass(state, mesh, t);
        self.solve_q_inner(state, mesh)?;
        self.solve_w_inner(state, mesh, darcy_flux);
        self.flux_pass(state, mesh, darcy_flux, gap_rate, t);
        let mut rates = Rates {
            xi: Vec::new(),
            u: Vec::new(),
        };
        self.rates_inner(mesh, darcy_flux, t, &mut rates)?;
        Ok(rates)
    }

    /// One forward-Euler step of length `dt` from time `t`, followed by
    /// surface smoothing and mesh motion.
    pub fn step(
        &mut self,
        state: &mut HydroState,
        mesh: &mut LayeredSliceMesh,
        darcy_flux: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<()> {
        let gap = self.surface_gap(state, mesh);
        let rate: Option<Vec<f64>> = match (&self.prev_gap, self.mesh_penalty) {
            (Some((prev, pdt)), true) => Some(gap.iter().zip(prev).map(|(a, b)| (a - b) / pdt).collect()),
            _ => None,
        };
        let rates = self.evaluate(state, mesh, darcy_flux, rate.as_deref(), t)?;
        for (c, r) in state.xi.coeffs.iter_mut().zip(&rates.xi) {
            *c += dt * r;
        }
        for (c, r) in state.u.coeffs.iter_mut().zip(&rates.u) {
            *c += dt * r;
        }
        let problem = self.problem;
        let xi_s = smooth_free_surface(&state.xi, &mesh.surface, |x| problem.xi(t + dt, x));
        move_mesh(mesh, &xi_s)?;
        self.prev_gap = Some((gap, dt));
        Ok(())
    }

    /// Forgets the stored surface gap (the next step uses a zero rate).
    pub fn reset_history(&mut self) {
        self.prev_gap = None;
    }

    /// Dynamic head `g Xi + |U|^2 / 2` divided by `g`, at the bottom-face
    /// points of every column.
    pub fn interface_head(&self, state: &HydroState) -> Vec<f64> {
        let tb = &self.tables;
        let nq = tb.nq;
        let g = self.coeffs.gravity;
        let mut out = vec![0.0; self.columns * nq];
        for c in 0..self.columns {
            let e = c * self.layers;
            let uc = state.u.comp(e, 0);
            let xc = state.xi.comp(c, 0);
            for q in 0..nq {
                let u = tb.face_u[LocalFace::Bottom.index()].eval(q, uc);
                out[c * nq + q] = crate::coupling::interface_dynamic_head(tb.tab_xi.eval(q, xc), u, g);
            }
        }
        out
    }

    /// Bed stress `C_f(u) u` at every interface point.
    pub fn interface_friction(&self, state: &HydroState) -> Vec<f64> {
        let tb = &self.tables;
        let nq = tb.nq;
        let mut out = vec![0.0; self.columns * nq];
        for c in 0..self.columns {
            let uc = state.u.comp(c * self.layers, 0);
            for q in 0..nq {
                let u = tb.face_u[LocalFace::Bottom.index()].eval(q, uc);
                out[c * nq + q] = crate::coupling::interface_friction(self.coeffs.friction, u);
            }
        }
        out
    }

    /// Quadratic energy terms of the current state; `Q` must be current.
    pub fn energy(&mut self, state: &HydroState, mesh: &LayeredSliceMesh, darcy_flux: &[f64], t: f64) -> FreeFlowEnergy {
        self.u_pass(state, mesh, t);
        let tb = &self.tables;
        let nq = tb.nq;
        let dinv = invert2(self.coeffs.diffusion);
        let mut en = FreeFlowEnergy {
            xi: state.xi.coeffs.iter().enumerate().map(|(i, v)| {
                let c = i / tb.tab_xi.modes;
                mesh.surface.interval(c).half_width() * v * v
            }).sum(),
            ..Default::default()
        };
        let g = self.coeffs.gravity;
        for (e, k) in mesh.free.elements.iter().enumerate() {
            let uc = state.u.comp(e, 0);
            let (qx, qz) = (state.q.comp(e, 0), state.q.comp(e, 1));
            for (q, p) in tb.vol.points.iter().enumerate() {
                let det = k.factors(p[0], p[1]).det();
                let w = tb.vol.weights[q] * det;
                let u = tb.tab_u.eval(q, uc);
                let (a, b) = (tb.tab_u.eval(q, qx), tb.tab_u.eval(q, qz));
                en.u += w * u * u;
                en.viscous += w * (a * (dinv[0][0] * a + dinv[0][1] * b) + b * (dinv[1][0] * a + dinv[1][1] * b));
            }
        }
        for face in &mesh.free.faces {
            let (_, jf) = face_scale(&mesh.free.elements[face.owner], face.owner_face);
            let own = &self.ws.u_tr[(face.owner * 4 + face.owner_face.index()) * nq..][..nq];
            match face.class {
                FaceClass::Lateral => {
                    let (ne, nl) = face.neighbor.expect("interior face");
                    for q in 0..nq {
                        let o = self.ws.u_tr[(ne * 4 + nl.index()) * nq + q];
                        let lam = lambda_interior(own[q] * face.normal[0], o * face.normal[0]);
                        let j = own[q] - o;
                        en.jump_penalty += tb.line.weights[q] * jf * 0.5 * lam * j * j;
                        if self.pce_penalty {
                            let (so, sn) = if face.owner_face == LocalFace::Right { (1, 0) } else { (0, 1) };
                            let dx = self.ws.xi_end[(face.owner / self.layers) * 2 + so]
                                - self.ws.xi_end[(ne / self.layers) * 2 + sn];
                            en.xi_jump_penalty += g * tb.line.weights[q] * jf * 0.5 * lam * dx * dx;
                        }
                    }
                }
                FaceClass::Bottom => {
                    let col = face.owner / self.layers;
                    let xc = state.xi.comp(col, 0);
                    for q in 0..nq {
                        let u = own[q];
                        let w = tb.line.weights[q];
                        if self.bc == BcMode::Physical {
                            en.friction += w * jf * self.coeffs.friction.stress(u) * u;
                        }
                        let head = g * tb.tab_xi.eval(q, xc) + 0.5 * u * u;
                        en.interface += w * head * darcy_flux[col * nq + q];
                    }
                }
                _ => {}
            }
        }
        en
    }
}

impl ColumnQuad {
    /// Physical point at face parameter `r`.
    pub fn map_face(&self, lf: LocalFace, r: f64) -> [f64; 2] {
        let p = lf.reference_point(r);
        self.map(p[0], p[1])
    }
}
