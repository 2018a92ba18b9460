//! Layered meshes of the vertical slice. The free-flow block sits between the
//! interface `z_b(x)` and the smoothed free surface `Xi_s(x)`; the Darcy block
//! fills `(bottom, z_b(x))` and never moves. Both use the same surface nodes,
//! so columns line up and interface faces coincide pairwise.
//!
//! Element `e = column * layers + layer`, layer 0 at the bottom.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dg::{Basis1D, ColumnQuad, DGField, Interval, LocalFace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Inflow,
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DarcyBoundary {
    Dirichlet,
    Neumann,
}

/// Free-flow face classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceClass {
    /// Interior lateral (vertical) face.
    Lateral,
    /// Interior horizontal face between two layers.
    Horizontal,
    /// Free surface.
    Top,
    /// Interface with the Darcy block.
    Bottom,
    Inflow,
    Outflow,
}

impl FaceClass {
    pub const ALL: [FaceClass; 6] = [
        FaceClass::Lateral,
        FaceClass::Horizontal,
        FaceClass::Top,
        FaceClass::Bottom,
        FaceClass::Inflow,
        FaceClass::Outflow,
    ];
}

/// Darcy face classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DarcyFaceClass {
    Interior,
    Dirichlet,
    Neumann,
    /// Interface with the free-flow block.
    Top,
}

/// One face: owner element and local face, optional neighbour, outward unit
/// normal of the owner, and length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face<C> {
    pub owner: usize,
    pub owner_face: LocalFace,
    pub neighbor: Option<(usize, LocalFace)>,
    pub class: C,
    pub normal: [f64; 2],
    pub length: f64,
}

pub type FaceGeometry = Face<FaceClass>;

/// Nodes of the projected (1D) domain with tags on its two end points.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh1D {
    pub nodes: Vec<f64>,
    /// Tags of the left and right end nodes.
    pub tags: [BoundaryTag; 2],
}

impl SurfaceMesh1D {
    pub fn uniform(x0: f64, x1: f64, elements: usize, tags: [BoundaryTag; 2]) -> Result<Self> {
        if elements == 0 {
            return Err(Error::NonPositive {
                what: "surface element count",
                value: 0.0,
            });
        }
        if !(x1 > x0) {
            return Err(Error::NonPositive {
                what: "domain length",
                value: x1 - x0,
            });
        }
        let h = (x1 - x0) / elements as f64;
        let mut nodes: Vec<f64> = (0..=elements).map(|i| x0 + h * i as f64).collect();
        nodes[elements] = x1;
        Ok(Self { nodes, tags })
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn interval(&self, c: usize) -> Interval {
        Interval::new(self.nodes[c], self.nodes[c + 1])
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.elements()).map(|c| self.interval(c)).collect()
    }
}

/// Geometry of a layered block: node heights per surface node and layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlock<C> {
    pub layers: usize,
    /// `z[node * (layers + 1) + k]`.
    pub z: Vec<f64>,
    pub elements: Vec<ColumnQuad>,
    pub faces: Vec<Face<C>>,
    /// Face index of every local face, in [`LocalFace::ALL`] order.
    pub element_faces: Vec<[usize; 4]>,
}

impl<C: Copy + PartialEq> LayerBlock<C> {
    pub fn element(&self, column: usize, layer: usize) -> usize {
        column * self.layers + layer
    }

    pub fn node_z(&self, node: usize, k: usize) -> f64 {
        self.z[node * (self.layers + 1) + k]
    }

    pub fn faces_of(&self, class: C) -> impl Iterator<Item = (usize, &Face<C>)> {
        self.faces.iter().enumerate().filter(move |(_, f)| f.class == class)
    }

    fn rebuild_geometry(&mut self, nodes: &[f64]) {
        let l = self.layers;
        for c in 0..nodes.len() - 1 {
            for k in 0..l {
                self.elements[c * l + k] = ColumnQuad {
                    x0: nodes[c],
                    x1: nodes[c + 1],
                    zlo: [self.z[c * (l + 1) + k], self.z[(c + 1) * (l + 1) + k]],
                    zhi: [self.z[c * (l + 1) + k + 1], self.z[(c + 1) * (l + 1) + k + 1]],
                };
            }
        }
        for f in &mut self.faces {
            let k = &self.elements[f.owner];
            f.normal = k.face_normal(f.owner_face);
            f.length = k.face_length(f.owner_face);
        }
    }

    /// Builds connectivity for `columns x layers` elements. `lateral` and
    /// `horizontal` classify faces from (node, layer) and (column, level).
    fn connect(
        nodes: &[f64],
        layers: usize,
        z: Vec<f64>,
        lateral: impl Fn(usize) -> C,
        horizontal: impl Fn(usize) -> C,
    ) -> Self {
        let n = nodes.len() - 1;
        let mut block = Self {
            layers,
            z,
            elements: vec![
                ColumnQuad {
                    x0: 0.0,
                    x1: 0.0,
                    zlo: [0.0; 2],
                    zhi: [0.0; 2],
                };
                n * layers
            ],
            faces: Vec::with_capacity((n + 1) * layers + n * (layers + 1)),
            element_faces: vec![[usize::MAX; 4]; n * layers],
        };
        for i in 0..=n {
            for k in 0..layers {
                let (owner, owner_face) = if i == 0 {
                    (k, LocalFace::Left)
                } else {
                    ((i - 1) * layers + k, LocalFace::Right)
                };
                let neighbor = (i > 0 && i < n).then_some((i * layers + k, LocalFace::Left));
                block.push_face(owner, owner_face, neighbor, lateral(i));
            }
        }
        for c in 0..n {
            for k in 0..=layers {
                let (owner, owner_face) = if k == 0 {
                    (c * layers, LocalFace::Bottom)
                } else {
                    (c * layers + k - 1, LocalFace::Top)
                };
                let neighbor = (k > 0 && k < layers).then_some((c * layers + k, LocalFace::Bottom));
                block.push_face(owner, owner_face, neighbor, horizontal(k));
            }
        }
        block.rebuild_geometry(nodes);
        block
    }

    fn push_face(
        &mut self,
        owner: usize,
        owner_face: LocalFace,
        neighbor: Option<(usize, LocalFace)>,
        class: C,
    ) {
        let id = self.faces.len();
        self.element_faces[owner][owner_face.index()] = id;
        if let Some((e, lf)) = neighbor {
            self.element_faces[e][lf.index()] = id;
        }
        self.faces.push(Face {
            owner,
            owner_face,
            neighbor,
            class,
            normal: [0.0; 2],
            length: 0.0,
        });
    }
}

/// Parameters of [`build_layered_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub x0: f64,
    pub x1: f64,
    pub columns: usize,
    pub layers: usize,
    pub darcy_layers: usize,
    pub darcy_bottom: f64,
    pub tags: [BoundaryTag; 2],
    pub darcy_lateral: DarcyBoundary,
    pub darcy_base: DarcyBoundary,
}

impl MeshSpec {
    /// Uniform mesh on refinement level `j`: `2^(j+1)` columns and `2^j`
    /// layers in each block.
    pub fn level(j: u32, x0: f64, x1: f64, darcy_bottom: f64) -> Self {
        Self {
            x0,
            x1,
            columns: 1 << (j + 1),
            layers: 1 << j,
            darcy_layers: 1 << j,
            darcy_bottom,
            tags: [BoundaryTag::Inflow, BoundaryTag::Inflow],
            darcy_lateral: DarcyBoundary::Dirichlet,
            darcy_base: DarcyBoundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredSliceMesh {
    pub surface: SurfaceMesh1D,
    /// Interface height at each surface node.
    pub zb: Vec<f64>,
    /// Smoothed free surface at each surface node.
    pub xi_s: Vec<f64>,
    pub free: LayerBlock<FaceClass>,
    pub darcy: LayerBlock<DarcyFaceClass>,
    /// Vertical extent used to scale the degenerate-depth guard.
    pub domain_height: f64,
}

fn sigma_layers(bottom: f64, top: f64, layers: usize, out: &mut [f64]) {
    for (k, z) in out.iter_mut().enumerate() {
        *z = bottom + (k as f64 / layers as f64) * (top - bottom);
    }
    out[layers] = top;
}

pub fn build_layered_mesh(
    spec: &MeshSpec,
    zb: impl Fn(f64) -> f64,
    elevation: impl Fn(f64) -> f64,
) -> Result<LayeredSliceMesh> {
    for (what, v) in [("layer count", spec.layers), ("Darcy layer count", spec.darcy_layers)] {
        if v == 0 {
            return Err(Error::NonPositive { what, value: 0.0 });
        }
    }
    let surface = SurfaceMesh1D::uniform(spec.x0, spec.x1, spec.columns, spec.tags)?;
    let zb: Vec<f64> = surface.nodes.iter().map(|&x| zb(x)).collect();
    let xi_s: Vec<f64> = surface.nodes.iter().map(|&x| elevation(x)).collect();
    let n = surface.elements();

    for (i, &x) in surface.nodes.iter().enumerate() {
        if !(xi_s[i] > zb[i]) {
            return Err(Error::DegenerateDepth {
                x,
                depth: xi_s[i] - zb[i],
            });
        }
        if !(zb[i] > spec.darcy_bottom) {
            return Err(Error::DegenerateDepth {
                x,
                depth: zb[i] - spec.darcy_bottom,
            });
        }
    }

    let (l, ld) = (spec.layers, spec.darcy_layers);
    let mut zf = vec![0.0; (n + 1) * (l + 1)];
    let mut zd = vec![0.0; (n + 1) * (ld + 1)];
    for i in 0..=n {
        sigma_layers(zb[i], xi_s[i], l, &mut zf[i * (l + 1)..(i + 1) * (l + 1)]);
        sigma_layers(spec.darcy_bottom, zb[i], ld, &mut zd[i * (ld + 1)..(i + 1) * (ld + 1)]);
    }

    let tags = spec.tags;
    let tag_class = |t: BoundaryTag| match t {
        BoundaryTag::Inflow => FaceClass::Inflow,
        BoundaryTag::Outflow => FaceClass::Outflow,
    };
    let free = LayerBlock::connect(
        &surface.nodes,
        l,
        zf,
        |i| match i {
            0 => tag_class(tags[0]),
            i if i == n => tag_class(tags[1]),
            _ => FaceClass::Lateral,
        },
        |k| match k {
            0 => FaceClass::Bottom,
            k if k == l => FaceClass::Top,
            _ => FaceClass::Horizontal,
        },
    );
    let darcy_class = |b: DarcyBoundary| match b {
        DarcyBoundary::Dirichlet => DarcyFaceClass::Dirichlet,
        DarcyBoundary::Neumann => DarcyFaceClass::Neumann,
    };
    let darcy = LayerBlock::connect(
        &surface.nodes,
        ld,
        zd,
        |i| {
            if i == 0 || i == n {
                darcy_class(spec.darcy_lateral)
            } else {
                DarcyFaceClass::Interior
            }
        },
        |k| match k {
            0 => darcy_class(spec.darcy_base),
            k if k == ld => DarcyFaceClass::Top,
            _ => DarcyFaceClass::Interior,
        },
    );

    let top = xi_s.iter().cloned().fold(f64::MIN, f64::max);
    Ok(LayeredSliceMesh {
        surface,
        zb,
        xi_s,
        free,
        darcy,
        domain_height: top - spec.darcy_bottom,
    })
}

impl LayeredSliceMesh {
    pub fn columns(&self) -> usize {
        self.surface.elements()
    }

    pub fn layers(&self) -> usize {
        self.free.layers
    }

    /// Free-flow bottom face of `column` and the Darcy top face under it.
    pub fn interface_faces(&self, column: usize) -> (usize, usize) {
        let f = self.free.element_faces[self.free.element(column, 0)][LocalFace::Bottom.index()];
        let d = self.darcy.element_faces[self.darcy.element(column, self.darcy.layers - 1)]
            [LocalFace::Top.index()];
        (f, d)
    }

    /// Writes elements and faces of both blocks as CSV.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "kind,block,id,class,a,b,x0,z0,x1,z1,x2,z2,x3,z3")?;
        let blocks: [(&str, &[ColumnQuad]); 2] =
            [("free", &self.free.elements), ("darcy", &self.darcy.elements)];
        for (name, elems) in blocks {
            for (e, k) in elems.iter().enumerate() {
                let v = k.vertices();
                writeln!(
                    w,
                    "element,{name},{e},,,,{},{},{},{},{},{},{},{}",
                    v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1], v[3][0], v[3][1]
                )?;
            }
        }
        let nb = |n: Option<(usize, LocalFace)>| n.map_or(String::new(), |(e, _)| e.to_string());
        for (i, f) in self.free.faces.iter().enumerate() {
            let [p, q] = self.free.elements[f.owner].face_endpoints(f.owner_face);
            writeln!(
                w,
                "face,free,{i},{:?},{},{},{},{},{},{},,,,",
                f.class,
                f.owner,
                nb(f.neighbor),
                p[0],
                p[1],
                q[0],
                q[1]
            )?;
        }
        for (i, f) in self.darcy.faces.iter().enumerate() {
            let [p, q] = self.darcy.elements[f.owner].face_endpoints(f.owner_face);
            writeln!(
                w,
                "face,darcy,{i},{:?},{},{},{},{},{},{},,,,",
                f.class,
                f.owner,
                nb(f.neighbor),
                p[0],
                p[1],
                q[0],
                q[1]
            )?;
        }
        Ok(())
    }
}

/// Continuous piecewise-linear surface from a discontinuous elevation field:
/// the mean of the two adjacent traces at interior nodes, `xi_hat` at
/// inflow-tagged end nodes, and the one adjacent trace at other end nodes.
pub fn smooth_free_surface(
    xi: &DGField,
    surface: &SurfaceMesh1D,
    xi_hat: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let n = surface.elements();
    let basis = Basis1D::new(xi.order);
    let (left, right) = (basis.eval(-1.0), basis.eval(1.0));
    let trace = |c: usize, phi: &[f64]| -> f64 {
        phi.iter().zip(xi.comp(c, 0)).map(|(a, b)| a * b).sum()
    };
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        out[i] = 0.5 * (trace(i - 1, &right) + trace(i, &left));
    }
    out[0] = match surface.tags[0] {
        BoundaryTag::Inflow => xi_hat(surface.nodes[0]),
        BoundaryTag::Outflow => trace(0, &left),
    };
    out[n] = match surface.tags[1] {
        BoundaryTag::Inflow => xi_hat(surface.nodes[n]),
        BoundaryTag::Outflow => trace(n - 1, &right),
    };
    out
}

/// Moves the free-flow block to the new smoothed surface with uniform sigma
/// layers. The Darcy block is untouched.
pub fn move_mesh(mesh: &mut LayeredSliceMesh, xi_s: &[f64]) -> Result<()> {
    assert_eq!(xi_s.len(), mesh.surface.nodes.len());
    let guard = 1e-12 * mesh.domain_height;
    for (i, (&s, &b)) in xi_s.iter().zip(&mesh.zb).enumerate() {
        if !(s - b >= guard) {
            return Err(Error::DegenerateDepth {
                x: mesh.surface.nodes[i],
                depth: s - b,
            });
        }
    }
    let l = mesh.free.layers;
    for i in 0..xi_s.len() {
        sigma_layers(mesh.zb[i], xi_s[i], l, &mut mesh.free.z[i * (l + 1)..(i + 1) * (l + 1)]);
    }
    mesh.xi_s.copy_from_slice(xi_s);
    mesh.free.rebuild_geometry(&mesh.surface.nodes);
    Ok(())
}
