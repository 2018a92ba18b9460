use super::basis::{legendre_orthonormal, Basis1D, Basis2D};
use super::geometry::{ColumnQuad, Interval};
use super::linalg::{cholesky_in_place, cholesky_solve};
use super::quadrature::{QuadRule, QuadRule2D};
use crate::error::{Error, Result};

/// Which mesh a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Host {
    Surface,
    FreeFlow,
    Darcy,
}

impl Host {
    pub fn dim(self) -> usize {
        match self {
            Host::Surface => 1,
            Host::FreeFlow | Host::Darcy => 2,
        }
    }
}

/// Per-element modal coefficients of one (possibly vector-valued) unknown.
/// Layout: `coeffs[(element * components + component) * modes + mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    pub name: String,
    pub order: usize,
    pub host: Host,
    pub components: usize,
    pub modes: usize,
    pub coeffs: Vec<f64>,
}

impl DGField {
    pub fn zeros(name: &str, host: Host, order: usize, elements: usize, components: usize) -> Self {
        let modes = match host.dim() {
            1 => Basis1D::new(order).modes(),
            _ => Basis2D::new(order).modes(),
        };
        Self {
            name: name.to_string(),
            order,
            host,
            components,
            modes,
            coeffs: vec![0.0; elements * components * modes],
        }
    }

    pub fn elements(&self) -> usize {
        self.coeffs.len() / (self.components * self.modes)
    }

    /// Coefficients of all components of element `e`.
    #[inline]
    pub fn element(&self, e: usize) -> &[f64] {
        let n = self.components * self.modes;
        &self.coeffs[e * n..(e + 1) * n]
    }

    #[inline]
    pub fn element_mut(&mut self, e: usize) -> &mut [f64] {
        let n = self.components * self.modes;
        &mut self.coeffs[e * n..(e + 1) * n]
    }

    #[inline]
    pub fn comp(&self, e: usize, c: usize) -> &[f64] {
        let start = (e * self.components + c) * self.modes;
        &self.coeffs[start..start + self.modes]
    }

    #[inline]
    pub fn comp_mut(&mut self, e: usize, c: usize) -> &mut [f64] {
        let start = (e * self.components + c) * self.modes;
        &mut self.coeffs[start..start + self.modes]
    }

    /// Value of component `c` at reference point `r` of element `e`. For
    /// surface fields only `r[0]` is used.
    pub fn eval(&self, e: usize, c: usize, r: [f64; 2]) -> Result<f64> {
        if e >= self.elements() {
            return Err(Error::UnknownElement {
                element: e,
                count: self.elements(),
            });
        }
        let coeffs = self.comp(e, c);
        let v = match self.host.dim() {
            1 => Basis1D::new(self.order).eval(r[0]),
            _ => Basis2D::new(self.order).eval(r[0], r[1]),
        };
        Ok(v.iter().zip(coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }
}

/// Geometry of one element as seen by projection and error routines.
pub trait ElementGeometry {
    const DIM: usize;
    /// Reference point, physical point, and `weight * det J` for each point of
    /// a rule exact to `degree` on the reference element.
    fn quadrature(&self, degree: usize) -> Vec<([f64; 2], [f64; 2], f64)>;
}

impl ElementGeometry for Interval {
    const DIM: usize = 1;

    fn quadrature(&self, degree: usize) -> Vec<([f64; 2], [f64; 2], f64)> {
        let rule = QuadRule::for_degree(degree);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| ([s, 0.0], [self.map(s), 0.0], w * self.half_width()))
            .collect()
    }
}

impl ElementGeometry for ColumnQuad {
    const DIM: usize = 2;

    fn quadrature(&self, degree: usize) -> Vec<([f64; 2], [f64; 2], f64)> {
        // det J is linear in s: one extra degree.
        let rule = QuadRule2D::for_degree(degree + 1);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, &w)| (*p, self.map(p[0], p[1]), w * self.factors(p[0], p[1]).det()))
            .collect()
    }
}

fn basis_values(dim: usize, order: usize, r: [f64; 2]) -> Vec<f64> {
    if dim == 1 {
        let mut v = vec![0.0; order + 1];
        legendre_orthonormal(order, r[0], &mut v, None);
        v
    } else {
        Basis2D::new(order).eval(r[0], r[1])
    }
}

/// Element-wise L2 projection of `f(x, z)` (surface fields ignore `z`).
pub fn project_l2<G: ElementGeometry>(
    name: &str,
    host: Host,
    f: impl Fn(f64, f64) -> f64,
    elements: &[G],
    order: usize,
) -> Result<DGField> {
    assert_eq!(host.dim(), G::DIM, "host dimension must match geometry");
    let mut field = DGField::zeros(name, host, order, elements.len(), 1);
    let m = field.modes;
    let degree = 2 * order + 4;
    let mut mass = vec![0.0; m * m];
    for (e, geom) in elements.iter().enumerate() {
        mass.iter_mut().for_each(|v| *v = 0.0);
        let rhs = field.comp_mut(e, 0);
        for (r, x, w) in geom.quadrature(degree) {
            let phi = basis_values(G::DIM, order, r);
            let fv = f(x[0], x[1]);
            for i in 0..m {
                rhs[i] += w * fv * phi[i];
                for j in 0..m {
                    mass[i * m + j] += w * phi[i] * phi[j];
                }
            }
        }
        cholesky_in_place(&mut mass, m)?;
        cholesky_solve(&mass, m, rhs);
    }
    Ok(field)
}

/// `||field - exact||_{L2}` over all elements for component `c`.
pub fn l2_error<G: ElementGeometry>(
    field: &DGField,
    c: usize,
    exact: impl Fn(f64, f64) -> f64,
    elements: &[G],
) -> f64 {
    let degree = 2 * field.order + 4;
    let mut sum = 0.0;
    for (e, geom) in elements.iter().enumerate() {
        let coeffs = field.comp(e, c);
        for (r, x, w) in geom.quadrature(degree) {
            let phi = basis_values(G::DIM, field.order, r);
            let uh: f64 = phi.iter().zip(coeffs).map(|(a, b)| a * b).sum();
            let d = uh - exact(x[0], x[1]);
            sum += w * d * d;
        }
    }
    sum.sqrt()
}

/// `||field||^2_{L2}` for component `c`.
pub fn l2_norm_squared<G: ElementGeometry>(field: &DGField, c: usize, elements: &[G]) -> f64 {
    let e = l2_error(field, c, |_, _| 0.0, elements);
    e * e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quads() -> Vec<ColumnQuad> {
        vec![
            ColumnQuad {
                x0: 0.0,
                x1: 2.0,
                zlo: [0.0, 0.2],
                zhi: [1.0, 1.5],
            },
            ColumnQuad {
                x0: 2.0,
                x1: 3.0,
                zlo: [0.2, 0.1],
                zhi: [1.5, 1.1],
            },
        ]
    }

    #[test]
    fn constant_projects_exactly() {
        let f = project_l2("c", Host::FreeFlow, |_, _| 3.0, &quads(), 2).unwrap();
        for e in 0..2 {
            for r in [[0.1, -0.4], [-1.0, 1.0], [0.7, 0.7]] {
                assert!((f.eval(e, 0, r).unwrap() - 3.0).abs() < 1e-13);
            }
        }
        assert!(l2_error(&f, 0, |_, _| 3.0, &quads()) < 1e-12);
    }

    #[test]
    fn linear_reproduced_on_interval() {
        let ivs = [Interval::new(0.0, 4.0)];
        let f = project_l2("x", Host::Surface, |x, _| x, &ivs, 1).unwrap();
        assert!((f.eval(0, 0, [0.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
        assert!((f.eval(0, 0, [1.0, 0.0]).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn polynomial_of_field_degree_is_reproduced_on_trapezoids() {
        // Bilinear maps do not preserve total degree in general, but functions
        // of x alone (and z on flat-layered columns) lie in the mapped space.
        let f = project_l2("p", Host::FreeFlow, |x, _| 1.0 + x - 0.3 * x * x, &quads(), 2).unwrap();
        assert!(l2_error(&f, 0, |x, _| 1.0 + x - 0.3 * x * x, &quads()) < 1e-12);
    }

    #[test]
    fn unit_error_on_unit_area() {
        let k = [ColumnQuad {
            x0: 0.0,
            x1: 1.0,
            zlo: [0.0, 0.0],
            zhi: [1.0, 1.0],
        }];
        let f = DGField::zeros("z", Host::FreeFlow, 1, 1, 1);
        assert!((l2_error(&f, 0, |_, _| 1.0, &k) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_element_is_an_error() {
        let f = DGField::zeros("z", Host::Surface, 1, 2, 1);
        assert!(matches!(f.eval(5, 0, [0.0, 0.0]), Err(Error::UnknownElement { .. })));
    }
}
