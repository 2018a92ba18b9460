//! Mass matrices of column quads for tensor-product orthonormal bases.

use super::basis::Basis1D;
use super::geometry::ColumnQuad;
use super::linalg::{cholesky_in_place, cholesky_solve};
use super::quadrature::QuadRule;
use crate::error::Result;

/// `int L_i L_j s ds` for the 1D basis of the given order.
pub fn s_moment(order: usize) -> Vec<f64> {
    let n = order + 1;
    let rule = QuadRule::for_degree(2 * order + 1);
    let basis = Basis1D::new(order);
    let mut out = vec![0.0; n * n];
    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
        let v = basis.eval(s);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += w * v[i] * v[j] * s;
            }
        }
    }
    out
}

/// Mass matrix of a column quad for the `U` basis: `a (K (x) I)` with
/// `K = c0 I + c1 S` where `dz/dt = c0 + c1 s`.
#[derive(Debug, Clone)]
pub struct ColumnMass {
    n: usize,
    a: f64,
    factor: Vec<f64>,
}

impl ColumnMass {
    pub fn new(k: &ColumnQuad, s_moment: &[f64], n: usize) -> Result<Self> {
        let h0 = k.zhi[0] - k.zlo[0];
        let h1 = k.zhi[1] - k.zlo[1];
        let (c0, c1) = (0.25 * (h0 + h1), 0.25 * (h1 - h0));
        let mut factor: Vec<f64> = s_moment.iter().map(|v| c1 * v).collect();
        for i in 0..n {
            factor[i * n + i] += c0;
        }
        cholesky_in_place(&mut factor, n)?;
        Ok(Self {
            n,
            a: k.half_width(),
            factor,
        })
    }

    /// Solves `M x = r` in place; `r` holds `n * n` modes `i * n + j`.
    pub fn solve(&self, r: &mut [f64]) {
        let n = self.n;
        let mut col = [0.0; 16];
        for j in 0..n {
            for i in 0..n {
                col[i] = r[i * n + j] / self.a;
            }
            cholesky_solve(&self.factor, n, &mut col[..n]);
            for i in 0..n {
                r[i * n + j] = col[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        // Rebuild K from its factor: K = L L^T.
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    let mut kim = 0.0;
                    for l in 0..=i.min(m) {
                        kim += self.factor[i * n + l] * self.factor[m * n + l];
                    }
                    s += kim * x[m * n + j];
                }
                out[i * n + j] = self.a * s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::{Basis2D, QuadRule2D};

    #[test]
    fn matches_quadrature_mass() {
        let k = ColumnQuad {
            x0: 1.0,
            x1: 3.0,
            zlo: [0.0, 0.5],
            zhi: [2.0, 1.5],
        };
        for order in 0..4 {
            let n = order + 1;
            let mass = ColumnMass::new(&k, &s_moment(order), n).unwrap();
            let rule = QuadRule2D::for_degree(2 * order + 2);
            let tab = Basis2D::new(order).tabulate_volume(&rule);
            let m = n * n;
            let x: Vec<f64> = (0..m).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut y = vec![0.0; m];
            mass.apply(&x, &mut y);
            for i in 0..m {
                let mut r = 0.0;
                for (q, p) in rule.points.iter().enumerate() {
                    let det = k.factors(p[0], p[1]).det();
                    r += rule.weights[q] * det * tab.eval(q, &x) * tab.row(q)[i];
                }
                assert!((r - y[i]).abs() < 1e-13, "order {order}: {r} vs {}", y[i]);
            }
            let mut z = y.clone();
            mass.solve(&mut z);
            for i in 0..m {
                assert!((z[i] - x[i]).abs() < 1e-12);
            }
        }
    }
}
