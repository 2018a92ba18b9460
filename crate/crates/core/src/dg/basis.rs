//! Orthonormal modal Legendre bases on [-1, 1] and tensor products on
//! [-1, 1]^2, plus tabulations at quadrature points.

use super::quadrature::{QuadRule, QuadRule2D};

/// Fills `val[n]` (and `der[n]` if given) with the orthonormal Legendre
/// polynomials `sqrt((2n+1)/2) P_n(s)` for `n = 0..=order`.
pub fn legendre_orthonormal(order: usize, s: f64, val: &mut [f64], der: Option<&mut [f64]>) {
    debug_assert!(val.len() > order);
    let mut p = [0.0f64; 2];
    let mut dp = [0.0f64; 2];
    let raw = |n: usize, pn: f64, dpn: f64, val: &mut [f64], der: &mut Option<&mut [f64]>| {
        let scale = ((2 * n + 1) as f64 / 2.0).sqrt();
        val[n] = scale * pn;
        if let Some(d) = der.as_deref_mut() {
            d[n] = scale * dpn;
        }
    };
    let mut der = der;
    p[0] = 1.0;
    dp[0] = 0.0;
    raw(0, 1.0, 0.0, val, &mut der);
    if order == 0 {
        return;
    }
    p[1] = s;
    dp[1] = 1.0;
    raw(1, s, 1.0, val, &mut der);
    for n in 1..order {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * s * p[1] - nf * p[0]) / (nf + 1.0);
        // P'_{n+1} = P'_{n-1} + (2n+1) P_n
        let dnext = dp[0] + (2.0 * nf + 1.0) * p[1];
        p = [p[1], next];
        dp = [dp[1], dnext];
        raw(n + 1, next, dnext, val, &mut der);
    }
}

/// Modal basis of polynomial order `order` on the reference interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis1D {
    pub order: usize,
}

impl Basis1D {
    pub fn new(order: usize) -> Self {
        Self { order }
    }

    pub fn modes(&self) -> usize {
        self.order + 1
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.modes()];
        legendre_orthonormal(self.order, s, &mut v, None);
        v
    }

    pub fn eval_with_derivative(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.modes()];
        let mut d = vec![0.0; self.modes()];
        legendre_orthonormal(self.order, s, &mut v, Some(&mut d));
        (v, d)
    }

    pub fn tabulate(&self, points: &[f64]) -> Tab1D {
        let m = self.modes();
        let mut val = vec![0.0; points.len() * m];
        let mut der = vec![0.0; points.len() * m];
        for (q, &s) in points.iter().enumerate() {
            legendre_orthonormal(
                self.order,
                s,
                &mut val[q * m..(q + 1) * m],
                Some(&mut der[q * m..(q + 1) * m]),
            );
        }
        Tab1D {
            modes: m,
            points: points.len(),
            val,
            der,
        }
    }
}

/// Tensor-product modal basis `phi_{ij}(s, t) = L_i(s) L_j(t)`, `i, j <= order`.
/// Mode `m = i * (order + 1) + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis2D {
    pub order: usize,
}

impl Basis2D {
    pub fn new(order: usize) -> Self {
        Self { order }
    }

    pub fn modes(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    /// Values and reference gradients at one point.
    pub fn eval_into(&self, s: f64, t: f64, val: &mut [f64], ds: &mut [f64], dt: &mut [f64]) {
        let n = self.order + 1;
        let mut ls = [0.0; 16];
        let mut lt = [0.0; 16];
        let mut dls = [0.0; 16];
        let mut dlt = [0.0; 16];
        assert!(n <= 16, "order too high for stack tabulation");
        legendre_orthonormal(self.order, s, &mut ls, Some(&mut dls));
        legendre_orthonormal(self.order, t, &mut lt, Some(&mut dlt));
        for i in 0..n {
            for j in 0..n {
                let m = i * n + j;
                val[m] = ls[i] * lt[j];
                ds[m] = dls[i] * lt[j];
                dt[m] = ls[i] * dlt[j];
            }
        }
    }

    pub fn eval(&self, s: f64, t: f64) -> Vec<f64> {
        let m = self.modes();
        let (mut v, mut a, mut b) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        self.eval_into(s, t, &mut v, &mut a, &mut b);
        v
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tab2D {
        let m = self.modes();
        let mut tab = Tab2D {
            modes: m,
            points: points.len(),
            val: vec![0.0; points.len() * m],
            ds: vec![0.0; points.len() * m],
            dt: vec![0.0; points.len() * m],
        };
        for (q, p) in points.iter().enumerate() {
            let r = q * m..(q + 1) * m;
            self.eval_into(
                p[0],
                p[1],
                &mut tab.val[r.clone()],
                &mut tab.ds[r.clone()],
                &mut tab.dt[r],
            );
        }
        tab
    }

    /// Traces on the four local faces at the points of `line`.
    pub fn tabulate_faces(&self, line: &QuadRule) -> [Tab2D; 4] {
        LocalFace::ALL.map(|f| {
            let pts: Vec<[f64; 2]> = line.points.iter().map(|&s| f.reference_point(s)).collect();
            self.tabulate(&pts)
        })
    }

    pub fn tabulate_volume(&self, rule: &QuadRule2D) -> Tab2D {
        self.tabulate(&rule.points)
    }
}

/// Basis values (and derivatives) at a set of points, `[point * modes + mode]`.
#[derive(Debug, Clone)]
pub struct Tab1D {
    pub modes: usize,
    pub points: usize,
    pub val: Vec<f64>,
    pub der: Vec<f64>,
}

impl Tab1D {
    #[inline]
    pub fn row(&self, q: usize) -> &[f64] {
        &self.val[q * self.modes..(q + 1) * self.modes]
    }

    #[inline]
    pub fn der_row(&self, q: usize) -> &[f64] {
        &self.der[q * self.modes..(q + 1) * self.modes]
    }

    #[inline]
    pub fn eval(&self, q: usize, coeffs: &[f64]) -> f64 {
        dot(self.row(q), coeffs)
    }

    pub fn eval_all(&self, coeffs: &[f64], out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate().take(self.points) {
            *o = self.eval(q, coeffs);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tab2D {
    pub modes: usize,
    pub points: usize,
    pub val: Vec<f64>,
    pub ds: Vec<f64>,
    pub dt: Vec<f64>,
}

impl Tab2D {
    #[inline]
    pub fn row(&self, q: usize) -> &[f64] {
        &self.val[q * self.modes..(q + 1) * self.modes]
    }

    #[inline]
    pub fn ds_row(&self, q: usize) -> &[f64] {
        &self.ds[q * self.modes..(q + 1) * self.modes]
    }

    #[inline]
    pub fn dt_row(&self, q: usize) -> &[f64] {
        &self.dt[q * self.modes..(q + 1) * self.modes]
    }

    #[inline]
    pub fn eval(&self, q: usize, coeffs: &[f64]) -> f64 {
        dot(self.row(q), coeffs)
    }

    /// Evaluates `coeffs` at every point into `out`.
    pub fn eval_all(&self, coeffs: &[f64], out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate().take(self.points) {
            *o = self.eval(q, coeffs);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Local faces of the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalFace {
    /// s = -1
    Left,
    /// s = +1
    Right,
    /// t = -1
    Bottom,
    /// t = +1
    Top,
}

impl LocalFace {
    pub const ALL: [LocalFace; 4] = [
        LocalFace::Left,
        LocalFace::Right,
        LocalFace::Bottom,
        LocalFace::Top,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Reference point for face parameter `r` in [-1, 1]. Lateral faces are
    /// parametrized by `t`, horizontal faces by `s`, so both elements sharing a
    /// face see the same parameter at the same physical point.
    pub fn reference_point(self, r: f64) -> [f64; 2] {
        match self {
            LocalFace::Left => [-1.0, r],
            LocalFace::Right => [1.0, r],
            LocalFace::Bottom => [r, -1.0],
            LocalFace::Top => [r, 1.0],
        }
    }

    pub fn opposite(self) -> LocalFace {
        match self {
            LocalFace::Left => LocalFace::Right,
            LocalFace::Right => LocalFace::Left,
            LocalFace::Bottom => LocalFace::Top,
            LocalFace::Top => LocalFace::Bottom,
        }
    }

    pub fn is_lateral(self) -> bool {
        matches!(self, LocalFace::Left | LocalFace::Right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_on_reference_interval() {
        let basis = Basis1D::new(6);
        let rule = QuadRule::gauss_legendre(8);
        for i in 0..basis.modes() {
            for j in 0..basis.modes() {
                let g = rule.integrate(|s| basis.eval(s)[i] * basis.eval(s)[j]);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-13, "({i},{j}) -> {g}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let basis = Basis1D::new(5);
        let h = 1e-6;
        for &s in &[-0.9, -0.3, 0.0, 0.4, 0.95] {
            let (_, d) = basis.eval_with_derivative(s);
            let fp = basis.eval(s + h);
            let fm = basis.eval(s - h);
            for n in 0..basis.modes() {
                let fd = (fp[n] - fm[n]) / (2.0 * h);
                assert!((fd - d[n]).abs() < 1e-7, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn tensor_basis_orthonormal() {
        let basis = Basis2D::new(3);
        let rule = QuadRule2D::for_degree(8);
        let tab = basis.tabulate_volume(&rule);
        let m = basis.modes();
        for i in 0..m {
            for j in 0..m {
                let g: f64 = (0..rule.len())
                    .map(|q| rule.weights[q] * tab.row(q)[i] * tab.row(q)[j])
                    .sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mode_count() {
        assert_eq!(Basis1D::new(4).modes(), 5);
        assert_eq!(Basis2D::new(2).modes(), 9);
    }
}
