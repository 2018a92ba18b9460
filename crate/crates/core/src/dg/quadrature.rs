//! Gauss–Legendre rules on the reference interval [-1, 1] and their tensor
//! products on the reference square.

use std::f64::consts::PI;

/// A one-dimensional quadrature rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// `n`-point Gauss–Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Roots are symmetric; solve for the upper half by Newton's method.
        for i in 0..n.div_ceil(2) {
            let mut s = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, s);
                dp = d;
                let step = p / d;
                s -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, s);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - s * s) * dp * dp);
            points[i] = -s;
            points[n - 1 - i] = s;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Self { points, weights }
    }

    /// Smallest Gauss–Legendre rule integrating polynomials of `degree` exactly.
    pub fn for_degree(degree: usize) -> Self {
        Self::gauss_legendre(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Highest polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        2 * self.points.len() - 1
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// Legendre polynomial `P_n(s)` and its derivative.
fn legendre_with_derivative(n: usize, s: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = s;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * s * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (s * p1 - p0) / (s * s - 1.0);
    (p1, d)
}

/// Tensor-product rule on [-1, 1]^2. Point `q = i * n + j` sits at
/// `(points[i], points[j])`, i.e. the second coordinate runs fastest.
#[derive(Debug, Clone)]
pub struct QuadRule2D {
    pub line: QuadRule,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule2D {
    pub fn tensor(line: QuadRule) -> Self {
        let n = line.len();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push([line.points[i], line.points[j]]);
                weights.push(line.weights[i] * line.weights[j]);
            }
        }
        Self {
            line,
            points,
            weights,
        }
    }

    pub fn for_degree(degree: usize) -> Self {
        Self::tensor(QuadRule::for_degree(degree))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per direction.
    pub fn line_len(&self) -> usize {
        self.line.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_up_to_design_degree() {
        for n in 1..=10 {
            let rule = QuadRule::gauss_legendre(n);
            for m in 0..=rule.degree() {
                let exact = if m % 2 == 1 {
                    0.0
                } else {
                    2.0 / (m as f64 + 1.0)
                };
                let got = rule.integrate(|s| s.powi(m as i32));
                assert!((got - exact).abs() < 1e-14, "n={n} m={m}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn x_squared_is_two_thirds() {
        let rule = QuadRule::for_degree(2);
        assert!((rule.integrate(|s| s * s) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_positive_and_sum_to_two() {
        for n in 1..=12 {
            let rule = QuadRule::gauss_legendre(n);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-14);
            assert!(rule.points.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn tensor_rule_integrates_products() {
        let rule = QuadRule2D::for_degree(5);
        let got: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[0].powi(4) * p[1].powi(2))
            .sum();
        assert!((got - 0.4 * 2.0 / 3.0).abs() < 1e-14);
    }
}
