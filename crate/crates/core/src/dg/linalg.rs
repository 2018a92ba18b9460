//! Small dense factorizations for element-local systems (row-major storage).

use crate::error::{Error, Result};

/// In-place Cholesky factor `A = L L^T` of an `n x n` SPD matrix; the lower
/// triangle of `a` receives `L`.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SingularLocalSystem { pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// LU factorization with partial pivoting for general square matrices.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= 1e-14 * scale {
                return Err(Error::SingularLocalSystem { pivot: pv });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                a[i * n + k] = f;
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`, overwriting `b` with `x`. `work` must hold `n` values.
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            work[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let mut s = work[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * work[k];
            }
            work[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = work[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * work[k];
            }
            work[i] = s / self.lu[i * n + i];
        }
        b[..n].copy_from_slice(&work[..n]);
    }
}

/// `y = A x` for row-major `A`.
pub fn matvec(a: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        y[i] = a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let n = 3;
        let a = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let mut l = a.clone();
        cholesky_in_place(&mut l, n).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        matvec(&a, n, &x, &mut b);
        cholesky_solve(&l, n, &mut b);
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let n = 3;
        let a = vec![0.0, 2.0, 1.0, 1.0, -1.0, 4.0, 3.0, 0.5, -2.0];
        let lu = Lu::factor(a.clone(), n).unwrap();
        let x = [0.3, 1.7, -0.4];
        let mut b = vec![0.0; 3];
        matvec(&a, n, &x, &mut b);
        let mut w = vec![0.0; 3];
        lu.solve_in_place(&mut b, &mut w);
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        assert!(Lu::factor(vec![1.0, 2.0, 2.0, 4.0], 2).is_err());
    }
}
