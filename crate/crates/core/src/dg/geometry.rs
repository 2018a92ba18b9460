//! Element maps. Free-flow and Darcy elements are both "column quads":
//! quadrilaterals with two vertical sides whose bottom and top edges are
//! straight lines. The reference map
//!
//! ```text
//! x = x0 + (1 + s) a,            a = (x1 - x0) / 2
//! z = zlo(s) + (1 + t)/2 (zhi(s) - zlo(s))
//! ```
//!
//! is bilinear with `dx/dt = 0`, so `det J = a * dz/dt` is linear in `s`.

use super::basis::LocalFace;

/// One surface element `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub x0: f64,
    pub x1: f64,
}

impl Interval {
    pub fn new(x0: f64, x1: f64) -> Self {
        Self { x0, x1 }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.x1 - self.x0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn map(&self, s: f64) -> f64 {
        self.x0 + (1.0 + s) * self.half_width()
    }
}

/// Column quadrilateral with vertical left/right sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnQuad {
    pub x0: f64,
    pub x1: f64,
    /// Bottom edge heights at `x0`, `x1`.
    pub zlo: [f64; 2],
    /// Top edge heights at `x0`, `x1`.
    pub zhi: [f64; 2],
}

/// Jacobian entries of the reference map at one point: `dx/ds = a`,
/// `dz/ds = b`, `dz/dt = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapFactors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MapFactors {
    #[inline]
    pub fn det(&self) -> f64 {
        self.a * self.c
    }

    /// `det J * grad(phi)` from reference derivatives; polynomial in (s, t).
    #[inline]
    pub fn scaled_gradient(&self, d_s: f64, d_t: f64) -> [f64; 2] {
        [self.c * d_s - self.b * d_t, self.a * d_t]
    }

    /// Physical gradient from reference derivatives.
    #[inline]
    pub fn gradient(&self, d_s: f64, d_t: f64) -> [f64; 2] {
        let g = self.scaled_gradient(d_s, d_t);
        let det = self.det();
        [g[0] / det, g[1] / det]
    }
}

/// Geometry of a face at one parameter value: outward unit normal and the
/// length element `ds/dr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePoint {
    pub normal: [f64; 2],
    pub ds: f64,
}

impl ColumnQuad {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.x1 - self.x0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    fn lower(&self, s: f64) -> f64 {
        self.zlo[0] + 0.5 * (1.0 + s) * (self.zlo[1] - self.zlo[0])
    }

    fn upper(&self, s: f64) -> f64 {
        self.zhi[0] + 0.5 * (1.0 + s) * (self.zhi[1] - self.zhi[0])
    }

    pub fn map(&self, s: f64, t: f64) -> [f64; 2] {
        let zl = self.lower(s);
        let zh = self.upper(s);
        [
            self.x0 + (1.0 + s) * self.half_width(),
            zl + 0.5 * (1.0 + t) * (zh - zl),
        ]
    }

    #[inline]
    pub fn factors(&self, s: f64, t: f64) -> MapFactors {
        let dlo = 0.5 * (self.zlo[1] - self.zlo[0]);
        let dhi = 0.5 * (self.zhi[1] - self.zhi[0]);
        MapFactors {
            a: self.half_width(),
            b: dlo + 0.5 * (1.0 + t) * (dhi - dlo),
            c: 0.5 * (self.upper(s) - self.lower(s)),
        }
    }

    /// Slope `dz/ds` of the bottom (`Bottom`) or top (`Top`) edge.
    fn edge_slope(&self, face: LocalFace) -> f64 {
        match face {
            LocalFace::Bottom => 0.5 * (self.zlo[1] - self.zlo[0]),
            LocalFace::Top => 0.5 * (self.zhi[1] - self.zhi[0]),
            _ => 0.0,
        }
    }

    pub fn face_point(&self, face: LocalFace, r: f64) -> FacePoint {
        match face {
            LocalFace::Left => FacePoint {
                normal: [-1.0, 0.0],
                ds: 0.5 * (self.zhi[0] - self.zlo[0]),
            },
            LocalFace::Right => FacePoint {
                normal: [1.0, 0.0],
                ds: 0.5 * (self.zhi[1] - self.zlo[1]),
            },
            LocalFace::Bottom | LocalFace::Top => {
                let _ = r;
                let a = self.half_width();
                let m = self.edge_slope(face);
                let len = (a * a + m * m).sqrt();
                let normal = if face == LocalFace::Bottom {
                    [m / len, -a / len]
                } else {
                    [-m / len, a / len]
                };
                FacePoint { normal, ds: len }
            }
        }
    }

    /// Outward unit normal of a (straight) face.
    pub fn face_normal(&self, face: LocalFace) -> [f64; 2] {
        self.face_point(face, 0.0).normal
    }

    pub fn face_length(&self, face: LocalFace) -> f64 {
        2.0 * self.face_point(face, 0.0).ds
    }

    pub fn face_endpoints(&self, face: LocalFace) -> [[f64; 2]; 2] {
        match face {
            LocalFace::Left => [[self.x0, self.zlo[0]], [self.x0, self.zhi[0]]],
            LocalFace::Right => [[self.x1, self.zlo[1]], [self.x1, self.zhi[1]]],
            LocalFace::Bottom => [[self.x0, self.zlo[0]], [self.x1, self.zlo[1]]],
            LocalFace::Top => [[self.x0, self.zhi[0]], [self.x1, self.zhi[1]]],
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.width() * ((self.zhi[0] - self.zlo[0]) + (self.zhi[1] - self.zlo[1]))
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            [self.x0, self.zlo[0]],
            [self.x1, self.zlo[1]],
            [self.x1, self.zhi[1]],
            [self.x0, self.zhi[0]],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid() -> ColumnQuad {
        ColumnQuad {
            x0: 2.0,
            x1: 5.0,
            zlo: [0.1, 0.4],
            zhi: [2.0, 3.5],
        }
    }

    #[test]
    fn map_hits_vertices() {
        let k = trapezoid();
        assert_eq!(k.map(-1.0, -1.0), [2.0, 0.1]);
        assert_eq!(k.map(1.0, -1.0), [5.0, 0.4]);
        assert_eq!(k.map(1.0, 1.0), [5.0, 3.5]);
        assert_eq!(k.map(-1.0, 1.0), [2.0, 2.0]);
    }

    #[test]
    fn factors_match_finite_differences() {
        let k = trapezoid();
        let h = 1e-7;
        for &(s, t) in &[(0.3, -0.2), (-0.7, 0.9), (0.0, 0.0)] {
            let f = k.factors(s, t);
            let dxs = (k.map(s + h, t)[0] - k.map(s - h, t)[0]) / (2.0 * h);
            let dzs = (k.map(s + h, t)[1] - k.map(s - h, t)[1]) / (2.0 * h);
            let dzt = (k.map(s, t + h)[1] - k.map(s, t - h)[1]) / (2.0 * h);
            assert!((f.a - dxs).abs() < 1e-7);
            assert!((f.b - dzs).abs() < 1e-7);
            assert!((f.c - dzt).abs() < 1e-7);
        }
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let k = trapezoid();
        let centre = k.map(0.0, 0.0);
        for f in LocalFace::ALL {
            let n = k.face_normal(f);
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
            let [p, _] = k.face_endpoints(f);
            let out = (p[0] - centre[0]) * n[0] + (p[1] - centre[1]) * n[1];
            assert!(out > 0.0, "{f:?}");
        }
        assert_eq!(k.face_normal(LocalFace::Left)[1], 0.0);
        assert_eq!(k.face_normal(LocalFace::Right)[1], 0.0);
    }

    #[test]
    fn face_lengths() {
        let k = trapezoid();
        assert!((k.face_length(LocalFace::Left) - 1.9).abs() < 1e-14);
        assert!((k.face_length(LocalFace::Right) - 3.1).abs() < 1e-14);
        assert!((k.face_length(LocalFace::Bottom) - (9.0f64 + 0.09).sqrt()).abs() < 1e-14);
    }
}
