//! Exact bivariate polynomials, used to derive manufactured forcing terms.

use crate::fem::{re, ScalarFunction, VectorFunction, C64};
use crate::geometry::Point;

/// `Σ c[i][j] x^i y^j`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2 {
    c: Vec<Vec<f64>>,
}

impl Poly2 {
    pub fn constant(a: f64) -> Self {
        Self { c: vec![vec![a]] }
    }
    pub fn x() -> Self {
        Self { c: vec![vec![0.0], vec![1.0]] }
    }
    pub fn y() -> Self {
        Self { c: vec![vec![0.0, 1.0]] }
    }

    fn coef(&self, i: usize, j: usize) -> f64 {
        self.c.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0)
    }

    fn dims(&self) -> (usize, usize) {
        (self.c.len(), self.c.iter().map(Vec::len).max().unwrap_or(0))
    }

    fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self { c: (0..nx).map(|i| (0..ny).map(|j| f(i, j)).collect()).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        let (a, b) = (self.dims(), o.dims());
        Self::from_fn(a.0.max(b.0), a.1.max(b.1), |i, j| self.coef(i, j) + o.coef(i, j))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { c: self.c.iter().map(|r| r.iter().map(|v| v * a).collect()).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (self.dims(), o.dims());
        if a.0 == 0 || b.0 == 0 {
            return Self::default();
        }
        let mut out = Self::from_fn(a.0 + b.0 - 1, a.1 + b.1 - 1, |_, _| 0.0);
        for (i, r) in self.c.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                for (k, s) in o.c.iter().enumerate() {
                    for (l, w) in s.iter().enumerate() {
                        out.c[i + k][j + l] += v * w;
                    }
                }
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn dx(&self) -> Self {
        let (nx, ny) = self.dims();
        Self::from_fn(nx.saturating_sub(1), ny, |i, j| (i + 1) as f64 * self.coef(i + 1, j))
    }

    pub fn dy(&self) -> Self {
        let (nx, ny) = self.dims();
        Self::from_fn(nx, ny.saturating_sub(1), |i, j| (j + 1) as f64 * self.coef(i, j + 1))
    }

    pub fn laplacian(&self) -> Self {
        self.dx().dx().add(&self.dy().dy())
    }

    pub fn eval(&self, p: Point) -> f64 {
        let mut s = 0.0;
        for r in self.c.iter().rev() {
            let mut t = 0.0;
            for v in r.iter().rev() {
                t = t * p[1] + v;
            }
            s = s * p[0] + t;
        }
        s
    }
}

pub struct PolyScalar(pub Poly2);

impl ScalarFunction for PolyScalar {
    fn value(&self, x: Point) -> C64 {
        re(self.0.eval(x))
    }
    fn gradient(&self, x: Point) -> [C64; 2] {
        [re(self.0.dx().eval(x)), re(self.0.dy().eval(x))]
    }
}

pub struct PolyVector(pub [Poly2; 2]);

impl VectorFunction for PolyVector {
    fn value(&self, x: Point) -> [C64; 2] {
        [re(self.0[0].eval(x)), re(self.0[1].eval(x))]
    }
    fn gradient(&self, x: Point) -> [[C64; 2]; 2] {
        let g = |p: &Poly2| [re(p.dx().eval(x)), re(p.dy().eval(x))];
        [g(&self.0[0]), g(&self.0[1])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_derivatives() {
        // (x + 2y)^2 = x^2 + 4xy + 4y^2
        let p = Poly2::x().add(&Poly2::y().scale(2.0)).pow(2);
        let q = [0.3, -1.2];
        assert!((p.eval(q) - (0.3f64 - 2.4).powi(2)).abs() < 1e-14);
        assert!((p.dx().eval(q) - 2.0 * (0.3 - 2.4)).abs() < 1e-14);
        assert!((p.dy().eval(q) - 4.0 * (0.3 - 2.4)).abs() < 1e-14);
        assert_eq!(p.laplacian().eval(q), 10.0);
        assert_eq!(Poly2::constant(3.0).dx().eval(q), 0.0);
        assert_eq!(p.sub(&p).eval(q), 0.0);
    }
}
