//! Gauss rules and the corner-aware composite quadrature used for all
//! weighted integrals.
//!
//! Triangles that touch a corner are integrated in collapsed (Duffy)
//! coordinates with geometric rings of ratio 1/2 towards the corner; the ring
//! sequence stops once two successive rings change the result by less than
//! the tolerance, and a geometric tail correction is added.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{dist, Point};

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    /// Nodes on `[0, 1]`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pnm1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = 0.5 * (1.0 - x);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }
}

/// Cached Gauss–Legendre rule with `n` points (`n <= 24`).
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=24).map(GaussLegendre::new).collect());
    &rules[n - 1]
}

/// Quadrature on the reference triangle in barycentric coordinates; weights sum to 1.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed Gauss rule with `n x n` points, exact for total degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let g = gauss_legendre(n);
        let mut bary = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (iu, &u) in g.nodes.iter().enumerate() {
            for (iv, &v) in g.nodes.iter().enumerate() {
                bary.push([1.0 - u, u * (1.0 - v), u * v]);
                weights.push(2.0 * u * g.weights[iu] * g.weights[iv]);
            }
        }
        Self { bary, weights }
    }
}

pub fn triangle_rule(n: usize) -> &'static TriangleRule {
    static RULES: OnceLock<Vec<TriangleRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=12).map(TriangleRule::collapsed).collect());
    &rules[n - 1]
}

#[inline]
fn bary_combine(b: &[[f64; 3]; 3], w: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = w[0] * b[0][k] + w[1] * b[1][k] + w[2] * b[2][k];
    }
    out
}

#[inline]
fn point_combine(p: &[Point; 3], w: [f64; 3]) -> Point {
    [
        w[0] * p[0][0] + w[1] * p[1][0] + w[2] * p[2][0],
        w[0] * p[0][1] + w[1] * p[1][1] + w[2] * p[2][1],
    ]
}

fn tri_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
}

fn tri_diam(p: &[Point; 3]) -> f64 {
    dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
}

/// Settings of the corner-aware composite rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerQuadrature {
    /// Relative agreement required between successive ring depths.
    pub tol: f64,
    pub max_depth: usize,
    /// Gauss points per direction on each ring / sub-triangle.
    pub order: usize,
    /// Non-touching triangles are split while `diam > near_ratio * dist(corner)`.
    pub near_ratio: f64,
}

impl Default for CornerQuadrature {
    fn default() -> Self {
        Self { tol: 1e-8, max_depth: 200, order: 6, near_ratio: 0.5 }
    }
}

/// Sub-triangle of an element: physical vertices and their element barycentrics.
#[derive(Clone, Copy)]
struct Piece {
    pts: [Point; 3],
    bary: [[f64; 3]; 3],
}

impl CornerQuadrature {
    /// Integrates `f` over the triangle `verts`.
    ///
    /// `f(bary, x, out)` adds nothing itself; it must overwrite `out` (length
    /// `n_out`) with integrand values at the point with element barycentrics
    /// `bary` and coordinates `x`. Returns the integrals and the deepest ring
    /// level used.
    pub fn integrate_triangle<F>(&self, verts: [Point; 3], corners: &[Point], n_out: usize, f: &mut F) -> Result<(Vec<f64>, usize)>
    where
        F: FnMut([f64; 3], Point, &mut [f64]),
    {
        let mut acc = vec![0.0; n_out];
        let mut buf = vec![0.0; n_out];
        let piece = Piece { pts: verts, bary: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
        let depth = self.piece(piece, corners, 0, &mut acc, &mut buf, f)?;
        Ok((acc, depth))
    }

    fn touching(&self, p: &Piece, corners: &[Point]) -> Vec<(usize, usize)> {
        let scale = tri_diam(&p.pts);
        let mut out = Vec::new();
        for (k, v) in p.pts.iter().enumerate() {
            for (j, c) in corners.iter().enumerate() {
                if dist(*v, *c) <= 1e-12 * scale.max(1e-300) {
                    out.push((k, j));
                }
            }
        }
        out
    }

    fn piece<F>(&self, p: Piece, corners: &[Point], level: usize, acc: &mut [f64], buf: &mut [f64], f: &mut F) -> Result<usize>
    where
        F: FnMut([f64; 3], Point, &mut [f64]),
    {
        let touch = self.touching(&p, corners);
        if touch.len() >= 2 || (touch.is_empty() && level < 8 && self.needs_split(&p, corners)) {
            let mut depth = 0;
            for child in split4(&p) {
                depth = depth.max(self.piece(child, corners, level + 1, acc, buf, f)?);
            }
            return Ok(depth);
        }
        if let Some(&(k, _)) = touch.first() {
            return self.duffy_rings(&p, k, acc, buf, f);
        }
        let rule = triangle_rule(self.order);
        let area = tri_area(&p.pts);
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let eb = bary_combine(&p.bary, *b);
            let x = point_combine(&p.pts, *b);
            f(eb, x, buf);
            for (a, v) in acc.iter_mut().zip(buf.iter()) {
                *a += w * area * v;
            }
        }
        Ok(0)
    }

    fn needs_split(&self, p: &Piece, corners: &[Point]) -> bool {
        if corners.is_empty() {
            return false;
        }
        let d = corners
            .iter()
            .map(|c| crate::geometry::dist_to_triangle(*c, p.pts))
            .fold(f64::INFINITY, f64::min);
        tri_diam(&p.pts) > self.near_ratio * d
    }

    fn duffy_rings<F>(&self, p: &Piece, k: usize, acc: &mut [f64], buf: &mut [f64], f: &mut F) -> Result<usize>
    where
        F: FnMut([f64; 3], Point, &mut [f64]),
    {
        let (ia, ib) = ((k + 1) % 3, (k + 2) % 3);
        let (pc, pa, pb) = (p.pts[k], p.pts[ia], p.pts[ib]);
        let (bc, ba, bb) = (p.bary[k], p.bary[ia], p.bary[ib]);
        let jac = 2.0 * tri_area(&p.pts);
        let g = gauss_legendre(self.order);
        // the angular direction sees the full smooth variation of r^β, radial rings do not
        let ga = gauss_legendre((2 * self.order).min(24));
        let n = acc.len();
        let mut total = vec![0.0; n];
        let mut ring = vec![0.0; n];
        let mut prev = vec![0.0; n];
        let mut ratio = vec![1.0; n];
        let mut quiet = 0;
        // below this radius the sample points are no longer distinct from the corner
        let floor = 1e-13 * (1.0 + pc[0].abs().max(pc[1].abs())) / tri_diam(&p.pts);
        for depth in 0..self.max_depth {
            let hi = 0.5f64.powi(depth as i32);
            let lo = 0.5 * hi;
            if hi < floor {
                if ratio.iter().all(|q| (0.0..0.9).contains(q)) {
                    for i in 0..n {
                        acc[i] += total[i] + prev[i] * ratio[i] / (1.0 - ratio[i]);
                    }
                    return Ok(depth);
                }
                return Err(Error::QuadratureUnderResolved { depth });
            }
            ring.iter_mut().for_each(|r| *r = 0.0);
            for (iu, &su) in g.nodes.iter().enumerate() {
                let u = lo + (hi - lo) * su;
                let wu = (hi - lo) * g.weights[iu] * u * jac;
                for (iv, &v) in ga.nodes.iter().enumerate() {
                    let w = wu * ga.weights[iv];
                    let x = [
                        pc[0] + u * ((pa[0] - pc[0]) + v * (pb[0] - pa[0])),
                        pc[1] + u * ((pa[1] - pc[1]) + v * (pb[1] - pa[1])),
                    ];
                    let mut eb = [0.0; 3];
                    for c in 0..3 {
                        eb[c] = bc[c] + u * ((ba[c] - bc[c]) + v * (bb[c] - ba[c]));
                    }
                    f(eb, x, buf);
                    for (r, val) in ring.iter_mut().zip(buf.iter()) {
                        *r += w * val;
                    }
                }
            }
            if ring.iter().any(|r| !r.is_finite()) {
                return Err(Error::QuadratureUnderResolved { depth });
            }
            for (t, r) in total.iter_mut().zip(&ring) {
                *t += r;
            }
            let scale = total.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let change = ring.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if depth >= 3 && change <= self.tol * scale {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= 2 {
                for i in 0..n {
                    let q = if prev[i] != 0.0 { ring[i] / prev[i] } else { 0.0 };
                    let tail = if (0.0..0.99).contains(&q) { ring[i] * q / (1.0 - q) } else { 0.0 };
                    acc[i] += total[i] + tail;
                }
                return Ok(depth + 1);
            }
            for i in 0..n {
                ratio[i] = if prev[i] != 0.0 { ring[i] / prev[i] } else { 0.0 };
            }
            prev.copy_from_slice(&ring);
        }
        Err(Error::QuadratureUnderResolved { depth: self.max_depth })
    }

    /// Integrates `f(t, x, out)` over the segment `[a, b]` (arc-length measure), `t ∈ [0, 1]`.
    pub fn integrate_segment<F>(&self, a: Point, b: Point, corners: &[Point], n_out: usize, f: &mut F) -> Result<(Vec<f64>, usize)>
    where
        F: FnMut(f64, Point, &mut [f64]),
    {
        let len = dist(a, b);
        let scale = len.max(1e-300);
        let at_a = corners.iter().any(|c| dist(*c, a) <= 1e-12 * scale);
        let at_b = corners.iter().any(|c| dist(*c, b) <= 1e-12 * scale);
        let mut acc = vec![0.0; n_out];
        let mut buf = vec![0.0; n_out];
        let mut depth = 0;
        // each half is integrated towards its own endpoint
        for (t0, t1, singular) in [(0.5, 0.0, at_a), (0.5, 1.0, at_b)] {
            depth = depth.max(self.half_segment(a, b, len, t0, t1, singular, &mut acc, &mut buf, f)?);
        }
        Ok((acc, depth))
    }

    #[allow(clippy::too_many_arguments)]
    fn half_segment<F>(&self, a: Point, b: Point, len: f64, t0: f64, t1: f64, singular: bool, acc: &mut [f64], buf: &mut [f64], f: &mut F) -> Result<usize>
    where
        F: FnMut(f64, Point, &mut [f64]),
    {
        let g = gauss_legendre(8);
        let n = acc.len();
        let eval = |lo: f64, hi: f64, out: &mut [f64], buf: &mut [f64], f: &mut F| {
            // s ∈ [lo, hi] is the relative distance from the singular end t1
            out.iter_mut().for_each(|o| *o = 0.0);
            for (i, &sx) in g.nodes.iter().enumerate() {
                let s = lo + (hi - lo) * sx;
                let t = t1 + (t0 - t1) * s;
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                f(t, x, buf);
                let w = (hi - lo) * g.weights[i] * (t0 - t1).abs() * len;
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o += w * v;
                }
            }
        };
        if !singular {
            let mut out = vec![0.0; n];
            eval(0.0, 1.0, &mut out, buf, f);
            for (x, o) in acc.iter_mut().zip(&out) {
                *x += o;
            }
            return Ok(0);
        }
        let mut total = vec![0.0; n];
        let mut ring = vec![0.0; n];
        let mut prev = vec![0.0; n];
        let mut ratio = vec![1.0; n];
        let mut quiet = 0;
        for depth in 0..self.max_depth {
            let hi = 0.5f64.powi(depth as i32);
            eval(0.5 * hi, hi, &mut ring, buf, f);
            if ring.iter().any(|r| !r.is_finite()) {
                return Err(Error::QuadratureUnderResolved { depth });
            }
            for (t, r) in total.iter_mut().zip(&ring) {
                *t += r;
            }
            let scale = total.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let change = ring.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if depth >= 3 && change <= self.tol * scale {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= 2 {
                for i in 0..n {
                    let q = if prev[i] != 0.0 { ring[i] / prev[i] } else { 0.0 };
                    let tail = if (0.0..0.99).contains(&q) { ring[i] * q / (1.0 - q) } else { 0.0 };
                    acc[i] += total[i] + tail;
                }
                return Ok(depth + 1);
            }
            for i in 0..n {
                ratio[i] = if prev[i] != 0.0 { ring[i] / prev[i] } else { 0.0 };
            }
            prev.copy_from_slice(&ring);
        }
        Err(Error::QuadratureUnderResolved { depth: self.max_depth })
    }
}

fn split4(p: &Piece) -> [Piece; 4] {
    let mid = |i: usize, j: usize| -> (Point, [f64; 3]) {
        let x = [(p.pts[i][0] + p.pts[j][0]) / 2.0, (p.pts[i][1] + p.pts[j][1]) / 2.0];
        let mut b = [0.0; 3];
        for k in 0..3 {
            b[k] = (p.bary[i][k] + p.bary[j][k]) / 2.0;
        }
        (x, b)
    };
    let (m01, b01) = mid(0, 1);
    let (m12, b12) = mid(1, 2);
    let (m20, b20) = mid(2, 0);
    [
        Piece { pts: [p.pts[0], m01, m20], bary: [p.bary[0], b01, b20] },
        Piece { pts: [m01, p.pts[1], m12], bary: [b01, p.bary[1], b12] },
        Piece { pts: [m20, m12, p.pts[2]], bary: [b20, b12, p.bary[2]] },
        Piece { pts: [m12, m20, m01], bary: [b12, b20, b01] },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=12 {
            let g = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let s: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert_relative_eq!(s, 1.0 / (deg as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn triangle_rule_exactness() {
        // ∫_T x^a y^b over the unit right triangle = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        let rule = triangle_rule(4);
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                let s: f64 = rule
                    .bary
                    .iter()
                    .zip(&rule.weights)
                    .map(|(l, w)| w * 0.5 * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                assert_relative_eq!(s, fact(a) * fact(b) / fact(a + b + 2), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn singular_weight_on_corner_triangle() {
        // ∫ r^{2β} over the right triangle with legs 1 at the origin, polar closed form:
        // ∫_0^{π/2} (1/(cos φ + sin φ))^{2β+2} dφ / (2β+2)
        let q = CornerQuadrature::default();
        for beta in [-0.5, 0.3, 0.7] {
            let (v, _) = q
                .integrate_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0.0, 0.0]], 1, &mut |_, x, out| {
                    out[0] = (x[0] * x[0] + x[1] * x[1]).powf(beta);
                })
                .unwrap();
            let g = gauss_legendre(24);
            let mut reference = 0.0;
            let m = 64;
            for k in 0..m {
                for (t, w) in g.nodes.iter().zip(&g.weights) {
                    let phi = (k as f64 + t) / m as f64 * std::f64::consts::FRAC_PI_2;
                    reference += w / m as f64 * std::f64::consts::FRAC_PI_2 * (phi.cos() + phi.sin()).powf(-(2.0 * beta + 2.0));
                }
            }
            reference /= 2.0 * beta + 2.0;
            assert_relative_eq!(v[0], reference, max_relative = 1e-9);
        }
    }

    #[test]
    fn non_integrable_weight_is_reported() {
        let q = CornerQuadrature::default();
        let r = q.integrate_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0.0, 0.0]], 1, &mut |_, x, out| {
            out[0] = 1.0 / (x[0] * x[0] + x[1] * x[1]);
        });
        assert!(matches!(r, Err(Error::QuadratureUnderResolved { .. })));
    }

    #[test]
    fn segment_with_singular_ends() {
        let q = CornerQuadrature::default();
        // ∫_0^1 t^{-1/2} (1-t)^{-1/2} dt = π
        let (v, _) = q
            .integrate_segment([0.0, 0.0], [1.0, 0.0], &[[0.0, 0.0], [1.0, 0.0]], 1, &mut |_, x, out| {
                out[0] = (x[0] * (1.0 - x[0])).powf(-0.5);
            })
            .unwrap();
        assert_relative_eq!(v[0], std::f64::consts::PI, max_relative = 1e-8);
    }
}
