//! Polygonal domains with labelled corners.
//!
//! A [`PolygonDomain`] stores its vertices counter-clockwise. Edge `j` runs
//! from vertex `j` to vertex `j + 1` (cyclically) and corner `j` sits at
//! vertex `j` with interior opening `openings[j]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Distance from `p` to the segment `[a, b]`.
pub fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, lerp(a, b, t))
}

/// Distance from `p` to the closed triangle `t`.
pub fn dist_to_triangle(p: Point, t: [Point; 3]) -> f64 {
    let s0 = cross(sub(t[1], t[0]), sub(p, t[0]));
    let s1 = cross(sub(t[2], t[1]), sub(p, t[1]));
    let s2 = cross(sub(t[0], t[2]), sub(p, t[2]));
    let inside = (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) || (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0);
    if inside {
        return 0.0;
    }
    dist_to_segment(p, t[0], t[1])
        .min(dist_to_segment(p, t[1], t[2]))
        .min(dist_to_segment(p, t[2], t[0]))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonDomain {
    vertices: Vec<Point>,
    openings: Vec<f64>,
}

impl PolygonDomain {
    /// Builds a polygon from an ordered vertex list (either orientation).
    pub fn new(vertices: &[Point]) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!("polygon needs at least 3 vertices, got {n}")));
        }
        for v in vertices {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidInput("non-finite vertex coordinate".into()));
            }
        }
        for j in 0..n {
            if vertices[j] == vertices[(j + 1) % n] {
                return Err(Error::InvalidInput(format!("vertices {j} and {} coincide", (j + 1) % n)));
            }
        }
        let mut verts = vertices.to_vec();
        let signed_area: f64 = (0..n).map(|j| cross(verts[j], verts[(j + 1) % n])).sum::<f64>() / 2.0;
        if signed_area < 0.0 {
            // keep vertex 0 in place so corner labels stay recognisable
            verts[1..].reverse();
        }

        let scale = verts.iter().map(|v| v[0].abs().max(v[1].abs())).fold(1.0, f64::max);
        let mut openings = Vec::with_capacity(n);
        for j in 0..n {
            let prev = verts[(j + n - 1) % n];
            let next = verts[(j + 1) % n];
            let to_next = sub(next, verts[j]);
            let to_prev = sub(prev, verts[j]);
            // interior lies to the left of each edge; sweep counter-clockwise from
            // the outgoing edge to the incoming one
            let mut a = cross(to_next, to_prev).atan2(dot(to_next, to_prev));
            if a < 0.0 {
                a += 2.0 * PI;
            }
            let collinear = cross(to_next, to_prev).abs() <= 1e-14 * scale * scale;
            if collinear && dot(to_next, to_prev) > 0.0 {
                return Err(Error::DegenerateCorner(j));
            }
            if collinear {
                a = PI;
            }
            if a <= 0.0 || a >= 2.0 * PI {
                return Err(Error::DegenerateCorner(j));
            }
            openings.push(a);
        }

        for i in 0..n {
            for k in (i + 1)..n {
                let adjacent = k == i + 1 || (i == 0 && k == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(verts[i], verts[(i + 1) % n], verts[k], verts[(k + 1) % n]) {
                    return Err(Error::SelfIntersecting(i, k));
                }
            }
        }

        let turning: f64 = openings.iter().map(|a| PI - a).sum();
        if (turning - 2.0 * PI).abs() > 1e-8 {
            return Err(Error::SelfIntersecting(0, 0));
        }
        Ok(Self { vertices: verts, openings })
    }

    pub fn unit_square() -> Self {
        Self::new(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).expect("valid square")
    }

    /// The L-shaped domain with its reentrant corner at `(1, 1)` (corner 3).
    pub fn l_shape() -> Self {
        Self::new(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]).expect("valid L-shape")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn openings(&self) -> &[f64] {
        &self.openings
    }

    pub fn num_corners(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge(&self, j: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[j], self.vertices[(j + 1) % n])
    }

    pub fn edge_length(&self, j: usize) -> f64 {
        let (a, b) = self.edge(j);
        dist(a, b)
    }

    /// r_j(x): distance from `x` to corner `j`.
    pub fn distance_to_corner(&self, j: usize, x: Point) -> f64 {
        dist(self.vertices[j], x)
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n).map(|j| cross(self.vertices[j], self.vertices[(j + 1) % n])).sum::<f64>() / 2.0
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max(dist(*a, *b));
            }
        }
        d
    }

    /// Default grading radius R_j: a quarter of the shorter edge meeting at corner `j`.
    pub fn grading_radius(&self, j: usize) -> f64 {
        let n = self.vertices.len();
        0.25 * self.edge_length(j).min(self.edge_length((j + n - 1) % n))
    }

    /// Index of the edge containing `p` (within `tol`), if any.
    pub fn edge_containing(&self, p: Point, tol: f64) -> Option<usize> {
        (0..self.vertices.len()).find(|&j| {
            let (a, b) = self.edge(j);
            dist_to_segment(p, a, b) <= tol
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        // winding-number test; boundary points count as inside
        let n = self.vertices.len();
        let scale = self.diameter();
        if (0..n).any(|j| {
            let (a, b) = self.edge(j);
            dist_to_segment(p, a, b) <= 1e-12 * scale
        }) {
            return true;
        }
        let mut wn = 0i32;
        for j in 0..n {
            let (a, b) = self.edge(j);
            if a[1] <= p[1] {
                if b[1] > p[1] && orient(a, b, p) > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && orient(a, b, p) < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    /// Applies the rigid motion `x -> R(theta) x + shift`.
    pub fn transformed(&self, theta: f64, shift: Point) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        let v: Vec<Point> = self
            .vertices
            .iter()
            .map(|p| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]])
            .collect();
        Self::new(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_has_right_angles() {
        let d = PolygonDomain::unit_square();
        for a in d.openings() {
            assert_abs_diff_eq!(*a, PI / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn l_shape_has_one_reentrant_corner() {
        let d = PolygonDomain::l_shape();
        let reentrant: Vec<usize> = (0..6).filter(|&j| d.openings()[j] > PI).collect();
        assert_eq!(reentrant, vec![3]);
        assert_abs_diff_eq!(d.openings()[3], 1.5 * PI, epsilon = 1e-14);
        for j in [0, 1, 2, 4, 5] {
            assert_abs_diff_eq!(d.openings()[j], PI / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn straight_vertex_is_accepted() {
        let d = PolygonDomain::new(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(d.openings()[1], PI, epsilon = 1e-14);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let d = PolygonDomain::new(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(d.area() > 0.0);
        assert_eq!(d.vertices()[0], [0.0, 0.0]);
        assert_eq!(d.vertices()[1], [1.0, 0.0]);
    }

    #[test]
    fn rejects_bowtie_and_backtracking() {
        let bowtie = PolygonDomain::new(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bowtie, Err(Error::SelfIntersecting(_, _))));
        let slit = PolygonDomain::new(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(slit, Err(Error::DegenerateCorner(_)) | Err(Error::SelfIntersecting(_, _))));
        let short = PolygonDomain::new(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(short, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn corner_distances() {
        let d = PolygonDomain::unit_square();
        assert_eq!(d.distance_to_corner(0, [0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(d.distance_to_corner(0, [1.0, 1.0]), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn openings_invariant_under_rigid_motion() {
        let d = PolygonDomain::l_shape();
        for (k, theta) in [0.3, 1.7, -2.9, 4.0].iter().enumerate() {
            let moved = d.transformed(*theta, [k as f64 * 3.1, -1.25]).unwrap();
            for (a, b) in d.openings().iter().zip(moved.openings()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn turning_sum() {
        for d in [PolygonDomain::unit_square(), PolygonDomain::l_shape()] {
            let s: f64 = d.openings().iter().map(|a| PI - a).sum();
            assert_abs_diff_eq!(s, 2.0 * PI, epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn corner_distance_is_lipschitz(ax in 0.0..2.0f64, ay in 0.0..1.0f64, bx in 0.0..2.0f64, by in 0.0..1.0f64, j in 0usize..6) {
            let d = PolygonDomain::l_shape();
            let (a, b) = ([ax, ay], [bx, by]);
            let diff = (d.distance_to_corner(j, a) - d.distance_to_corner(j, b)).abs();
            proptest::prop_assert!(diff <= dist(a, b) + 1e-14);
        }
    }
}
