//! Conforming triangular meshes with per-corner grading.
//!
//! Meshes are produced by a deterministic pipeline: best-angle ear clipping of
//! the polygon, then newest-vertex bisection. Uniform refinement runs until
//! every element diameter is at most `h`; grading then refines elements
//! within the radius `R_j` of a graded corner until
//! `diam(T) <= h * r_T^(1 - 1/mu_j)` (corner-touching elements: `h^mu_j`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, dist, dist_to_triangle, dot, sub, Point, PolygonDomain};
use crate::quadrature::CornerQuadrature;

pub const MESH_HEADER: &str = "POLYSTOKES-MESH v1";

/// A boundary edge with the index of the polygon side it lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    /// Counter-clockwise vertex triples.
    triangles: Vec<[usize; 3]>,
    /// Weight centres P_j.
    corners: Vec<Point>,
    grading: Vec<f64>,
    facets: Vec<Facet>,
    // derived
    corner_nodes: Vec<Option<usize>>,
    corner_tags: Vec<usize>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    boundary_node: Vec<bool>,
    boundary_edge: Vec<bool>,
}

/// Options for [`generate_graded_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    pub h: f64,
    /// Grading exponent per corner (`>= 1`); empty means 1 everywhere.
    pub grading: Vec<f64>,
    /// Grading radius per corner; empty means [`PolygonDomain::grading_radius`].
    pub radii: Vec<f64>,
    pub min_angle_deg: f64,
}

impl MeshOptions {
    pub fn uniform(h: f64) -> Self {
        Self { h, grading: Vec::new(), radii: Vec::new(), min_angle_deg: 20.0 }
    }

    pub fn graded(h: f64, grading: Vec<f64>) -> Self {
        Self { h, grading, radii: Vec::new(), min_angle_deg: 20.0 }
    }
}

impl Mesh {
    /// Builds a mesh from raw tables. Triangles are reoriented counter-clockwise.
    pub fn from_parts(nodes: Vec<Point>, mut triangles: Vec<[usize; 3]>, corners: Vec<Point>, grading: Vec<f64>, facets: Vec<Facet>) -> Result<Self> {
        for t in &mut triangles {
            for &v in t.iter() {
                if v >= nodes.len() {
                    return Err(Error::MeshFormat(format!("triangle references node {v} of {}", nodes.len())));
                }
            }
            let a = cross(sub(nodes[t[1]], nodes[t[0]]), sub(nodes[t[2]], nodes[t[0]]));
            if a == 0.0 {
                return Err(Error::MeshFormat(format!("zero-area triangle {:?}", t)));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
        }
        if grading.len() != corners.len() {
            return Err(Error::MeshFormat("grading length differs from corner count".into()));
        }
        let mut mesh = Self {
            nodes,
            triangles,
            corners,
            grading,
            facets,
            corner_nodes: Vec::new(),
            corner_tags: Vec::new(),
            edges: Vec::new(),
            tri_edges: Vec::new(),
            boundary_node: Vec::new(),
            boundary_edge: Vec::new(),
        };
        mesh.build_topology()?;
        Ok(mesh)
    }

    fn build_topology(&mut self) -> Result<()> {
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut counts: Vec<u32> = Vec::new();
        let mut tri_edges = Vec::with_capacity(self.triangles.len());
        for t in &self.triangles {
            let mut te = [0; 3];
            for k in 0..3 {
                // local edge k is opposite local vertex k
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    counts.push(0);
                    edges.len() - 1
                });
                counts[id] += 1;
                te[k] = id;
            }
            tri_edges.push(te);
        }
        if counts.iter().any(|&c| c > 2) {
            return Err(Error::MeshFormat("non-manifold edge".into()));
        }
        let boundary_edge: Vec<bool> = counts.iter().map(|&c| c == 1).collect();
        let mut boundary_node = vec![false; self.nodes.len()];
        for (e, &b) in edges.iter().zip(&boundary_edge) {
            if b {
                boundary_node[e[0]] = true;
                boundary_node[e[1]] = true;
            }
        }
        let scale = self.nodes.iter().fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        self.corner_nodes = self
            .corners
            .iter()
            .map(|c| self.nodes.iter().position(|p| dist(*p, *c) <= 1e-12 * scale))
            .collect();
        self.corner_tags = self
            .nodes
            .iter()
            .map(|p| {
                let mut best = 0;
                for (j, c) in self.corners.iter().enumerate() {
                    if dist(*p, *c) < dist(*p, self.corners[best]) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        self.edges = edges;
        self.tri_edges = tri_edges;
        self.boundary_edge = boundary_edge;
        self.boundary_node = boundary_node;
        Ok(())
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn corners(&self) -> &[Point] {
        &self.corners
    }
    pub fn grading(&self) -> &[f64] {
        &self.grading
    }
    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }
    pub fn corner_nodes(&self) -> &[Option<usize>] {
        &self.corner_nodes
    }
    /// Nearest corner index for every node.
    pub fn corner_tags(&self) -> &[usize] {
        &self.corner_tags
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn tri_edges(&self) -> &[[usize; 3]] {
        &self.tri_edges
    }
    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.boundary_node[i]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices_of(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let p = self.vertices_of(t);
        0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.vertices_of(t);
        dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
    }

    pub fn min_angle(&self, t: usize) -> f64 {
        triangle_min_angle(self.vertices_of(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Gradients of the barycentric coordinates on triangle `t`.
    pub fn bary_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.vertices_of(t);
        let det = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            // ∇λ_k is the inward normal of the opposite edge scaled by 1/height
            g[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        g
    }

    pub fn point_at(&self, t: usize, bary: [f64; 3]) -> Point {
        let p = self.vertices_of(t);
        [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ]
    }

    /// Triangle owning boundary edge `e` and the local index of that edge.
    pub fn boundary_owner(&self, e: usize) -> Option<(usize, usize)> {
        // linear scan is fine: called once per facet per integral
        self.edge_owners().get(&e).copied()
    }

    fn edge_owners(&self) -> BTreeMap<usize, (usize, usize)> {
        let mut m = BTreeMap::new();
        for (t, te) in self.tri_edges.iter().enumerate() {
            for (k, &e) in te.iter().enumerate() {
                if self.boundary_edge[e] {
                    m.insert(e, (t, k));
                }
            }
        }
        m
    }

    /// Boundary edges with owning triangle, local edge index and facet label.
    pub fn boundary_edges(&self) -> Vec<(usize, usize, usize, usize)> {
        let owners = self.edge_owners();
        let labels: BTreeMap<(usize, usize), usize> = self
            .facets
            .iter()
            .map(|f| ((f.nodes[0].min(f.nodes[1]), f.nodes[0].max(f.nodes[1])), f.label))
            .collect();
        owners
            .into_iter()
            .map(|(e, (t, k))| {
                let key = (self.edges[e][0], self.edges[e][1]);
                (e, t, k, labels.get(&key).copied().unwrap_or(usize::MAX))
            })
            .collect()
    }

    /// Product weight ∏_j r_j(x)^{exps[j]}.
    pub fn weight(&self, exps: &[f64], x: Point) -> f64 {
        let mut w = 1.0;
        for (c, e) in self.corners.iter().zip(exps) {
            if *e != 0.0 {
                w *= dist(*c, x).powf(*e);
            }
        }
        w
    }

    /// Corner-aware integration of `f(t, bary, x, out)` over every element
    /// separately; `singular` lists the points where the integrand may blow up.
    /// Returns per-element integrals and the deepest corner ring used.
    pub fn integrate_elements<F>(&self, quad: &CornerQuadrature, singular: &[Point], n_out: usize, f: F) -> Result<(Vec<Vec<f64>>, usize)>
    where
        F: Fn(usize, [f64; 3], Point, &mut [f64]) + Sync,
    {
        let per: Vec<(Vec<f64>, usize)> = (0..self.num_triangles())
            .into_par_iter()
            .map(|t| quad.integrate_triangle(self.vertices_of(t), singular, n_out, &mut |b, x, out| f(t, b, x, out)))
            .collect::<Result<_>>()?;
        let depth = per.iter().map(|p| p.1).max().unwrap_or(0);
        Ok((per.into_iter().map(|p| p.0).collect(), depth))
    }

    /// Sum of [`Mesh::integrate_elements`], reduced in element order.
    pub fn integrate<F>(&self, quad: &CornerQuadrature, singular: &[Point], n_out: usize, f: F) -> Result<(Vec<f64>, usize)>
    where
        F: Fn(usize, [f64; 3], Point, &mut [f64]) + Sync,
    {
        let (per, depth) = self.integrate_elements(quad, singular, n_out, f)?;
        let mut acc = vec![0.0; n_out];
        for v in per {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
        }
        Ok((acc, depth))
    }

    /// Corner-aware integration over boundary edges: `f(t, bary, x, normal, out)`.
    pub fn integrate_boundary<F>(&self, quad: &CornerQuadrature, singular: &[Point], n_out: usize, f: F) -> Result<(Vec<f64>, usize)>
    where
        F: Fn(usize, [f64; 3], Point, Point, &mut [f64]) + Sync,
    {
        let edges = self.boundary_edges();
        let per: Vec<(Vec<f64>, usize)> = edges
            .par_iter()
            .map(|&(_, t, k, _)| {
                let tri = self.triangles[t];
                let (ia, ib) = ((k + 1) % 3, (k + 2) % 3);
                let (a, b) = (self.nodes[tri[ia]], self.nodes[tri[ib]]);
                let len = dist(a, b);
                // counter-clockwise triangle: outward normal is the edge direction turned clockwise
                let normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
                quad.integrate_segment(a, b, singular, n_out, &mut |s, x, out| {
                    let mut bary = [0.0; 3];
                    bary[ia] = 1.0 - s;
                    bary[ib] = s;
                    f(t, bary, x, normal, out)
                })
            })
            .collect::<Result<_>>()?;
        let mut acc = vec![0.0; n_out];
        let mut depth = 0;
        for (v, d) in per {
            depth = depth.max(d);
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
        }
        Ok((acc, depth))
    }

    /// Elements (indices) intersecting the disc of radius `radius` around corner `j`.
    pub fn elements_near_corner(&self, j: usize, radius: f64) -> Vec<usize> {
        (0..self.num_triangles())
            .filter(|&t| dist_to_triangle(self.corners[j], self.vertices_of(t)) < radius)
            .collect()
    }

    /// Interior angle at corner `j`, summed over the elements meeting its node.
    pub fn corner_opening(&self, j: usize) -> Option<f64> {
        let cn = self.corner_nodes.get(j).copied().flatten()?;
        let mut total = 0.0;
        for t in &self.triangles {
            if let Some(k) = t.iter().position(|&v| v == cn) {
                let p = self.nodes[cn];
                let a = sub(self.nodes[t[(k + 1) % 3]], p);
                let b = sub(self.nodes[t[(k + 2) % 3]], p);
                total += cross(a, b).atan2(dot(a, b)).abs();
            }
        }
        Some(total)
    }

    /// Mesh made of the listed elements, with node map `sub → global`.
    /// The sub-mesh keeps the weight centres of the parent.
    pub fn submesh(&self, elements: &[usize]) -> Result<(Mesh, Vec<usize>)> {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut back = Vec::new();
        let mut tris = Vec::with_capacity(elements.len());
        for &t in elements {
            let mut nt = [0; 3];
            for (k, &v) in self.triangles[t].iter().enumerate() {
                nt[k] = *map.entry(v).or_insert_with(|| {
                    back.push(v);
                    back.len() - 1
                });
            }
            tris.push(nt);
        }
        let nodes: Vec<Point> = back.iter().map(|&v| self.nodes[v]).collect();
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let facets = counts.iter().filter(|(_, &c)| c == 1).map(|(&(a, b), _)| Facet { nodes: [a, b], label: 0 }).collect();
        let sub = Mesh::from_parts(nodes, tris, self.corners.clone(), self.grading.clone(), facets)?;
        Ok((sub, back))
    }

    // ---- plain-text format -------------------------------------------------

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MESH_HEADER}");
        let _ = writeln!(s, "corners {}", self.corners.len());
        for (c, mu) in self.corners.iter().zip(&self.grading) {
            let _ = writeln!(s, "{:?} {:?} {:?}", c[0], c[1], mu);
        }
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for (p, tag) in self.nodes.iter().zip(&self.corner_tags) {
            let _ = writeln!(s, "{:?} {:?} {}", p[0], p[1], tag);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "facets {}", self.facets.len());
        for f in &self.facets {
            let _ = writeln!(s, "{} {} {}", f.nodes[0], f.nodes[1], f.label);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::MeshFormat(m.to_string());
        let mut rows = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if rows.next() != Some(MESH_HEADER) {
            return Err(bad("missing header"));
        }
        let mut read_section = |name: &str| -> Result<Vec<Vec<String>>> {
            let l = rows.next().ok_or_else(|| bad("unexpected end of file"))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(name) {
                return Err(Error::MeshFormat(format!("expected section '{name}', found '{l}'")));
            }
            let count: usize = it.next().and_then(|c| c.parse().ok()).ok_or_else(|| bad("bad section count"))?;
            (0..count)
                .map(|_| {
                    rows.next()
                        .map(|r| r.split_whitespace().map(String::from).collect())
                        .ok_or_else(|| bad("truncated section"))
                })
                .collect()
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::MeshFormat(format!("bad number '{s}'")));
        let idx = |s: &str| s.parse::<usize>().map_err(|_| Error::MeshFormat(format!("bad index '{s}'")));
        let field = |row: &Vec<String>, i: usize| row.get(i).cloned().ok_or_else(|| bad("short row"));

        let mut corners = Vec::new();
        let mut grading = Vec::new();
        for r in read_section("corners")? {
            corners.push([num(&field(&r, 0)?)?, num(&field(&r, 1)?)?]);
            grading.push(num(&field(&r, 2)?)?);
        }
        let mut nodes = Vec::new();
        for r in read_section("nodes")? {
            nodes.push([num(&field(&r, 0)?)?, num(&field(&r, 1)?)?]);
        }
        let mut triangles = Vec::new();
        for r in read_section("triangles")? {
            triangles.push([idx(&field(&r, 0)?)?, idx(&field(&r, 1)?)?, idx(&field(&r, 2)?)?]);
        }
        let mut facets = Vec::new();
        for r in read_section("facets")? {
            facets.push(Facet { nodes: [idx(&field(&r, 0)?)?, idx(&field(&r, 1)?)?], label: idx(&field(&r, 2)?)? });
        }
        Self::from_parts(nodes, triangles, corners, grading, facets)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub fn triangle_min_angle(p: [Point; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for k in 0..3 {
        let a = sub(p[(k + 1) % 3], p[k]);
        let b = sub(p[(k + 2) % 3], p[k]);
        let ang = cross(a, b).abs().atan2(a[0] * b[0] + a[1] * b[1]);
        m = m.min(ang);
    }
    m
}

/// Best-angle ear clipping; ties go to the lowest remaining vertex index.
fn ear_clip(domain: &PolygonDomain) -> Result<Vec<[usize; 3]>> {
    let v = domain.vertices();
    let mut ring: Vec<usize> = (0..v.len()).collect();
    let mut tris = Vec::new();
    while ring.len() > 3 {
        let m = ring.len();
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            let (a, b, c) = (ring[(i + m - 1) % m], ring[i], ring[(i + 1) % m]);
            let turn = cross(sub(v[b], v[a]), sub(v[c], v[b]));
            if turn <= 0.0 {
                continue;
            }
            let blocked = ring.iter().any(|&k| {
                if k == a || k == b || k == c {
                    return false;
                }
                let p = v[k];
                cross(sub(v[b], v[a]), sub(p, v[a])) >= 0.0
                    && cross(sub(v[c], v[b]), sub(p, v[b])) >= 0.0
                    && cross(sub(v[a], v[c]), sub(p, v[c])) >= 0.0
            });
            if blocked {
                continue;
            }
            let q = triangle_min_angle([v[a], v[b], v[c]]);
            if best.is_none_or(|(bq, _)| q > bq + 1e-12) {
                best = Some((q, i));
            }
        }
        let (_, i) = best.ok_or_else(|| Error::MeshFailure("no ear found".into()))?;
        let m = ring.len();
        tris.push([ring[(i + m - 1) % m], ring[i], ring[(i + 1) % m]]);
        ring.remove(i);
    }
    tris.push([ring[0], ring[1], ring[2]]);
    Ok(tris)
}

/// Newest-vertex bisection state. Triangle `[a, b, c]` has refinement edge `(b, c)`.
struct Bisection {
    nodes: Vec<Point>,
    tris: Vec<[usize; 3]>,
    midpoints: BTreeMap<(usize, usize), usize>,
}

impl Bisection {
    fn new(nodes: Vec<Point>, tris: Vec<[usize; 3]>) -> Self {
        // initial refinement edge: longest edge (first on ties)
        let tris = tris
            .into_iter()
            .map(|t| {
                let mut best = 0;
                let mut len = -1.0;
                for k in 0..3 {
                    let l = dist(nodes[t[(k + 1) % 3]], nodes[t[(k + 2) % 3]]);
                    if l > len * (1.0 + 1e-12) {
                        len = l;
                        best = k;
                    }
                }
                [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
            })
            .collect();
        Self { nodes, tris, midpoints: BTreeMap::new() }
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        self.nodes.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
        let m = self.nodes.len() - 1;
        self.midpoints.insert(key, m);
        m
    }

    fn has_hanging(&self, t: &[usize; 3]) -> bool {
        (0..3).any(|k| {
            let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
            self.midpoints.contains_key(&(a.min(b), a.max(b)))
        })
    }

    /// Bisects the marked triangles, then closes the mesh.
    fn refine(&mut self, marked: &[bool]) {
        let mut next = Vec::with_capacity(self.tris.len() * 2);
        let old = std::mem::take(&mut self.tris);
        for (t, &m) in old.iter().zip(marked) {
            if m {
                let [a, b, c] = *t;
                let mid = self.midpoint(b, c);
                next.push([mid, a, b]);
                next.push([mid, c, a]);
            } else {
                next.push(*t);
            }
        }
        self.tris = next;
        loop {
            let mut changed = false;
            let old = std::mem::take(&mut self.tris);
            let mut next = Vec::with_capacity(old.len() + 16);
            for t in old {
                if self.has_hanging(&t) {
                    let [a, b, c] = t;
                    let mid = self.midpoint(b, c);
                    next.push([mid, a, b]);
                    next.push([mid, c, a]);
                    changed = true;
                } else {
                    next.push(t);
                }
            }
            self.tris = next;
            if !changed {
                break;
            }
        }
        // midpoints that are now proper vertices of all incident triangles stay in the
        // map; has_hanging only fires while some triangle still spans the parent edge
    }

    fn diam(&self, t: &[usize; 3]) -> f64 {
        let p = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
        dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
    }
}

/// Generates a conforming, optionally corner-graded mesh of `domain`.
pub fn generate_graded_mesh(domain: &PolygonDomain, opts: &MeshOptions) -> Result<Mesh> {
    let n = domain.num_corners();
    if !(opts.h > 0.0) || !opts.h.is_finite() {
        return Err(Error::InvalidInput(format!("mesh size h must be positive, got {}", opts.h)));
    }
    let grading: Vec<f64> = if opts.grading.is_empty() { vec![1.0; n] } else { opts.grading.clone() };
    if grading.len() != n || grading.iter().any(|m| !(*m >= 1.0)) {
        return Err(Error::InvalidInput("grading must give one exponent >= 1 per corner".into()));
    }
    let radii: Vec<f64> = if opts.radii.is_empty() { (0..n).map(|j| domain.grading_radius(j)).collect() } else { opts.radii.clone() };
    if radii.len() != n {
        return Err(Error::InvalidInput("one grading radius per corner required".into()));
    }

    let mut bis = Bisection::new(domain.vertices().to_vec(), ear_clip(domain)?);
    let slack = 1.0 + 1e-9;
    let max_elements = 2_000_000;
    loop {
        let marked: Vec<bool> = bis.tris.iter().map(|t| bis.diam(t) > opts.h * slack).collect();
        if !marked.iter().any(|&m| m) {
            break;
        }
        bis.refine(&marked);
        if bis.tris.len() > max_elements {
            return Err(Error::MeshFailure("element budget exceeded".into()));
        }
    }
    let corners = domain.vertices().to_vec();
    loop {
        let marked: Vec<bool> = bis
            .tris
            .iter()
            .map(|t| {
                let d = bis.diam(t);
                let p = [bis.nodes[t[0]], bis.nodes[t[1]], bis.nodes[t[2]]];
                (0..n).any(|j| {
                    if grading[j] <= 1.0 {
                        return false;
                    }
                    let r = dist_to_triangle(corners[j], p);
                    if r >= radii[j] {
                        return false;
                    }
                    let target = if r <= 1e-14 * opts.h {
                        opts.h.powf(grading[j])
                    } else {
                        opts.h * r.powf(1.0 - 1.0 / grading[j])
                    };
                    d > target * slack
                })
            })
            .collect();
        if !marked.iter().any(|&m| m) {
            break;
        }
        bis.refine(&marked);
        if bis.tris.len() > max_elements {
            return Err(Error::MeshFailure("element budget exceeded while grading".into()));
        }
    }

    let nodes = bis.nodes;
    let triangles = bis.tris;
    let min_angle = triangles
        .iter()
        .map(|t| triangle_min_angle([nodes[t[0]], nodes[t[1]], nodes[t[2]]]))
        .fold(f64::INFINITY, f64::min);
    if min_angle.to_degrees() < opts.min_angle_deg - 1e-9 {
        return Err(Error::MeshFailure(format!(
            "minimum angle {:.2}° below threshold {:.2}°",
            min_angle.to_degrees(),
            opts.min_angle_deg
        )));
    }

    // boundary facets with side labels
    let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let scale = domain.diameter();
    let mut facets = Vec::new();
    for (&(a, b), &c) in &counts {
        if c == 1 {
            let mid = [(nodes[a][0] + nodes[b][0]) / 2.0, (nodes[a][1] + nodes[b][1]) / 2.0];
            let label = domain
                .edge_containing(mid, 1e-10 * scale)
                .ok_or_else(|| Error::MeshFailure("boundary edge off the polygon".into()))?;
            facets.push(Facet { nodes: [a, b], label });
        }
    }
    Mesh::from_parts(nodes, triangles, corners, grading, facets)
}

/// Fan of `segments` triangles approximating the sector `{0 < r < radius, 0 < φ < alpha}`,
/// with a single weight centre at the origin.
pub fn sector_fan(alpha: f64, radius: f64, segments: usize) -> Result<Mesh> {
    if segments < 1 || !(alpha > 0.0) {
        return Err(Error::InvalidInput("sector needs alpha > 0 and at least one segment".into()));
    }
    let mut nodes = vec![[0.0, 0.0]];
    for k in 0..=segments {
        let phi = alpha * k as f64 / segments as f64;
        nodes.push([radius * phi.cos(), radius * phi.sin()]);
    }
    let triangles: Vec<[usize; 3]> = (0..segments).map(|k| [0, k + 1, k + 2]).collect();
    let mut facets = vec![Facet { nodes: [0, 1], label: 0 }, Facet { nodes: [segments + 1, 0], label: 2 }];
    for k in 0..segments {
        facets.push(Facet { nodes: [k + 1, k + 2], label: 1 });
    }
    Mesh::from_parts(nodes, triangles, vec![[0.0, 0.0]], vec![1.0], facets)
}
