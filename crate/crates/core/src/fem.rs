//! Lagrange finite-element spaces on a [`Mesh`], discrete fields and data sources.
//!
//! P2 local numbering: vertices 0..3, then edge dofs 3..6 where local edge `k`
//! is opposite vertex `k`. Vector fields are component-blocked: the second
//! component's dofs follow all of the first component's.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::Mesh;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    P1,
    P2,
    P2Vector,
}

impl Family {
    pub fn components(self) -> usize {
        match self {
            Family::P2Vector => 2,
            _ => 1,
        }
    }

    /// Scalar dofs per component.
    pub fn scalar_dofs(self, mesh: &Mesh) -> usize {
        match self {
            Family::P1 => mesh.num_nodes(),
            Family::P2 | Family::P2Vector => mesh.num_nodes() + mesh.num_edges(),
        }
    }

    pub fn ndofs(self, mesh: &Mesh) -> usize {
        self.components() * self.scalar_dofs(mesh)
    }

    pub fn local_size(self) -> usize {
        match self {
            Family::P1 => 3,
            Family::P2 => 6,
            Family::P2Vector => 12,
        }
    }

    /// Global dofs of element `t` in local order.
    pub fn element_dofs(self, mesh: &Mesh, t: usize) -> LocalDofs {
        let tri = mesh.triangles()[t];
        let mut d = LocalDofs { idx: [0; 12], len: self.local_size() };
        match self {
            Family::P1 => d.idx[..3].copy_from_slice(&tri),
            Family::P2 | Family::P2Vector => {
                let n = mesh.num_nodes();
                let e = mesh.tri_edges()[t];
                let s = [tri[0], tri[1], tri[2], n + e[0], n + e[1], n + e[2]];
                d.idx[..6].copy_from_slice(&s);
                if self == Family::P2Vector {
                    let off = self.scalar_dofs(mesh);
                    for k in 0..6 {
                        d.idx[6 + k] = s[k] + off;
                    }
                }
            }
        }
        d
    }

    /// Dofs whose basis functions have nonzero trace on the boundary.
    pub fn boundary_dofs(self, mesh: &Mesh) -> Vec<usize> {
        let n = mesh.num_nodes();
        let mut s: Vec<usize> = (0..n).filter(|&i| mesh.is_boundary_node(i)).collect();
        if self != Family::P1 {
            s.extend((0..mesh.num_edges()).filter(|&e| mesh.is_boundary_edge(e)).map(|e| n + e));
        }
        if self == Family::P2Vector {
            let off = self.scalar_dofs(mesh);
            let second: Vec<usize> = s.iter().map(|d| d + off).collect();
            s.extend(second);
        }
        s
    }

    /// Interpolation nodes of the scalar dofs (vertices, then edge midpoints).
    pub fn dof_points(self, mesh: &Mesh) -> Vec<Point> {
        let mut pts = mesh.nodes().to_vec();
        if self != Family::P1 {
            for e in mesh.edges() {
                let (a, b) = (mesh.nodes()[e[0]], mesh.nodes()[e[1]]);
                pts.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
            }
        }
        pts
    }
}

/// Element dof indices without heap allocation.
#[derive(Debug, Clone, Copy)]
pub struct LocalDofs {
    idx: [usize; 12],
    len: usize,
}

impl std::ops::Deref for LocalDofs {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

// ---- reference bases ------------------------------------------------------

pub fn p1_values(b: [f64; 3]) -> [f64; 3] {
    b
}

pub fn p2_values(b: [f64; 3]) -> [f64; 6] {
    [
        b[0] * (2.0 * b[0] - 1.0),
        b[1] * (2.0 * b[1] - 1.0),
        b[2] * (2.0 * b[2] - 1.0),
        4.0 * b[1] * b[2],
        4.0 * b[2] * b[0],
        4.0 * b[0] * b[1],
    ]
}

pub fn p2_gradients(b: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for k in 0..3 {
        let c = 4.0 * b[k] - 1.0;
        out[k] = [c * g[k][0], c * g[k][1]];
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        out[3 + k] = [4.0 * (b[j] * g[i][0] + b[i] * g[j][0]), 4.0 * (b[j] * g[i][1] + b[i] * g[j][1])];
    }
    out
}

/// Constant second derivatives `[xx, xy, yy]` of the P2 basis.
pub fn p2_hessians(g: &[[f64; 2]; 3]) -> [[f64; 3]; 6] {
    let mut out = [[0.0; 3]; 6];
    let sym = |a: [f64; 2], b: [f64; 2]| [2.0 * a[0] * b[0], a[0] * b[1] + a[1] * b[0], 2.0 * a[1] * b[1]];
    for k in 0..3 {
        let h = sym(g[k], g[k]);
        out[k] = [2.0 * h[0], 2.0 * h[1], 2.0 * h[2]];
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let h = sym(g[i], g[j]);
        out[3 + k] = [4.0 * h[0], 4.0 * h[1], 4.0 * h[2]];
    }
    out
}

/// Value and derivatives (up to order 2) of a one- or two-component field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub ncomp: usize,
    pub val: [C64; 2],
    /// `grad[c][d] = ∂_d u_c`
    pub grad: [[C64; 2]; 2],
    /// `[xx, xy, yy]` per component
    pub hess: [[C64; 3]; 2],
}

impl Jet {
    pub fn zero(ncomp: usize) -> Self {
        Self { ncomp, val: [ZERO; 2], grad: [[ZERO; 2]; 2], hess: [[ZERO; 3]; 2] }
    }

    /// `Σ_{|a| = order} |∂^a u|²` summed over components.
    pub fn order_sq(&self, order: usize) -> f64 {
        let mut s = 0.0;
        for c in 0..self.ncomp {
            s += match order {
                0 => self.val[c].norm_sqr(),
                1 => self.grad[c].iter().map(|v| v.norm_sqr()).sum(),
                2 => self.hess[c].iter().map(|v| v.norm_sqr()).sum(),
                _ => 0.0,
            };
        }
        s
    }

    pub fn divergence(&self) -> C64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

// ---- discrete fields ------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    mesh: Arc<Mesh>,
    family: Family,
    coeffs: Vec<C64>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<Mesh>, family: Family, coeffs: Vec<C64>) -> Result<Self> {
        let n = family.ndofs(&mesh);
        if coeffs.len() != n {
            return Err(Error::InvalidInput(format!("field has {} coefficients, {:?} space needs {n}", coeffs.len(), family)));
        }
        Ok(Self { mesh, family, coeffs })
    }

    pub fn zeros(mesh: Arc<Mesh>, family: Family) -> Self {
        let n = family.ndofs(&mesh);
        Self { mesh, family, coeffs: vec![ZERO; n] }
    }

    /// Nodal interpolant of a scalar function (P1/P2).
    pub fn interpolate_scalar(mesh: Arc<Mesh>, family: Family, f: impl Fn(Point) -> C64) -> Self {
        assert_ne!(family, Family::P2Vector);
        let coeffs = family.dof_points(&mesh).into_iter().map(f).collect();
        Self { mesh, family, coeffs }
    }

    /// Nodal interpolant of a vector function in the P2 vector space.
    pub fn interpolate_vector(mesh: Arc<Mesh>, f: impl Fn(Point) -> [C64; 2]) -> Self {
        let pts = Family::P2Vector.dof_points(&mesh);
        let vals: Vec<[C64; 2]> = pts.into_iter().map(f).collect();
        let coeffs = vals.iter().map(|v| v[0]).chain(vals.iter().map(|v| v[1])).collect();
        Self { mesh, family: Family::P2Vector, coeffs }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn family(&self) -> Family {
        self.family
    }
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * a).collect(), ..self.clone() }
    }

    pub fn conj(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.conj()).collect(), ..self.clone() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &DiscreteField) -> Result<Self> {
        if other.family != self.family || other.coeffs.len() != self.coeffs.len() {
            return Err(Error::InvalidInput("fields live in different spaces".into()));
        }
        Ok(Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x + a * y).collect(), ..self.clone() })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Jet on element `t` at element barycentrics `b`.
    pub fn jet(&self, t: usize, b: [f64; 3]) -> Jet {
        let dofs = self.family.element_dofs(&self.mesh, t);
        let g = self.mesh.bary_gradients(t);
        let mut j = Jet::zero(self.family.components());
        match self.family {
            Family::P1 => {
                for k in 0..3 {
                    let c = self.coeffs[dofs[k]];
                    j.val[0] += c * b[k];
                    j.grad[0][0] += c * g[k][0];
                    j.grad[0][1] += c * g[k][1];
                }
            }
            Family::P2 | Family::P2Vector => {
                let v = p2_values(b);
                let gr = p2_gradients(b, &g);
                let h = p2_hessians(&g);
                for comp in 0..self.family.components() {
                    for k in 0..6 {
                        let c = self.coeffs[dofs[6 * comp + k]];
                        if c == ZERO {
                            continue;
                        }
                        j.val[comp] += c * v[k];
                        j.grad[comp][0] += c * gr[k][0];
                        j.grad[comp][1] += c * gr[k][1];
                        for d in 0..3 {
                            j.hess[comp][d] += c * h[k][d];
                        }
                    }
                }
            }
        }
        j
    }

    /// Point evaluation by element search (slow; used by tests and exports).
    pub fn eval_at(&self, x: Point) -> Option<Jet> {
        for t in 0..self.mesh.num_triangles() {
            let p = self.mesh.vertices_of(t);
            let g = self.mesh.bary_gradients(t);
            let b1 = g[1][0] * (x[0] - p[0][0]) + g[1][1] * (x[1] - p[0][1]);
            let b2 = g[2][0] * (x[0] - p[0][0]) + g[2][1] * (x[1] - p[0][1]);
            let b = [1.0 - b1 - b2, b1, b2];
            if b.iter().all(|&v| v >= -1e-12) {
                return Some(self.jet(t, b));
            }
        }
        None
    }
}

// ---- plain-text field format ----------------------------------------------

pub const FIELD_HEADER: &str = "POLYSTOKES-FIELD v1";

impl DiscreteField {
    /// Text form: header, `mesh <reference>`, `family <name>`,
    /// `sizes <nodes> <edges> <triangles>`, `coeffs <n>` then one `re im` pair per line.
    pub fn to_text(&self, mesh_ref: &str) -> String {
        let mut s = String::new();
        let family = match self.family {
            Family::P1 => "p1",
            Family::P2 => "p2",
            Family::P2Vector => "p2_vector",
        };
        let m = &self.mesh;
        let _ = writeln!(s, "{FIELD_HEADER}");
        let _ = writeln!(s, "mesh {mesh_ref}");
        let _ = writeln!(s, "family {family}");
        let _ = writeln!(s, "sizes {} {} {}", m.num_nodes(), m.num_edges(), m.num_triangles());
        let _ = writeln!(s, "coeffs {}", self.coeffs.len());
        for c in &self.coeffs {
            let _ = writeln!(s, "{:?} {:?}", c.re, c.im);
        }
        s
    }

    /// Parses the text form against `mesh`; returns the field and its mesh reference.
    pub fn from_text(text: &str, mesh: Arc<Mesh>) -> Result<(Self, String)> {
        let bad = |m: String| Error::MeshFormat(m);
        let mut rows = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if rows.next() != Some(FIELD_HEADER) {
            return Err(bad("missing field header".into()));
        }
        let mut keyed = |key: &str| -> Result<String> {
            let l = rows.next().ok_or_else(|| bad("unexpected end of file".into()))?;
            l.strip_prefix(key)
                .filter(|r| r.starts_with(' '))
                .map(|r| r.trim().to_string())
                .ok_or_else(|| bad(format!("expected '{key}', found '{l}'")))
        };
        let mesh_ref = keyed("mesh")?;
        let family = match keyed("family")?.as_str() {
            "p1" => Family::P1,
            "p2" => Family::P2,
            "p2_vector" => Family::P2Vector,
            f => return Err(bad(format!("unknown family '{f}'"))),
        };
        let sizes: Vec<usize> = keyed("sizes")?.split_whitespace().map(|v| v.parse().map_err(|_| bad(format!("bad size '{v}'")))).collect::<Result<_>>()?;
        if sizes != [mesh.num_nodes(), mesh.num_edges(), mesh.num_triangles()] {
            return Err(bad(format!("field was written for a mesh of sizes {sizes:?}")));
        }
        let n: usize = keyed("coeffs")?.parse().map_err(|_| bad("bad coefficient count".into()))?;
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            let l = rows.next().ok_or_else(|| bad("truncated coefficients".into()))?;
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().map_err(|_| bad(format!("bad number '{x}'")))).collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(bad(format!("expected 're im', found '{l}'")));
            }
            coeffs.push(C64::new(v[0], v[1]));
        }
        if rows.next().is_some() {
            return Err(bad("trailing data after coefficients".into()));
        }
        Ok((Self::new(mesh, family, coeffs)?, mesh_ref))
    }

    pub fn write(&self, path: &Path, mesh_ref: &str) -> Result<()> {
        std::fs::write(path, self.to_text(mesh_ref))?;
        Ok(())
    }

    /// Reads a field file; the mesh reference is resolved relative to the file.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mesh_ref = text
            .lines()
            .map(str::trim)
            .find_map(|l| l.strip_prefix("mesh "))
            .ok_or_else(|| Error::MeshFormat("field file has no mesh reference".into()))?
            .trim()
            .to_string();
        let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&mesh_ref);
        let mesh = Arc::new(Mesh::read(&mesh_path)?);
        Ok(Self::from_text(&text, mesh)?.0)
    }
}

// ---- data sources ---------------------------------------------------------

pub trait ScalarFunction: Send + Sync {
    fn value(&self, x: Point) -> C64;
    fn gradient(&self, x: Point) -> [C64; 2];
}

pub trait VectorFunction: Send + Sync {
    fn value(&self, x: Point) -> [C64; 2];
    fn gradient(&self, x: Point) -> [[C64; 2]; 2];
}

#[derive(Clone)]
pub enum ScalarTerm {
    Field(DiscreteField),
    Function(Arc<dyn ScalarFunction>),
}

#[derive(Clone)]
pub enum VectorTerm {
    Field(DiscreteField),
    Function(Arc<dyn VectorFunction>),
}

/// Linear combination `Σ c_i term_i`; an empty combination is zero.
#[derive(Clone, Default)]
pub struct ScalarData {
    pub terms: Vec<(C64, ScalarTerm)>,
}

#[derive(Clone, Default)]
pub struct VectorData {
    pub terms: Vec<(C64, VectorTerm)>,
}

impl std::fmt::Debug for ScalarData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarData({} terms)", self.terms.len())
    }
}

impl std::fmt::Debug for VectorData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorData({} terms)", self.terms.len())
    }
}

fn check_mesh(field: &DiscreteField, mesh: &Mesh) -> Result<()> {
    if field.mesh.num_triangles() != mesh.num_triangles() || field.mesh.num_nodes() != mesh.num_nodes() {
        return Err(Error::InvalidInput("data field lives on a different mesh".into()));
    }
    Ok(())
}

impl ScalarData {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn function(f: Arc<dyn ScalarFunction>) -> Self {
        Self { terms: vec![(C64::new(1.0, 0.0), ScalarTerm::Function(f))] }
    }
    pub fn field(f: DiscreteField) -> Self {
        Self { terms: vec![(C64::new(1.0, 0.0), ScalarTerm::Field(f))] }
    }
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(c, t)| *c == ZERO || matches!(t, ScalarTerm::Field(f) if f.max_abs() == 0.0))
    }
    pub fn scaled(&self, a: C64) -> Self {
        Self { terms: self.terms.iter().map(|(c, t)| (c * a, t.clone())).collect() }
    }
    pub fn conj(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(c, t)| {
                    let t = match t {
                        ScalarTerm::Field(f) => ScalarTerm::Field(f.conj()),
                        // functions are real-valued by convention of the callers that conjugate
                        ScalarTerm::Function(f) => ScalarTerm::Function(f.clone()),
                    };
                    (c.conj(), t)
                })
                .collect(),
        }
    }
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for (_, t) in &self.terms {
            if let ScalarTerm::Field(f) = t {
                if f.family == Family::P2Vector {
                    return Err(Error::InvalidInput("scalar data given as a vector field".into()));
                }
                check_mesh(f, mesh)?;
            }
        }
        Ok(())
    }
    /// Value and gradient at element `t`, barycentrics `b`, point `x`.
    pub fn eval(&self, t: usize, b: [f64; 3], x: Point) -> (C64, [C64; 2]) {
        let mut v = ZERO;
        let mut g = [ZERO; 2];
        for (c, term) in &self.terms {
            let (tv, tg) = match term {
                ScalarTerm::Field(f) => {
                    let j = f.jet(t, b);
                    (j.val[0], j.grad[0])
                }
                ScalarTerm::Function(f) => (f.value(x), f.gradient(x)),
            };
            v += c * tv;
            g[0] += c * tg[0];
            g[1] += c * tg[1];
        }
        (v, g)
    }
}

impl VectorData {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn function(f: Arc<dyn VectorFunction>) -> Self {
        Self { terms: vec![(C64::new(1.0, 0.0), VectorTerm::Function(f))] }
    }
    pub fn field(f: DiscreteField) -> Self {
        Self { terms: vec![(C64::new(1.0, 0.0), VectorTerm::Field(f))] }
    }
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(c, t)| *c == ZERO || matches!(t, VectorTerm::Field(f) if f.max_abs() == 0.0))
    }
    pub fn scaled(&self, a: C64) -> Self {
        Self { terms: self.terms.iter().map(|(c, t)| (c * a, t.clone())).collect() }
    }
    pub fn conj(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(c, t)| {
                    let t = match t {
                        VectorTerm::Field(f) => VectorTerm::Field(f.conj()),
                        VectorTerm::Function(f) => VectorTerm::Function(f.clone()),
                    };
                    (c.conj(), t)
                })
                .collect(),
        }
    }
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for (_, t) in &self.terms {
            if let VectorTerm::Field(f) = t {
                if f.family != Family::P2Vector {
                    return Err(Error::InvalidInput("vector data given as a scalar field".into()));
                }
                check_mesh(f, mesh)?;
            }
        }
        Ok(())
    }
    pub fn eval(&self, t: usize, b: [f64; 3], x: Point) -> ([C64; 2], [[C64; 2]; 2]) {
        let mut v = [ZERO; 2];
        let mut g = [[ZERO; 2]; 2];
        for (c, term) in &self.terms {
            let (tv, tg) = match term {
                VectorTerm::Field(f) => {
                    let j = f.jet(t, b);
                    (j.val, j.grad)
                }
                VectorTerm::Function(f) => (f.value(x), f.gradient(x)),
            };
            for i in 0..2 {
                v[i] += c * tv[i];
                for d in 0..2 {
                    g[i][d] += c * tg[i][d];
                }
            }
        }
        (v, g)
    }
}

/// Closure-backed scalar function with an explicit gradient.
pub struct ScalarFn<F, G>(pub F, pub G);

impl<F, G> ScalarFunction for ScalarFn<F, G>
where
    F: Fn(Point) -> C64 + Send + Sync,
    G: Fn(Point) -> [C64; 2] + Send + Sync,
{
    fn value(&self, x: Point) -> C64 {
        (self.0)(x)
    }
    fn gradient(&self, x: Point) -> [C64; 2] {
        (self.1)(x)
    }
}

/// Closure-backed vector function with an explicit gradient.
pub struct VectorFn<F, G>(pub F, pub G);

impl<F, G> VectorFunction for VectorFn<F, G>
where
    F: Fn(Point) -> [C64; 2] + Send + Sync,
    G: Fn(Point) -> [[C64; 2]; 2] + Send + Sync,
{
    fn value(&self, x: Point) -> [C64; 2] {
        (self.0)(x)
    }
    fn gradient(&self, x: Point) -> [[C64; 2]; 2] {
        (self.1)(x)
    }
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolygonDomain;
    use crate::mesh::{generate_graded_mesh, MeshOptions};

    fn mesh() -> Arc<Mesh> {
        Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(0.35)).unwrap())
    }

    #[test]
    fn p2_basis_is_nodal() {
        let nodes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        for (i, b) in nodes.iter().enumerate() {
            let v = p2_values(*b);
            for (k, x) in v.iter().enumerate() {
                assert!((x - if i == k { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_reproduces_quadratics() {
        let m = mesh();
        let q = |x: Point| re(1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1]);
        let f = DiscreteField::interpolate_scalar(m.clone(), Family::P2, q);
        for t in 0..m.num_triangles() {
            let b = [0.2, 0.3, 0.5];
            let x = m.point_at(t, b);
            let j = f.jet(t, b);
            assert!((j.val[0] - q(x)).norm() < 1e-13);
            assert!((j.grad[0][0] - re(2.0 + 6.0 * x[0] - x[1])).norm() < 1e-12);
            assert!((j.grad[0][1] - re(-1.0 - x[0] + x[1])).norm() < 1e-12);
            assert!((j.hess[0][0] - re(6.0)).norm() < 1e-10);
            assert!((j.hess[0][1] - re(-1.0)).norm() < 1e-10);
            assert!((j.hess[0][2] - re(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn vector_layout_is_component_blocked() {
        let m = mesh();
        let f = DiscreteField::interpolate_vector(m.clone(), |x| [re(x[0]), re(2.0 * x[1])]);
        let n = Family::P2.ndofs(&m);
        assert_eq!(f.coeffs().len(), 2 * n);
        let j = f.jet(0, [0.3, 0.3, 0.4]);
        assert!((j.divergence() - re(3.0)).norm() < 1e-12);
        let bd = Family::P2Vector.boundary_dofs(&m);
        assert_eq!(bd.len() % 2, 0);
        assert!(bd.iter().all(|&d| d < 2 * n));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = mesh();
        assert!(DiscreteField::new(m, Family::P1, vec![ZERO; 3]).is_err());
    }

    #[test]
    fn field_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Arc::new(crate::mesh::generate_graded_mesh(&crate::geometry::PolygonDomain::l_shape(), &crate::mesh::MeshOptions::uniform(0.5)).unwrap());
        mesh.write(&dir.path().join("m.mesh")).unwrap();
        let f = DiscreteField::interpolate_vector(mesh.clone(), |x| [C64::new(x[0].sin(), 0.1), C64::new(x[1] / 3.0, -x[0])]);
        f.write(&dir.path().join("u.field"), "m.mesh").unwrap();
        let g = DiscreteField::read(&dir.path().join("u.field")).unwrap();
        assert_eq!(g.coeffs(), f.coeffs());
        assert_eq!(g.family(), Family::P2Vector);
        let coarse = Arc::new(crate::mesh::generate_graded_mesh(&crate::geometry::PolygonDomain::l_shape(), &crate::mesh::MeshOptions::uniform(1.0)).unwrap());
        assert!(DiscreteField::from_text(&f.to_text("m.mesh"), coarse).is_err());
        let text = f.to_text("m.mesh").replace("p2_vector", "p3");
        assert!(DiscreteField::from_text(&text, mesh).is_err());
    }
}
