//! The resolvent Stokes problem `s u − Δu − ∇∇·u + ∇p = f`, `−∇·u = g`,
//! `u = 0` on the boundary, discretized with Taylor–Hood (P2 velocity, P1
//! pressure) elements.
//!
//! The velocity form is `b_s(u, v) = ∫ s u·v + 2 ε(u):ε(v)`. The pressure is
//! fixed by pinning one dof during the solve and shifting to mean zero after.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{p2_gradients, p2_values, DiscreteField, Family, Jet, ScalarData, VectorData, C64, ZERO};
use crate::geometry::{dist, Point};
use crate::mesh::Mesh;
use crate::quadrature::{triangle_rule, CornerQuadrature};
use crate::sparse::{norm2, Csr, Factorization, Triplets};
use crate::weighted::{source_norm, JetSource, NormSpec, WeightVector};

/// Velocity block of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityForm {
    /// `2 ε(u):ε(v)`
    Strain,
    /// `∇u:∇v + (∇·u)(∇·v)`
    GradDiv,
    /// `∇u:∇v` (with `s = 1` this is the W¹ inner product)
    Gradient,
}

/// Assembled, `s`-independent pieces of the saddle-point operator.
#[derive(Debug, Clone)]
pub struct StokesOperator {
    mesh: Arc<Mesh>,
    form: VelocityForm,
    nu: usize,
    np: usize,
    stiffness: Vec<(usize, usize, f64)>,
    mass: Vec<(usize, usize, f64)>,
    /// `(pressure dof, velocity dof, −∫ λ_k ∂_a φ_j)`
    coupling: Vec<(usize, usize, f64)>,
    boundary: Vec<bool>,
    /// `∫ λ_k` for every pressure dof
    p_weights: Vec<f64>,
    pin: usize,
}

/// Local velocity-block entry for test `(b, i)` and trial `(a, j)`.
fn form_entry(form: VelocityForm, a: usize, b: usize, gi: [f64; 2], gj: [f64; 2]) -> f64 {
    let lap = if a == b { gi[0] * gj[0] + gi[1] * gj[1] } else { 0.0 };
    match form {
        VelocityForm::Strain => lap + gj[b] * gi[a],
        VelocityForm::GradDiv => lap + gj[a] * gi[b],
        VelocityForm::Gradient => lap,
    }
}

impl StokesOperator {
    pub fn new(mesh: Arc<Mesh>, form: VelocityForm) -> Self {
        let nu = Family::P2Vector.ndofs(&mesh);
        let np = Family::P1.ndofs(&mesh);
        let rule = triangle_rule(4);
        let mut stiffness = Vec::with_capacity(144 * mesh.num_triangles());
        let mut mass = Vec::with_capacity(72 * mesh.num_triangles());
        let mut coupling = Vec::with_capacity(36 * mesh.num_triangles());
        let mut p_weights = vec![0.0; np];
        for t in 0..mesh.num_triangles() {
            let dofs = Family::P2Vector.element_dofs(&mesh, t);
            let tri = mesh.triangles()[t];
            let g = mesh.bary_gradients(t);
            let area = mesh.area(t);
            let mut ke = [[0.0; 12]; 12];
            let mut me = [[0.0; 6]; 6];
            let mut ce = [[0.0; 12]; 3];
            for (b, w) in rule.bary.iter().zip(&rule.weights) {
                let w = w * area;
                let v = p2_values(*b);
                let gr = p2_gradients(*b, &g);
                for i in 0..6 {
                    for j in 0..6 {
                        me[i][j] += w * v[i] * v[j];
                        for bb in 0..2 {
                            for aa in 0..2 {
                                ke[6 * bb + i][6 * aa + j] += w * form_entry(form, aa, bb, gr[i], gr[j]);
                            }
                        }
                    }
                }
                for k in 0..3 {
                    for aa in 0..2 {
                        for j in 0..6 {
                            ce[k][6 * aa + j] -= w * b[k] * gr[j][aa];
                        }
                    }
                }
            }
            for r in 0..12 {
                for c in 0..12 {
                    stiffness.push((dofs[r], dofs[c], ke[r][c]));
                }
            }
            for aa in 0..2 {
                for i in 0..6 {
                    for j in 0..6 {
                        mass.push((dofs[6 * aa + i], dofs[6 * aa + j], me[i][j]));
                    }
                }
            }
            for k in 0..3 {
                p_weights[tri[k]] += area / 3.0;
                for c in 0..12 {
                    coupling.push((tri[k], dofs[c], ce[k][c]));
                }
            }
        }
        let mut boundary = vec![false; nu];
        for d in Family::P2Vector.boundary_dofs(&mesh) {
            boundary[d] = true;
        }
        // pin the pressure at the node closest to the domain's centroid-ish first node
        let pin = 0;
        Self { mesh, form, nu, np, stiffness, mass, coupling, boundary, p_weights, pin }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn form(&self) -> VelocityForm {
        self.form
    }
    pub fn velocity_dofs(&self) -> usize {
        self.nu
    }
    pub fn pressure_dofs(&self) -> usize {
        self.np
    }
    pub fn is_boundary_dof(&self, d: usize) -> bool {
        self.boundary[d]
    }

    /// Velocity block `K + s M` without boundary conditions.
    pub fn velocity_matrix(&self, s: C64) -> Csr {
        let mut t = Triplets::with_capacity(self.nu, self.stiffness.len() + self.mass.len());
        for &(i, j, v) in &self.stiffness {
            t.push_real(i, j, v);
        }
        if s != ZERO {
            for &(i, j, v) in &self.mass {
                t.push(i, j, s * v);
            }
        }
        t.to_csr()
    }

    pub fn mass_matrix(&self) -> Csr {
        let mut t = Triplets::with_capacity(self.nu, self.mass.len());
        for &(i, j, v) in &self.mass {
            t.push_real(i, j, v);
        }
        t.to_csr()
    }

    /// Full saddle-point matrix with Dirichlet and pinned-pressure rows.
    fn system_matrix(&self, s: C64) -> Csr {
        let n = self.nu + self.np;
        let mut t = Triplets::with_capacity(n, self.stiffness.len() + self.mass.len() + 2 * self.coupling.len() + n);
        for &(i, j, v) in &self.stiffness {
            if !self.boundary[i] {
                t.push_real(i, j, v);
            }
        }
        for &(i, j, v) in &self.mass {
            if !self.boundary[i] {
                t.push(i, j, s * v);
            }
        }
        for &(k, j, v) in &self.coupling {
            if !self.boundary[j] {
                t.push_real(j, self.nu + k, v);
            }
            if k != self.pin {
                t.push_real(self.nu + k, j, v);
            }
        }
        for (i, &b) in self.boundary.iter().enumerate() {
            if b {
                t.push_real(i, i, 1.0);
            }
        }
        t.push_real(self.nu + self.pin, self.nu + self.pin, 1.0);
        t.to_csr()
    }

    pub fn factor(self: &Arc<Self>, s: C64) -> Result<StokesSystem> {
        if s.re < 0.0 {
            return Err(Error::InvalidInput(format!("Re s must be nonnegative, got {s}")));
        }
        let fact = Factorization::new(self.system_matrix(s))?;
        Ok(StokesSystem { op: self.clone(), s, fact })
    }

    /// `(f, ψ e_a)` for every velocity dof.
    pub fn velocity_load(&self, f: &VectorData) -> Vec<C64> {
        let mut load = vec![ZERO; self.nu];
        if f.is_zero() {
            return load;
        }
        let rule = triangle_rule(6);
        for t in 0..self.mesh.num_triangles() {
            let dofs = Family::P2Vector.element_dofs(&self.mesh, t);
            let area = self.mesh.area(t);
            for (b, w) in rule.bary.iter().zip(&rule.weights) {
                let x = self.mesh.point_at(t, *b);
                let (fv, _) = f.eval(t, *b, x);
                let v = p2_values(*b);
                for a in 0..2 {
                    for i in 0..6 {
                        load[dofs[6 * a + i]] += fv[a] * (w * area * v[i]);
                    }
                }
            }
        }
        load
    }

    /// `(g, λ_k)` for every pressure dof.
    pub fn pressure_load(&self, g: &ScalarData) -> Vec<C64> {
        let mut load = vec![ZERO; self.np];
        if g.is_zero() {
            return load;
        }
        let rule = triangle_rule(6);
        for t in 0..self.mesh.num_triangles() {
            let tri = self.mesh.triangles()[t];
            let area = self.mesh.area(t);
            for (b, w) in rule.bary.iter().zip(&rule.weights) {
                let x = self.mesh.point_at(t, *b);
                let (gv, _) = g.eval(t, *b, x);
                for k in 0..3 {
                    load[tri[k]] += gv * (w * area * b[k]);
                }
            }
        }
        load
    }

    /// Discrete divergence `(∇·u, λ_k)` per pressure dof.
    pub fn divergence_moments(&self, u: &[C64]) -> Vec<C64> {
        let mut r = vec![ZERO; self.np];
        for &(k, j, v) in &self.coupling {
            r[k] -= u[j] * v;
        }
        r
    }

    pub fn p_weights(&self) -> &[f64] {
        &self.p_weights
    }
}

/// Operator factorized at a fixed `s`; safe to share for concurrent solves.
#[derive(Debug, Clone)]
pub struct StokesSystem {
    op: Arc<StokesOperator>,
    s: C64,
    fact: Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative residual of the linear system as solved.
    pub linear: f64,
    /// Momentum residual over interior velocity dofs (relative to the load).
    pub momentum: f64,
    /// Divergence residual over all pressure dofs (relative to the load).
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub u_v2: f64,
    pub s_u_v0: f64,
    pub grad_p_v0: f64,
    /// Only when every weight component is positive.
    pub p_v1: Option<f64>,
    pub f_v0: f64,
    pub g_v1: f64,
    /// `(u_v2 + s_u_v0 + grad_p_v0) / (f_v0 + g_v1)`; `None` for 0/0.
    pub ratio: Option<f64>,
    pub admissible: bool,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub s: C64,
    pub u: DiscreteField,
    pub p: DiscreteField,
    pub residuals: Residuals,
    pub norm_report: Option<NormReport>,
}

impl FlowSolution {
    pub fn pressure_mean(&self) -> C64 {
        let w = crate::stokes::pressure_weights(self.p.mesh());
        self.p.coeffs().iter().zip(&w).map(|(p, w)| p * w).sum()
    }
}

pub fn pressure_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_nodes()];
    for t in 0..mesh.num_triangles() {
        let a = mesh.area(t) / 3.0;
        for v in mesh.triangles()[t] {
            w[v] += a;
        }
    }
    w
}

impl StokesSystem {
    pub fn s(&self) -> C64 {
        self.s
    }

    pub fn operator(&self) -> &Arc<StokesOperator> {
        &self.op
    }

    pub fn solve(&self, f: &VectorData, g: &ScalarData) -> Result<FlowSolution> {
        let op = &self.op;
        f.validate(&op.mesh)?;
        g.validate(&op.mesh)?;
        self.solve_loads(&op.velocity_load(f), &op.pressure_load(g))
    }

    /// Solves with assembled loads `(f, ψ)` and `(g, λ)`.
    pub fn solve_loads(&self, fu: &[C64], gp: &[C64]) -> Result<FlowSolution> {
        let op = &self.op;
        let mean: C64 = gp.iter().sum();
        let scale: f64 = gp.iter().map(|v| v.norm()).sum::<f64>().max(1.0);
        if mean.norm() > 1e-10 * scale {
            return Err(Error::IncompatibleData(format!("∫g = {mean:e} is not zero")));
        }
        let mut rhs = Vec::with_capacity(op.nu + op.np);
        rhs.extend(fu.iter().enumerate().map(|(i, v)| if op.boundary[i] { ZERO } else { *v }));
        rhs.extend(gp.iter().enumerate().map(|(k, v)| if k == op.pin { ZERO } else { *v }));
        let (x, linear) = self.fact.solve_with_residual(&rhs)?;
        let mut u = x[..op.nu].to_vec();
        for (i, v) in u.iter_mut().enumerate() {
            if op.boundary[i] {
                *v = ZERO;
            }
        }
        let mut p = x[op.nu..].to_vec();
        let area: f64 = op.p_weights.iter().sum();
        let pm: C64 = p.iter().zip(&op.p_weights).map(|(p, w)| p * w).sum::<C64>() / area;
        for v in &mut p {
            *v -= pm;
        }
        // residuals of the unpinned system
        let a = op.velocity_matrix(self.s);
        let mut ru = a.mul_vec(&u);
        for &(k, j, v) in &op.coupling {
            ru[j] += p[k] * v;
        }
        let mut mom = 0.0;
        let mut fnorm = 0.0;
        for i in 0..op.nu {
            if !op.boundary[i] {
                mom += (fu[i] - ru[i]).norm_sqr();
                fnorm += fu[i].norm_sqr();
            }
        }
        let divm = op.divergence_moments(&u);
        let div: f64 = gp.iter().zip(&divm).map(|(g, d)| (g + d).norm_sqr()).sum();
        let gnorm = norm2(gp).powi(2);
        let rel = |r: f64, n: f64| if n > 0.0 { (r / n).sqrt() } else { r.sqrt() };
        let residuals = Residuals { linear, momentum: rel(mom, fnorm + gnorm), divergence: rel(div, fnorm + gnorm) };
        Ok(FlowSolution {
            s: self.s,
            u: DiscreteField::new(op.mesh.clone(), Family::P2Vector, u)?,
            p: DiscreteField::new(op.mesh.clone(), Family::P1, p)?,
            residuals,
            norm_report: None,
        })
    }
}

/// The parameter-dependent problem with its data and weight.
#[derive(Debug, Clone)]
pub struct ResolventProblem {
    pub s: C64,
    pub f: VectorData,
    pub g: ScalarData,
    pub mesh: Arc<Mesh>,
    pub beta: WeightVector,
}

impl ResolventProblem {
    pub fn validate(&self) -> Result<()> {
        if self.s.re < 0.0 || self.s == ZERO {
            return Err(Error::InvalidInput(format!("need Re s >= 0 and s != 0, got {}", self.s)));
        }
        if self.beta.len() != self.mesh.corners().len() {
            return Err(Error::InvalidInput("weight length differs from corner count".into()));
        }
        self.f.validate(&self.mesh)?;
        self.g.validate(&self.mesh)
    }
}

/// Builds, factors and solves the resolvent problem and attaches the norm report.
pub fn solve_weak_resolvent(problem: &ResolventProblem) -> Result<FlowSolution> {
    problem.validate()?;
    let op = Arc::new(StokesOperator::new(problem.mesh.clone(), VelocityForm::Strain));
    let sys = op.factor(problem.s)?;
    let mut sol = sys.solve(&problem.f, &problem.g)?;
    sol.norm_report = Some(weighted_regularity_report(&sol, problem)?);
    Ok(sol)
}

/// First derivatives of a scalar field exposed as a two-component source.
pub struct GradientOf<'a>(pub &'a DiscreteField);

impl JetSource for GradientOf<'_> {
    fn ncomp(&self) -> usize {
        2
    }
    fn jet(&self, t: usize, b: [f64; 3], _x: Point) -> Jet {
        let j = self.0.jet(t, b);
        let mut out = Jet::zero(2);
        out.val = j.grad[0];
        for c in 0..2 {
            out.grad[c] = if c == 0 { [j.hess[0][0], j.hess[0][1]] } else { [j.hess[0][1], j.hess[0][2]] };
        }
        out
    }
}

/// Weighted norms of the solution against those of the data.
pub fn weighted_regularity_report(sol: &FlowSolution, problem: &ResolventProblem) -> Result<NormReport> {
    let mesh = sol.u.mesh();
    let quad = CornerQuadrature::default();
    let beta = &problem.beta;
    let v = |src: &dyn JetSource, l: usize| -> Result<f64> { Ok(source_norm(mesh, src, &NormSpec::v(l, beta.clone()), &quad)?.value) };
    let u_v2 = v(&sol.u, 2)?;
    let s_u_v0 = sol.s.norm() * v(&sol.u, 0)?;
    let grad_p_v0 = v(&GradientOf(&sol.p), 0)?;
    let p_v1 = if beta.beta.iter().all(|b| *b > 0.0) { Some(v(&sol.p, 1)?) } else { None };
    let f_v0 = v(&problem.f, 0)?;
    let g_v1 = v(&problem.g, 1)?;
    let lhs = u_v2 + s_u_v0 + grad_p_v0;
    let rhs = f_v0 + g_v1;
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
    Ok(NormReport { u_v2, s_u_v0, grad_p_v0, p_v1, f_v0, g_v1, ratio, admissible: beta.is_admissible(), beta: beta.beta.clone() })
}

// ---- divergence lifting ----------------------------------------------------

#[derive(Debug, Clone)]
pub struct Lift {
    pub w: DiscreteField,
    /// `‖w‖_{W¹} / ‖g‖_{L₂}` (0 for zero data)
    pub constant: f64,
    /// L₂ norm of the P1 projection of `∇·w − g`.
    pub residual: f64,
}

fn p1_mass(mesh: &Mesh) -> Csr {
    let mut t = Triplets::with_capacity(mesh.num_nodes(), 9 * mesh.num_triangles());
    for e in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[e];
        let a = mesh.area(e);
        for i in 0..3 {
            for j in 0..3 {
                t.push_real(tri[i], tri[j], if i == j { a / 6.0 } else { a / 12.0 });
            }
        }
    }
    t.to_csr()
}

/// `sqrt(r^H M^{-1} r)` for P1 moments `r`: the L₂ norm of their Riesz projection.
fn p1_moment_norm(mesh: &Mesh, r: &[C64]) -> Result<f64> {
    if r.iter().all(|v| *v == ZERO) {
        return Ok(0.0);
    }
    let m = p1_mass(mesh);
    let z = Factorization::new(m)?.solve(r)?;
    Ok(r.iter().zip(&z).map(|(a, b)| (a.conj() * b).re).sum::<f64>().max(0.0).sqrt())
}

/// Zero-trace `w` of minimal W¹ norm with `(∇·w, q) = (g, q)` for all P1 `q`.
pub fn lift_divergence(mesh: Arc<Mesh>, g: &ScalarData) -> Result<Lift> {
    let op = Arc::new(StokesOperator::new(mesh.clone(), VelocityForm::Gradient));
    lift_with(&op, g)
}

fn lift_with(op: &Arc<StokesOperator>, g: &ScalarData) -> Result<Lift> {
    let mesh = op.mesh().clone();
    let gp = op.pressure_load(g);
    let sys = op.factor(C64::new(1.0, 0.0))?;
    // constraint ∇·w = g is the resolvent's −∇·u = −g
    let neg: Vec<C64> = gp.iter().map(|v| -v).collect();
    let sol = sys.solve_loads(&vec![ZERO; op.velocity_dofs()], &neg)?;
    let w = sol.u;
    let divm = op.divergence_moments(w.coeffs());
    let r: Vec<C64> = divm.iter().zip(&gp).map(|(d, g)| d - g).collect();
    let residual = p1_moment_norm(&mesh, &r)?;
    let quad = CornerQuadrature::default();
    let wn = source_norm(&mesh, &w, &NormSpec::w(1), &quad)?.value;
    let gn = source_norm(&mesh, g, &NormSpec::w(0), &quad)?.value;
    Ok(Lift { w, constant: if gn > 0.0 { wn / gn } else { 0.0 }, residual })
}

/// C² cut-off `1` for `r <= t1·ε`, `0` for `r >= t2·ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub t1: f64,
    pub t2: f64,
}

impl Cutoff {
    pub fn eval(&self, r: f64, eps: f64) -> f64 {
        let x = (r / eps - self.t1) / (self.t2 - self.t1);
        if x <= 0.0 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
        }
    }
}

pub const CUTOFF_PROFILES: [Cutoff; 3] = [Cutoff { t1: 0.25, t2: 0.6 }, Cutoff { t1: 0.35, t2: 0.9 }, Cutoff { t1: 0.5, t2: 0.75 }];

#[derive(Debug, Clone)]
pub struct LocalLift {
    pub w: DiscreteField,
    /// Blend `θ = α ζ − (α − 1) χ` of the two profiles used.
    pub blend_alpha: f64,
    pub profiles: (Cutoff, Cutoff),
    /// `∫ θ g` recomputed with the blended cut-off.
    pub blended_mean: C64,
    /// Relative residual of `(∇·w + g, q)` over P1 `q` supported where `θ = 1`.
    pub inner_residual: f64,
    pub eps: f64,
}

/// Zero-trace `w` supported near corner `j` with `∇·w + g = 0` where the
/// blended cut-off equals 1.
pub fn localize_divergence(mesh: Arc<Mesh>, g: &ScalarData, corner: usize, eps: f64) -> Result<LocalLift> {
    let c = *mesh.corners().get(corner).ok_or_else(|| Error::InvalidInput(format!("no corner {corner}")))?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("patch radius must be positive".into()));
    }
    let rule = triangle_rule(8);
    let moments = |z: &dyn Fn(f64) -> f64| -> C64 {
        let mut s = ZERO;
        for t in 0..mesh.num_triangles() {
            let area = mesh.area(t);
            for (b, w) in rule.bary.iter().zip(&rule.weights) {
                let x = mesh.point_at(t, *b);
                let zv = z(dist(x, c));
                if zv != 0.0 {
                    s += g.eval(t, *b, x).0 * (w * area * zv);
                }
            }
        }
        s
    };
    let ints: Vec<C64> = CUTOFF_PROFILES.iter().map(|p| moments(&|r| p.eval(r, eps))).collect();
    let scale = ints.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let zero_tol = 1e-14 * scale.max(1e-300);
    let patch_zero = (0..mesh.num_triangles()).all(|t| {
        let x = mesh.point_at(t, [1.0 / 3.0; 3]);
        dist_to_tri(&mesh, t, c) >= eps || g.eval(t, [1.0 / 3.0; 3], x).0 == ZERO
    });
    if scale == 0.0 && patch_zero {
        return Ok(LocalLift {
            w: DiscreteField::zeros(mesh.clone(), Family::P2Vector),
            blend_alpha: 1.0,
            profiles: (CUTOFF_PROFILES[0], CUTOFF_PROFILES[1]),
            blended_mean: ZERO,
            inner_residual: 0.0,
            eps,
        });
    }
    // choose a pair with distinct integrals
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let (i, j) = pairs
        .iter()
        .copied()
        .find(|&(i, j)| (ints[i] - ints[j]).norm() > 1e-12 * scale)
        .ok_or(Error::CutoffDegenerate(ints[0].norm()))?;
    let (a, b) = (ints[i], ints[j]);
    // α a − (α − 1) b = 0
    let alpha_c = b / (b - a);
    if alpha_c.im.abs() > 1e-12 * alpha_c.norm() {
        return Err(Error::CutoffDegenerate(a.norm()));
    }
    let alpha = alpha_c.re;
    let (zeta, chi) = (CUTOFF_PROFILES[i], CUTOFF_PROFILES[j]);
    let theta = move |r: f64| alpha * zeta.eval(r, eps) - (alpha - 1.0) * chi.eval(r, eps);
    let blended_mean = moments(&theta);
    let _ = zero_tol;

    // patch: elements meeting the disc r < ε
    let elems: Vec<usize> = (0..mesh.num_triangles()).filter(|&t| dist_to_tri(&mesh, t, c) < eps).collect();
    let (sub, back) = mesh.submesh(&elems)?;
    let sub = Arc::new(sub);
    let op = Arc::new(StokesOperator::new(sub.clone(), VelocityForm::Gradient));
    // data −θ g evaluated through the parent element
    let theta_g = {
        let mesh = mesh.clone();
        let elems = elems.clone();
        let g = g.clone();
        ThetaG { parent: mesh, elems, g, theta: Box::new(theta), corner: c }
    };
    let mut gp = vec![ZERO; op.pressure_dofs()];
    for st in 0..sub.num_triangles() {
        let tri = sub.triangles()[st];
        let area = sub.area(st);
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let v = theta_g.value(st, *b);
            for k in 0..3 {
                gp[tri[k]] += v * (w * area * b[k]);
            }
        }
    }
    // exact compatibility on the patch: remove rounding in ∫θg
    let lift = {
        let sys = op.factor(C64::new(1.0, 0.0))?;
        let total: C64 = gp.iter().sum();
        let wsum: f64 = op.p_weights().iter().sum();
        let gp: Vec<C64> = gp.iter().zip(op.p_weights()).map(|(v, w)| v - total * (w / wsum)).collect();
        // ∇·w = −θ g  ⇔  −∇·w = θ g
        sys.solve_loads(&vec![ZERO; op.velocity_dofs()], &gp)?.u
    };
    // map to the parent mesh
    let parent_edges: BTreeMap<(usize, usize), usize> = mesh.edges().iter().enumerate().map(|(e, ab)| ((ab[0], ab[1]), e)).collect();
    let nsub = sub.num_nodes() + sub.num_edges();
    let npar = mesh.num_nodes() + mesh.num_edges();
    let mut coeffs = vec![ZERO; 2 * npar];
    for comp in 0..2 {
        for (si, &gi) in back.iter().enumerate() {
            coeffs[comp * npar + gi] = lift.coeffs()[comp * nsub + si];
        }
        for (se, ab) in sub.edges().iter().enumerate() {
            let (x, y) = (back[ab[0]], back[ab[1]]);
            let pe = parent_edges[&(x.min(y), x.max(y))];
            coeffs[comp * npar + mesh.num_nodes() + pe] = lift.coeffs()[comp * nsub + sub.num_nodes() + se];
        }
    }
    let w = DiscreteField::new(mesh.clone(), Family::P2Vector, coeffs)?;

    // residual over P1 test functions whose support lies in {θ = 1}
    let inner = zeta.t1.min(chi.t1) * eps;
    let full = Arc::new(StokesOperator::new(mesh.clone(), VelocityForm::Gradient));
    let divm = full.divergence_moments(w.coeffs());
    let gl = full.pressure_load(g);
    let mut star_far = vec![0.0f64; mesh.num_nodes()];
    for t in 0..mesh.num_triangles() {
        let far = mesh.vertices_of(t).iter().map(|p| dist(*p, c)).fold(0.0, f64::max);
        for v in mesh.triangles()[t] {
            star_far[v] = star_far[v].max(far);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..mesh.num_nodes() {
        if star_far[k] <= inner {
            num += (divm[k] + gl[k]).norm_sqr();
            den += gl[k].norm_sqr();
        }
    }
    let inner_residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(LocalLift { w, blend_alpha: alpha, profiles: (zeta, chi), blended_mean, inner_residual, eps })
}

fn dist_to_tri(mesh: &Mesh, t: usize, c: Point) -> f64 {
    crate::geometry::dist_to_triangle(c, mesh.vertices_of(t))
}

struct ThetaG {
    parent: Arc<Mesh>,
    elems: Vec<usize>,
    g: ScalarData,
    theta: Box<dyn Fn(f64) -> f64>,
    corner: Point,
}

impl ThetaG {
    /// `θ g` on sub-element `st` (same vertex order as the parent element).
    fn value(&self, st: usize, b: [f64; 3]) -> C64 {
        let t = self.elems[st];
        let x = self.parent.point_at(t, b);
        let th = (self.theta)(dist(x, self.corner));
        if th == 0.0 {
            return ZERO;
        }
        self.g.eval(t, b, x).0 * th
    }
}

// ---- inf-sup ---------------------------------------------------------------

/// Discrete inf-sup constant of the P2/P1 pair:
/// `min_{q ⟂ 1} sup_v (q, ∇·v) / (|v|_{W¹} ‖q‖_{L₂})`, from the pressure Schur complement.
pub fn inf_sup_constant(mesh: Arc<Mesh>) -> Result<f64> {
    let op = StokesOperator::new(mesh.clone(), VelocityForm::Gradient);
    let nu = op.velocity_dofs();
    let np = op.pressure_dofs();
    let mut a = op.velocity_matrix(ZERO);
    for i in 0..nu {
        if op.is_boundary_dof(i) {
            a.set_identity_row(i);
        }
    }
    // zero boundary columns too so the block stays symmetric
    let mut t = Triplets::new(nu);
    for i in 0..nu {
        for (j, v) in a.row(i) {
            if i == j || (!op.is_boundary_dof(i) && !op.is_boundary_dof(j)) {
                t.push(i, j, v);
            }
        }
    }
    let fact = Factorization::new(t.to_csr())?;
    let mut bt: Vec<Vec<C64>> = vec![vec![ZERO; nu]; np];
    for &(k, j, v) in &op.coupling {
        if !op.is_boundary_dof(j) {
            bt[k][j] += C64::new(v, 0.0);
        }
    }
    let mut s = DMatrix::<f64>::zeros(np, np);
    for k in 0..np {
        let y = fact.solve(&bt[k])?;
        for l in 0..np {
            let v: f64 = bt[l].iter().zip(&y).map(|(b, y)| (b * y).re).sum();
            s[(l, k)] = v;
        }
    }
    let mut m = DMatrix::<f64>::zeros(np, np);
    let mp = p1_mass(&mesh);
    for i in 0..np {
        for (j, v) in mp.row(i) {
            m[(i, j)] = v.re;
        }
    }
    let chol = m.cholesky().ok_or_else(|| Error::SolverFailure("pressure mass not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::SolverFailure("singular Cholesky factor".into()))?;
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // the constant pressure spans the kernel
    Ok(ev.get(1).copied().unwrap_or(0.0).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{re, ScalarFn, VectorFn};
    use crate::geometry::PolygonDomain;
    use crate::mesh::{generate_graded_mesh, MeshOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(h: f64) -> Arc<Mesh> {
        Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(h)).unwrap())
    }

    fn quad_form(a: &Csr, u: &[C64]) -> C64 {
        let conj: Vec<C64> = u.iter().map(|x| x.conj()).collect();
        a.bilinear(&conj, u)
    }

    #[test]
    fn rotation_has_no_strain() {
        let m = square(0.25);
        let op = StokesOperator::new(m.clone(), VelocityForm::Strain);
        let s = C64::new(0.3, 2.0);
        let u = DiscreteField::interpolate_vector(m.clone(), |x| [re(-x[1]), re(x[0])]);
        let a = op.velocity_matrix(s);
        let m0 = op.mass_matrix();
        let lhs = quad_form(&a, u.coeffs());
        let rhs = s * quad_form(&m0, u.coeffs());
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm());
        assert_eq!(quad_form(&a, &vec![ZERO; u.coeffs().len()]), ZERO);
    }

    #[test]
    fn strain_and_grad_div_forms_agree_on_zero_trace() {
        let m = square(0.25);
        let strain = StokesOperator::new(m.clone(), VelocityForm::Strain).velocity_matrix(ZERO);
        let gd = StokesOperator::new(m.clone(), VelocityForm::GradDiv).velocity_matrix(ZERO);
        let bd = Family::P2Vector.boundary_dofs(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut u: Vec<C64> = (0..strain.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let mut v: Vec<C64> = (0..strain.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
            for &d in &bd {
                u[d] = ZERO;
                v[d] = ZERO;
            }
            let a = strain.bilinear(&v, &u);
            let b = gd.bilinear(&v, &u);
            assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let m = square(0.25);
        let p = ResolventProblem { s: C64::new(0.0, 10.0), f: VectorData::zero(), g: ScalarData::zero(), mesh: m, beta: WeightVector::uniform(4, 0.5) };
        let sol = solve_weak_resolvent(&p).unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
        assert_eq!(sol.p.max_abs(), 0.0);
        let r = sol.norm_report.unwrap();
        assert_eq!(r.u_v2, 0.0);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn incompatible_divergence_is_rejected() {
        let m = square(0.5);
        let g = ScalarData::function(Arc::new(ScalarFn(|_| re(1.0), |_| [ZERO; 2])));
        let p = ResolventProblem { s: C64::new(1.0, 0.0), f: VectorData::zero(), g, mesh: m, beta: WeightVector::uniform(4, 0.5) };
        assert!(matches!(solve_weak_resolvent(&p), Err(Error::IncompatibleData(_))));
        let bad = ResolventProblem { s: ZERO, ..p };
        assert!(matches!(solve_weak_resolvent(&bad), Err(Error::InvalidInput(_))));
    }

    fn smooth_force() -> VectorData {
        VectorData::function(Arc::new(VectorFn(
            |x: Point| [re((3.0 * x[0]).sin() * x[1]), re(x[0] * x[0] - 0.5 * x[1])],
            |x: Point| [[re(3.0 * (3.0 * x[0]).cos() * x[1]), re((3.0 * x[0]).sin())], [re(2.0 * x[0]), re(-0.5)]],
        )))
    }

    #[test]
    fn solves_are_deterministic_and_conjugation_symmetric() {
        let m = square(0.25);
        let op = Arc::new(StokesOperator::new(m.clone(), VelocityForm::Strain));
        let s = C64::new(0.5, 3.0);
        let f = smooth_force().scaled(C64::new(1.0, 0.5));
        let a = op.factor(s).unwrap().solve(&f, &ScalarData::zero()).unwrap();
        let b = op.factor(s).unwrap().solve(&f, &ScalarData::zero()).unwrap();
        assert_eq!(a.u.coeffs(), b.u.coeffs());
        let c = op.factor(s.conj()).unwrap().solve(&f.conj(), &ScalarData::zero()).unwrap();
        for (x, y) in a.u.coeffs().iter().zip(c.u.coeffs()) {
            assert!((x.conj() - y).norm() < 1e-10);
        }
        assert!(a.residuals.linear <= 1e-10 && a.residuals.momentum <= 1e-10 && a.residuals.divergence <= 1e-10);
        assert!(a.pressure_mean().norm() < 1e-12);
    }

    fn split_sign() -> ScalarData {
        ScalarData::function(Arc::new(ScalarFn(|x: Point| re(if x[0] < 0.5 { 1.0 } else { -1.0 }), |_| [ZERO; 2])))
    }

    #[test]
    fn lifting_matches_divergence() {
        let z = lift_divergence(square(0.25), &ScalarData::zero()).unwrap();
        assert_eq!(z.w.max_abs(), 0.0);
        let m = square(0.25);
        let l = lift_divergence(m.clone(), &split_sign()).unwrap();
        assert!(l.residual <= 1e-8, "{}", l.residual);
        assert!(l.constant > 0.0 && l.constant.is_finite());
        // linearity
        let g2 = ScalarData::function(Arc::new(ScalarFn(|x: Point| re(x[1] - 0.5), |_| [ZERO, re(1.0)])));
        let a = lift_divergence(m.clone(), &split_sign()).unwrap().w;
        let b = lift_divergence(m.clone(), &g2).unwrap().w;
        let mut sum = split_sign();
        sum.terms.extend(g2.terms.clone());
        let c = lift_divergence(m, &sum).unwrap().w;
        let d = c.axpy(re(-1.0), &a).unwrap().axpy(re(-1.0), &b).unwrap();
        assert!(d.max_abs() < 1e-10);
    }

    #[test]
    fn localized_lifting_near_a_corner() {
        let m = Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(1.0 / 16.0)).unwrap());
        // unit mass on an annulus sector inside the patch, balanced far away
        let g = ScalarData::function(Arc::new(ScalarFn(
            |x: Point| {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                re(if (0.1..0.2).contains(&r) { 1.0 } else if x[0] > 0.75 && x[1] > 0.75 { -1.0 } else { 0.0 })
            },
            |_| [ZERO; 2],
        )));
        let l = localize_divergence(m.clone(), &g, 0, 0.4).unwrap();
        assert!(l.blended_mean.norm() <= 1e-12, "{}", l.blended_mean);
        assert!(l.inner_residual <= 1e-8, "{}", l.inner_residual);
        // far from the corner, w vanishes
        let j = l.w.eval_at([0.9, 0.9]).unwrap();
        assert_eq!(j.val[0], ZERO);
        // zero data near the corner
        let far = ScalarData::function(Arc::new(ScalarFn(|x: Point| re(if x[0] > 0.75 { 1.0 } else { 0.0 }), |_| [ZERO; 2])));
        let l = localize_divergence(m, &far, 0, 0.4).unwrap();
        assert_eq!(l.w.max_abs(), 0.0);
    }

    #[test]
    fn inf_sup_stays_bounded() {
        let b: Vec<f64> = [0.5, 0.25, 0.125].iter().map(|&h| inf_sup_constant(square(h)).unwrap()).collect();
        assert!(b.iter().all(|v| *v > 0.1), "{b:?}");
        for w in b.windows(2) {
            assert!(w[1] >= 0.9 * w[0], "{b:?}");
        }
    }
}
