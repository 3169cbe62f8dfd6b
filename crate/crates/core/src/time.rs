//! The evolution problem with zero initial velocity, solved by inverting the
//! Laplace transform along `Re s = γ`, and an implicit Euler oracle.
//!
//! Data are finite sums of separable terms `F(x) τ(t)`. Time profiles are
//! real, so `û(s̄) = conj û(s)` and only nodes with `Im s >= 0` are solved.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DiscreteField, Family, ScalarData, VectorData, C64, ZERO};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre, CornerQuadrature};
use crate::sparse::{Csr, Triplets};
use crate::stokes::{StokesOperator, VelocityForm};
use crate::weighted::{source_norm, Admissibility, NormSpec, WeightVector};

/// `Σ_k poly[k] t^k e^{−decay·t}` on `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub start: f64,
    /// `None` for an unbounded piece.
    pub end: Option<f64>,
    #[serde(default)]
    pub decay: f64,
    pub poly: Vec<f64>,
}

impl Piece {
    fn contains(&self, t: f64) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e)
    }

    fn eval(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for c in self.poly.iter().rev() {
            v = v * t + c;
        }
        v * (-self.decay * t).exp()
    }

    /// `∫_start^end t^k e^{−zt} dt` for `k = 0..n`.
    fn moments(&self, z: C64, n: usize) -> Result<Vec<C64>> {
        let t0 = self.start;
        match self.end {
            None if z.re <= 0.0 => Err(Error::InvalidInput("unbounded time piece needs Re(s + decay) > 0".into())),
            Some(t1) if z.norm() * (t1 - t0) < 1.0 => {
                // small argument: the recursion below cancels, integrate directly
                let gl = gauss_legendre(24);
                let len = t1 - t0;
                let mut m = vec![ZERO; n];
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let t = t0 + len * x;
                    let e = (-z * t).exp() * (w * len);
                    let mut tk = 1.0;
                    for mk in m.iter_mut() {
                        *mk += e * tk;
                        tk *= t;
                    }
                }
                Ok(m)
            }
            end => {
                let e0 = (-z * t0).exp();
                let e1 = end.map(|t1| (-z * t1).exp());
                let mut m = Vec::with_capacity(n);
                let (mut p0, mut p1) = (1.0, 1.0);
                for k in 0..n {
                    let mut v = e0 * p0;
                    if let (Some(t1), Some(e1)) = (end, e1) {
                        v -= e1 * p1;
                        p1 *= t1;
                    }
                    if k > 0 {
                        v += m[k - 1] * k as f64;
                    }
                    m.push(v / z);
                    p0 *= t0;
                }
                Ok(m)
            }
        }
    }

    fn transform(&self, s: C64) -> Result<C64> {
        let m = self.moments(s + self.decay, self.poly.len())?;
        Ok(self.poly.iter().zip(&m).map(|(c, m)| m * *c).sum())
    }
}

/// Scalar time profile `τ(t)`, zero for `t < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    Pieces(Vec<Piece>),
    /// Values at `i·step`, linearly interpolated and zero past the last sample.
    Samples { step: f64, values: Vec<f64> },
}

impl TimeProfile {
    pub fn constant(c: f64) -> Self {
        Self::Pieces(vec![Piece { start: 0.0, end: None, decay: 0.0, poly: vec![c] }])
    }

    /// `c t^k e^{−at}`
    pub fn monomial_exp(c: f64, k: usize, a: f64) -> Self {
        let mut poly = vec![0.0; k + 1];
        poly[k] = c;
        Self::Pieces(vec![Piece { start: 0.0, end: None, decay: a, poly }])
    }

    /// `1 − e^{−t}`
    pub fn ramp() -> Self {
        Self::Pieces(vec![
            Piece { start: 0.0, end: None, decay: 0.0, poly: vec![1.0] },
            Piece { start: 0.0, end: None, decay: 1.0, poly: vec![-1.0] },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Pieces(p) => {
                for q in p {
                    if !(q.start >= 0.0 && q.start.is_finite()) || q.end.is_some_and(|e| !(e > q.start)) || !q.decay.is_finite() || q.poly.iter().any(|c| !c.is_finite()) {
                        return Err(Error::InvalidInput(format!("bad time piece {q:?}")));
                    }
                }
            }
            Self::Samples { step, values } => {
                if !(*step > 0.0) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("bad sampled time profile".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Self::Pieces(p) => p.iter().filter(|q| q.contains(t)).map(|q| q.eval(t)).sum(),
            Self::Samples { step, values } => {
                let x = t / step;
                let i = x.floor() as usize;
                if i + 1 >= values.len() {
                    return if i + 1 == values.len() && x == i as f64 { values[i] } else { 0.0 };
                }
                let f = x - i as f64;
                values[i] * (1.0 - f) + values[i + 1] * f
            }
        }
    }

    /// Returns `(τ̂(s), error estimate)`.
    pub fn transform(&self, s: C64) -> Result<(C64, f64)> {
        match self {
            Self::Pieces(p) => {
                let mut v = ZERO;
                for q in p {
                    v += q.transform(s)?;
                }
                Ok((v, 0.0))
            }
            Self::Samples { step, values } => {
                let fine = sampled_transform(*step, values, s)?;
                if values.len() < 5 {
                    return Ok((fine, 0.0));
                }
                // every other sample; an odd trailing interval is kept at the fine step
                let odd = values.len() % 2 == 0;
                let head = if odd { &values[..values.len() - 1] } else { &values[..] };
                let coarse: Vec<f64> = head.iter().step_by(2).copied().collect();
                let mut c = sampled_transform(2.0 * step, &coarse, s)?;
                if odd {
                    let n = values.len();
                    c += sampled_transform_from(*step, &values[n - 2..], (n - 2) as f64 * step, s)?;
                }
                Ok((fine, (fine - c).norm() / 3.0))
            }
        }
    }
}

/// Exact transform of the piecewise-linear interpolant.
fn sampled_transform(step: f64, values: &[f64], s: C64) -> Result<C64> {
    sampled_transform_from(step, values, 0.0, s)
}

fn sampled_transform_from(step: f64, values: &[f64], origin: f64, s: C64) -> Result<C64> {
    let mut v = ZERO;
    for i in 0..values.len().saturating_sub(1) {
        let (a, b) = (values[i], values[i + 1]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let t0 = origin + i as f64 * step;
        // a + (b − a)(t − t0)/step = c0 + c1 t
        let c1 = (b - a) / step;
        let piece = Piece { start: t0, end: Some(t0 + step), decay: 0.0, poly: vec![a - c1 * t0, c1] };
        v += piece.transform(s)?;
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct EvolutionProblem {
    pub mesh: Arc<Mesh>,
    pub f: Vec<(VectorData, TimeProfile)>,
    pub g: Vec<(ScalarData, TimeProfile)>,
    pub t_final: f64,
    /// Contour abscissa.
    pub gamma: f64,
    pub gamma0: f64,
    pub beta: WeightVector,
    pub transform_tol: f64,
}

impl EvolutionProblem {
    pub fn new(mesh: Arc<Mesh>, t_final: f64, beta: WeightVector) -> Self {
        Self { mesh, f: Vec::new(), g: Vec::new(), t_final, gamma: 2.0, gamma0: 1.0, beta, transform_tol: 1e-8 }
    }

    pub fn force_at(&self, t: f64) -> VectorData {
        let mut d = VectorData::zero();
        for (f, tau) in &self.f {
            let c = tau.eval(t);
            if c != 0.0 {
                d.terms.extend(f.scaled(C64::new(c, 0.0)).terms);
            }
        }
        d
    }

    pub fn divergence_at(&self, t: f64) -> ScalarData {
        let mut d = ScalarData::zero();
        for (g, tau) in &self.g {
            let c = tau.eval(t);
            if c != 0.0 {
                d.terms.extend(g.scaled(C64::new(c, 0.0)).terms);
            }
        }
        d
    }
}

/// `(f̂(·,s), ĝ(·,s), estimate)`.
pub fn laplace_transform_data(problem: &EvolutionProblem, s: C64) -> Result<(VectorData, ScalarData, f64)> {
    let mut est = 0.0f64;
    let mut scale = 0.0f64;
    let mut f = VectorData::zero();
    for (fx, tau) in &problem.f {
        let (v, e) = tau.transform(s)?;
        est = est.max(e);
        scale = scale.max(v.norm());
        f.terms.extend(fx.scaled(v).terms);
    }
    let mut g = ScalarData::zero();
    for (gx, tau) in &problem.g {
        let (v, e) = tau.transform(s)?;
        est = est.max(e);
        scale = scale.max(v.norm());
        g.terms.extend(gx.scaled(v).terms);
    }
    if est > problem.transform_tol * scale.max(1.0) {
        return Err(Error::TransformUnderResolved { estimate: est });
    }
    Ok((f, g, est))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub max_mean_abs: f64,
    pub initial_divergence_l2: f64,
    pub beta_admissibility: Admissibility,
    pub mean_ok: bool,
    pub initial_ok: bool,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.initial_ok
    }
}

/// Times at which compatibility is sampled: 201 points on `[0, T]`.
fn check_times(t_final: f64) -> Vec<f64> {
    (0..=200).map(|k| t_final * k as f64 / 200.0).collect()
}

pub fn check_compatibility(problem: &EvolutionProblem) -> Result<CompatibilityReport> {
    let mesh = &problem.mesh;
    let quad = CornerQuadrature::default();
    let mut means = Vec::with_capacity(problem.g.len());
    let mut scales = Vec::with_capacity(problem.g.len());
    for (g, tau) in &problem.g {
        tau.validate()?;
        g.validate(mesh)?;
        let (m, a) = integrate_scalar(mesh, g);
        means.push(m);
        scales.push(a);
    }
    let mut max_mean_abs = 0.0f64;
    let mut max_scale = 0.0f64;
    for t in check_times(problem.t_final) {
        let mut m = ZERO;
        let mut a = 0.0;
        for ((_, tau), (mi, ai)) in problem.g.iter().zip(means.iter().zip(&scales)) {
            let c = tau.eval(t);
            m += mi * c;
            a += ai * c.abs();
        }
        max_mean_abs = max_mean_abs.max(m.norm());
        max_scale = max_scale.max(a);
    }
    let g0 = problem.divergence_at(0.0);
    let initial = if g0.is_zero() { 0.0 } else { source_norm(mesh, &g0, &NormSpec::w(0), &quad)?.value };
    Ok(CompatibilityReport {
        max_mean_abs,
        initial_divergence_l2: initial,
        beta_admissibility: problem.beta.tag,
        mean_ok: max_mean_abs <= 1e-10 * max_scale.max(1.0),
        initial_ok: initial <= 1e-12,
    })
}

/// `(∫g, ∫|g|)` by element quadrature.
fn integrate_scalar(mesh: &Mesh, g: &ScalarData) -> (C64, f64) {
    let rule = crate::quadrature::triangle_rule(6);
    let mut m = ZERO;
    let mut a = 0.0;
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let v = g.eval(t, *b, mesh.point_at(t, *b)).0 * (w * area);
            m += v;
            a += v.norm();
        }
    }
    (m, a)
}

fn require_compatible(problem: &EvolutionProblem) -> Result<CompatibilityReport> {
    if !(problem.t_final > 0.0) {
        return Err(Error::InvalidInput("final time must be positive".into()));
    }
    if problem.beta.len() != problem.mesh.corners().len() {
        return Err(Error::InvalidInput("weight length differs from corner count".into()));
    }
    for (f, tau) in &problem.f {
        tau.validate()?;
        f.validate(&problem.mesh)?;
    }
    let r = check_compatibility(problem)?;
    if !r.mean_ok {
        return Err(Error::IncompatibleData(format!("max_t |∫g(·,t)| = {:e}", r.max_mean_abs)));
    }
    if !r.initial_ok {
        return Err(Error::IncompatibleData(format!("g(·,0) has L2 norm {:e}", r.initial_divergence_l2)));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Laplace,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub t: f64,
    pub u_l2: f64,
    pub p_l2: f64,
    pub p_mean: f64,
    /// Velocity change against the refined contour rules (Laplace only).
    pub contour_change: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    /// Total node count on the symmetric line (odd).
    pub nodes: usize,
    /// Largest `|Im s|` used.
    pub cutoff: f64,
    /// Allowed estimate relative to `max_k ‖u(t_k)‖`.
    pub tol: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self { nodes: 129, cutoff: 80.0, tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourInfo {
    pub gamma: f64,
    pub nodes: usize,
    pub cutoff: f64,
    /// Sup over samples of the L₂ velocity change against the refined rules.
    pub estimate: f64,
    pub aliasing_change: f64,
    pub truncation_change: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub times: Vec<f64>,
    pub u: Vec<DiscreteField>,
    pub p: Vec<DiscreteField>,
    pub reports: Vec<SampleReport>,
    pub contour: Option<ContourInfo>,
}

/// L₂ norms through the assembled mass matrices.
struct Masses {
    u: Csr,
    p: Csr,
    p_weights: Vec<f64>,
}

impl Masses {
    fn new(op: &StokesOperator) -> Self {
        let mesh = op.mesh();
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
        Self { u: op.mass_matrix(), p: t.to_csr(), p_weights: op.p_weights().to_vec() }
    }

    fn norm(m: &Csr, x: &[C64]) -> f64 {
        let c: Vec<C64> = x.iter().map(|v| v.conj()).collect();
        m.bilinear(&c, x).re.max(0.0).sqrt()
    }

    fn u_l2(&self, x: &[C64]) -> f64 {
        Self::norm(&self.u, x)
    }

    fn report(&self, t: f64, u: &[C64], p: &[C64]) -> SampleReport {
        let mean: C64 = p.iter().zip(&self.p_weights).map(|(p, w)| p * w).sum();
        SampleReport { t, u_l2: self.u_l2(u), p_l2: Self::norm(&self.p, p), p_mean: mean.norm(), contour_change: None }
    }
}

fn check_times_sorted(times: &[f64], t_final: f64) -> Result<()> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("sample times must be finite, nonnegative and increasing".into()));
    }
    if *times.last().unwrap() > t_final * (1.0 + 1e-12) {
        return Err(Error::InvalidInput("sample times exceed the final time".into()));
    }
    Ok(())
}

/// Pre-assembled per-term loads.
struct TermLoads {
    fu: Vec<Vec<C64>>,
    gp: Vec<Vec<C64>>,
}

impl TermLoads {
    fn new(op: &StokesOperator, problem: &EvolutionProblem) -> Self {
        let fu = problem.f.par_iter().map(|(f, _)| op.velocity_load(f)).collect();
        let gp = problem.g.par_iter().map(|(g, _)| op.pressure_load(g)).collect();
        Self { fu, gp }
    }

    fn combine(loads: &[Vec<C64>], coef: &[C64], n: usize) -> Vec<C64> {
        let mut out = vec![ZERO; n];
        for (l, c) in loads.iter().zip(coef) {
            if *c != ZERO {
                for (o, v) in out.iter_mut().zip(l) {
                    *o += v * c;
                }
            }
        }
        out
    }
}

/// Resolvent solution coefficients at one contour node.
struct NodeSolution {
    u: Vec<C64>,
    p: Vec<C64>,
}

fn solve_node(op: &Arc<StokesOperator>, loads: &TermLoads, problem: &EvolutionProblem, s: C64) -> Result<NodeSolution> {
    let mut cf = Vec::with_capacity(problem.f.len());
    let mut est = 0.0f64;
    let mut scale = 0.0f64;
    for (_, tau) in &problem.f {
        let (v, e) = tau.transform(s)?;
        est = est.max(e);
        scale = scale.max(v.norm());
        cf.push(v);
    }
    let mut cg = Vec::with_capacity(problem.g.len());
    for (_, tau) in &problem.g {
        let (v, e) = tau.transform(s)?;
        est = est.max(e);
        scale = scale.max(v.norm());
        cg.push(v);
    }
    if est > problem.transform_tol * scale.max(1.0) {
        return Err(Error::TransformUnderResolved { estimate: est });
    }
    let fu = TermLoads::combine(&loads.fu, &cf, op.velocity_dofs());
    let gp = TermLoads::combine(&loads.gp, &cg, op.pressure_dofs());
    if fu.iter().all(|v| *v == ZERO) && gp.iter().all(|v| *v == ZERO) {
        return Ok(NodeSolution { u: vec![ZERO; op.velocity_dofs()], p: vec![ZERO; op.pressure_dofs()] });
    }
    let sol = op.factor(s)?.solve_loads(&fu, &gp)?;
    Ok(NodeSolution { u: sol.u.into_coeffs(), p: sol.p.into_coeffs() })
}

/// `(e^{γt} h / π) Re Σ_m w_m e^{iω_m t} x̂_m` with `w_0 = 1/2`, over `(ω_m, x̂_m)`.
fn bromwich(gamma: f64, h: f64, t: f64, nodes: &[(f64, &[C64])], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n];
    for (m, (w, x)) in nodes.iter().enumerate() {
        let c = C64::new(0.0, w * t).exp() * if m == 0 { 0.5 } else { 1.0 };
        for (o, v) in out.iter_mut().zip(x.iter()) {
            *o += c * v;
        }
    }
    let scale = (gamma * t).exp() * h / std::f64::consts::PI;
    out.iter().map(|v| C64::new(v.re * scale, 0.0)).collect()
}

/// Inverse Laplace transform on the line `Re s = γ` with `N` nodes.
///
/// Two companion rules give the error estimate: half the spacing up to the
/// same cutoff (aliasing), and the same spacing up to twice the cutoff
/// (truncation). The velocity at `t = 0` is the initial condition, zero.
pub fn solve_evolution_laplace(problem: &EvolutionProblem, contour: &ContourSpec, times: &[f64]) -> Result<Trajectory> {
    let traj = laplace_unchecked(problem, contour, times)?;
    let info = traj.contour.as_ref().unwrap();
    let size = traj.reports.iter().map(|r| r.u_l2).fold(0.0, f64::max);
    if info.estimate > contour.tol * size {
        return Err(Error::ContourUnderResolved { change: info.estimate });
    }
    Ok(traj)
}

fn laplace_unchecked(problem: &EvolutionProblem, contour: &ContourSpec, times: &[f64]) -> Result<Trajectory> {
    require_compatible(problem)?;
    check_times_sorted(times, problem.t_final)?;
    if !(problem.gamma > problem.gamma0) {
        return Err(Error::InvalidInput(format!("contour abscissa {} must exceed {}", problem.gamma, problem.gamma0)));
    }
    if contour.nodes < 3 || contour.nodes % 2 == 0 || !(contour.cutoff > 0.0) {
        return Err(Error::InvalidInput("contour needs an odd node count >= 3 and a positive cutoff".into()));
    }
    let m = (contour.nodes - 1) / 2;
    let h = contour.cutoff / m as f64;
    // fine grid index j ↦ ω = j h/2, j = 0..=2m; extension ω = (m + i) h, i = 1..=m
    let mut omegas: Vec<f64> = (0..=2 * m).map(|j| j as f64 * h / 2.0).collect();
    omegas.extend((1..=m).map(|i| (m + i) as f64 * h));
    let op = Arc::new(StokesOperator::new(problem.mesh.clone(), VelocityForm::Strain));
    let loads = TermLoads::new(&op, problem);
    let sols: Vec<NodeSolution> = omegas
        .par_iter()
        .map(|&w| solve_node(&op, &loads, problem, C64::new(problem.gamma, w)))
        .collect::<Result<Vec<_>>>()?;
    let base: Vec<usize> = (0..=m).map(|k| 2 * k).collect();
    let half: Vec<usize> = (0..=2 * m).collect();
    let ext: Vec<usize> = base.iter().copied().chain(2 * m + 1..2 * m + 1 + m).collect();
    let pick = |idx: &[usize], p: bool| -> Vec<(f64, &[C64])> {
        idx.iter().map(|&i| (omegas[i], if p { sols[i].p.as_slice() } else { sols[i].u.as_slice() })).collect()
    };
    let (nu, np) = (op.velocity_dofs(), op.pressure_dofs());
    let masses = Masses::new(&op);
    let (bu, bp, hu, eu) = (pick(&base, false), pick(&base, true), pick(&half, false), pick(&ext, false));
    let per_t: Vec<(Vec<C64>, Vec<C64>, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                let p = bromwich(problem.gamma, h, t, &bp, np);
                return (vec![ZERO; nu], p, 0.0, 0.0);
            }
            let u = bromwich(problem.gamma, h, t, &bu, nu);
            let p = bromwich(problem.gamma, h, t, &bp, np);
            let uh = bromwich(problem.gamma, h / 2.0, t, &hu, nu);
            let ue = bromwich(problem.gamma, h, t, &eu, nu);
            let d = |a: &[C64], b: &[C64]| -> f64 {
                let diff: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                masses.u_l2(&diff)
            };
            let (ca, ct) = (d(&u, &uh), d(&u, &ue));
            (u, p, ca, ct)
        })
        .collect();
    let mut traj = Trajectory { method: Method::Laplace, times: times.to_vec(), u: Vec::new(), p: Vec::new(), reports: Vec::new(), contour: None };
    let mut aliasing_change = 0.0f64;
    let mut truncation_change = 0.0f64;
    for (&t, (u, p, ca, ct)) in times.iter().zip(per_t) {
        aliasing_change = aliasing_change.max(ca);
        truncation_change = truncation_change.max(ct);
        let mut r = masses.report(t, &u, &p);
        r.contour_change = Some(ca + ct);
        traj.reports.push(r);
        traj.u.push(DiscreteField::new(problem.mesh.clone(), Family::P2Vector, u)?);
        traj.p.push(DiscreteField::new(problem.mesh.clone(), Family::P1, p)?);
    }
    let estimate = aliasing_change + truncation_change;
    traj.contour = Some(ContourInfo { gamma: problem.gamma, nodes: contour.nodes, cutoff: contour.cutoff, estimate, aliasing_change, truncation_change });
    Ok(traj)
}

/// Implicit Euler with step `dt`; every sample time must be a multiple of `dt`.
pub fn solve_evolution_euler(problem: &EvolutionProblem, dt: f64, times: &[f64]) -> Result<Trajectory> {
    require_compatible(problem)?;
    check_times_sorted(times, problem.t_final)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let k = (t / dt).round();
        if (k * dt - t).abs() > 1e-9 * dt.max(t) {
            return Err(Error::InvalidInput(format!("sample time {t} is not a multiple of dt = {dt}")));
        }
        steps.push(k as usize);
    }
    let op = Arc::new(StokesOperator::new(problem.mesh.clone(), VelocityForm::Strain));
    let loads = TermLoads::new(&op, problem);
    let masses = Masses::new(&op);
    let sys = op.factor(C64::new(1.0 / dt, 0.0))?;
    let (nu, np) = (op.velocity_dofs(), op.pressure_dofs());
    let mut u = vec![ZERO; nu];
    let mut p = vec![ZERO; np];
    let mut traj = Trajectory { method: Method::Euler, times: times.to_vec(), u: Vec::new(), p: Vec::new(), reports: Vec::new(), contour: None };
    let mut next = 0;
    let last = *steps.last().unwrap();
    for k in 0..=last {
        if k > 0 {
            let t = k as f64 * dt;
            let cf: Vec<C64> = problem.f.iter().map(|(_, tau)| C64::new(tau.eval(t), 0.0)).collect();
            let cg: Vec<C64> = problem.g.iter().map(|(_, tau)| C64::new(tau.eval(t), 0.0)).collect();
            let mut fu = TermLoads::combine(&loads.fu, &cf, nu);
            let mu = masses.u.mul_vec(&u);
            for (a, b) in fu.iter_mut().zip(&mu) {
                *a += b / dt;
            }
            let gp = TermLoads::combine(&loads.gp, &cg, np);
            let sol = sys.solve_loads(&fu, &gp)?;
            u = sol.u.into_coeffs();
            p = sol.p.into_coeffs();
        }
        while next < steps.len() && steps[next] == k {
            traj.reports.push(masses.report(times[next], &u, &p));
            traj.u.push(DiscreteField::new(problem.mesh.clone(), Family::P2Vector, u.clone())?);
            traj.p.push(DiscreteField::new(problem.mesh.clone(), Family::P1, p.clone())?);
            next += 1;
        }
    }
    Ok(traj)
}

/// `max_k ‖a(t_k) − b(t_k)‖_{L₂}` over samples with `t_k <= t_max`.
pub fn trajectory_difference(a: &Trajectory, b: &Trajectory, t_max: f64) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::InvalidInput("trajectories sampled at different times".into()));
    }
    let Some(u0) = a.u.first() else { return Ok(0.0) };
    let op = StokesOperator::new(u0.mesh().clone(), VelocityForm::Strain);
    let masses = Masses::new(&op);
    let mut d = 0.0f64;
    for (k, &t) in a.times.iter().enumerate() {
        if t <= t_max {
            let diff = b.u[k].axpy(C64::new(-1.0, 0.0), &a.u[k])?;
            d = d.max(masses.u_l2(diff.coeffs()));
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub window: f64,
    pub difference: f64,
    pub estimate: f64,
    /// `difference <= 10 · estimate`
    pub passed: bool,
    /// Difference past the agreement window; reported only.
    pub outside_difference: f64,
}

/// Solves two problems whose data agree on `(0, T)` and compares the
/// trajectories on `(0, window]` against the contour estimate on the same
/// samples. Resolution beyond the window (e.g. at a data cut) is not gated.
pub fn extension_independence_test(a: &EvolutionProblem, b: &EvolutionProblem, contour: &ContourSpec, times: &[f64], window: f64) -> Result<ExtensionReport> {
    let ta = laplace_unchecked(a, contour, times)?;
    let tb = laplace_unchecked(b, contour, times)?;
    let difference = trajectory_difference(&ta, &tb, window)?;
    let all = trajectory_difference(&ta, &tb, f64::INFINITY)?;
    let estimate = ta
        .reports
        .iter()
        .chain(&tb.reports)
        .filter(|r| r.t <= window)
        .filter_map(|r| r.contour_change)
        .fold(0.0, f64::max);
    Ok(ExtensionReport { window, difference, estimate, passed: difference <= 10.0 * estimate, outside_difference: all })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeNorm {
    /// `(∫ ‖u‖²_{V_β^2} + ‖∂_t u‖²_{V_β^0} dt)^{1/2}`
    pub u_w21: f64,
    /// `(∫ ‖f‖²_{V_β^0} dt)^{1/2}`
    pub f_l2v0: f64,
    /// `(∫ ‖g‖²_{V_β^1} dt)^{1/2}`
    pub g_l2v1: f64,
}

/// Trapezoid in time over the samples; `∂_t u` by centred differences.
pub fn space_time_norm(traj: &Trajectory, problem: &EvolutionProblem) -> Result<SpaceTimeNorm> {
    let n = traj.times.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let mesh = &problem.mesh;
    let quad = CornerQuadrature::default();
    let beta = &problem.beta;
    let t = &traj.times;
    let rows: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|k| -> Result<[f64; 3]> {
            let (i, j) = (k.saturating_sub(1), (k + 1).min(n - 1));
            let du = traj.u[j].axpy(C64::new(-1.0, 0.0), &traj.u[i])?.scaled(C64::new(1.0 / (t[j] - t[i]), 0.0));
            let u2 = source_norm(mesh, &traj.u[k], &NormSpec::v(2, beta.clone()), &quad)?.value;
            let ut = source_norm(mesh, &du, &NormSpec::v(0, beta.clone()), &quad)?.value;
            let f = source_norm(mesh, &problem.force_at(t[k]), &NormSpec::v(0, beta.clone()), &quad)?.value;
            let g = source_norm(mesh, &problem.divergence_at(t[k]), &NormSpec::v(1, beta.clone()), &quad)?.value;
            Ok([u2 * u2 + ut * ut, f * f, g * g])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = [0.0; 3];
    for k in 0..n - 1 {
        let w = 0.5 * (t[k + 1] - t[k]);
        for c in 0..3 {
            acc[c] += w * (rows[k][c] + rows[k + 1][c]);
        }
    }
    Ok(SpaceTimeNorm { u_w21: acc[0].sqrt(), f_l2v0: acc[1].sqrt(), g_l2v1: acc[2].sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{re, ScalarFn, VectorFn};
    use crate::geometry::{Point, PolygonDomain};
    use crate::mesh::{generate_graded_mesh, MeshOptions};

    fn square(h: f64) -> Arc<Mesh> {
        Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(h)).unwrap())
    }

    #[test]
    fn closed_form_transforms() {
        let s = C64::new(2.0, 3.0);
        let (v, e) = TimeProfile::monomial_exp(1.0, 0, 1.0).transform(s).unwrap();
        assert!((v - 1.0 / (s + 1.0)).norm() < 1e-15 && e == 0.0);
        let (v, _) = TimeProfile::monomial_exp(1.0, 2, 0.5).transform(s).unwrap();
        assert!((v - 2.0 / (s + 0.5).powi(3)).norm() < 1e-14);
        let (v, _) = TimeProfile::ramp().transform(s).unwrap();
        assert!((v - 1.0 / (s * (s + 1.0))).norm() < 1e-15);
        let (v, _) = TimeProfile::Pieces(vec![]).transform(s).unwrap();
        assert_eq!(v, ZERO);
    }

    fn tent_oracle(s: C64) -> C64 {
        // ∫_0^1 t e^{−st} + ∫_1^2 (2−t) e^{−st} = (1 − e^{−s})² / s²
        (1.0 - (-s).exp()).powi(2) / (s * s)
    }

    #[test]
    fn sampled_tent_matches_closed_form() {
        let values: Vec<f64> = (0..=40).map(|i| 1.0 - (i as f64 / 20.0 - 1.0).abs()).collect();
        let prof = TimeProfile::Samples { step: 0.05, values };
        for s in [C64::new(1.0, 0.0), C64::new(2.0, 7.0), C64::new(0.5, -40.0), C64::new(2.0, 0.01)] {
            let (v, e) = prof.transform(s).unwrap();
            assert!((v - tent_oracle(s)).norm() <= 1e-8, "{s}: {v} vs {}", tent_oracle(s));
            assert!(e <= 1e-8);
        }
        let pieces = TimeProfile::Pieces(vec![
            Piece { start: 0.0, end: Some(1.0), decay: 0.0, poly: vec![0.0, 1.0] },
            Piece { start: 1.0, end: Some(2.0), decay: 0.0, poly: vec![2.0, -1.0] },
        ]);
        let s = C64::new(1.5, 4.0);
        assert!((pieces.transform(s).unwrap().0 - tent_oracle(s)).norm() < 1e-13);
        assert!((pieces.eval(0.5) - 0.5).abs() < 1e-15 && pieces.eval(2.5) == 0.0);
    }

    #[test]
    fn coarse_samples_flag_under_resolution() {
        let values: Vec<f64> = (0..=8).map(|i| ((i as f64) * 0.7).sin().powi(2)).collect();
        let prof = TimeProfile::Samples { step: 0.25, values };
        let m = square(0.5);
        let mut p = EvolutionProblem::new(m, 2.0, WeightVector::uniform(4, 0.5));
        p.f.push((VectorData::function(Arc::new(VectorFn(|_| [re(1.0), ZERO], |_| [[ZERO; 2]; 2]))), prof));
        assert!(matches!(laplace_transform_data(&p, C64::new(1.0, 5.0)), Err(Error::TransformUnderResolved { .. })));
        p.transform_tol = 1.0;
        assert!(laplace_transform_data(&p, C64::new(1.0, 5.0)).is_ok());
    }

    fn balanced() -> ScalarData {
        ScalarData::function(Arc::new(ScalarFn(|x: Point| re(if x[0] < 0.5 { 1.0 } else { -1.0 }), |_| [ZERO; 2])))
    }

    #[test]
    fn compatibility_checks() {
        let m = square(0.25);
        let p = EvolutionProblem::new(m.clone(), 1.0, WeightVector::uniform(4, 0.5));
        assert!(check_compatibility(&p).unwrap().passed());
        let mut q = p.clone();
        q.g.push((balanced(), TimeProfile::monomial_exp(1.0, 1, 0.0)));
        assert!(check_compatibility(&q).unwrap().passed());
        let mut c = p.clone();
        c.g.push((ScalarData::function(Arc::new(ScalarFn(|_| re(1.0), |_| [ZERO; 2]))), TimeProfile::constant(1.0)));
        let r = check_compatibility(&c).unwrap();
        assert!(!r.mean_ok && (r.max_mean_abs - 1.0).abs() < 1e-12);
        assert!(matches!(solve_evolution_euler(&c, 0.1, &[0.1]), Err(Error::IncompatibleData(_))));
        let mut z = p.clone();
        z.g.push((balanced(), TimeProfile::constant(1.0)));
        let r = check_compatibility(&z).unwrap();
        assert!(r.mean_ok && !r.initial_ok);
        assert!(matches!(solve_evolution_laplace(&z, &ContourSpec::default(), &[0.5]), Err(Error::IncompatibleData(_))));
    }

    #[test]
    fn zero_data_gives_zero_trajectories() {
        let p = EvolutionProblem::new(square(0.5), 1.0, WeightVector::uniform(4, 0.5));
        let times = [0.0, 0.5, 1.0];
        for tr in [solve_evolution_laplace(&p, &ContourSpec::default(), &times).unwrap(), solve_evolution_euler(&p, 0.1, &times).unwrap()] {
            assert!(tr.u.iter().all(|u| u.max_abs() == 0.0));
            assert!(tr.p.iter().all(|p| p.max_abs() == 0.0));
        }
    }

    fn decaying_force() -> VectorData {
        VectorData::function(Arc::new(VectorFn(|x: Point| [re(x[1] * (1.0 - x[1])), re(x[0] * x[0])], |x: Point| [[ZERO, re(1.0 - 2.0 * x[1])], [re(2.0 * x[0]), ZERO]])))
    }

    #[test]
    fn euler_self_convergence() {
        let mut p = EvolutionProblem::new(square(0.25), 1.0, WeightVector::uniform(4, 0.5));
        p.f.push((decaying_force(), TimeProfile::ramp()));
        let times = [0.5, 1.0];
        let a = solve_evolution_euler(&p, 0.02, &times).unwrap();
        let b = solve_evolution_euler(&p, 0.01, &times).unwrap();
        let c = solve_evolution_euler(&p, 0.005, &times).unwrap();
        let d1 = trajectory_difference(&a, &b, 1.0).unwrap();
        let d2 = trajectory_difference(&b, &c, 1.0).unwrap();
        assert!((1.7..=2.3).contains(&(d1 / d2)), "{d1} {d2}");
        assert!(b.reports.iter().all(|r| r.p_mean <= 1e-10 * r.p_l2.max(1e-300)));
    }

    #[test]
    fn laplace_agrees_with_euler_and_is_causal() {
        let mut p = EvolutionProblem::new(square(0.25), 1.0, WeightVector::uniform(4, 0.5));
        p.f.push((decaying_force(), TimeProfile::ramp()));
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let lap = solve_evolution_laplace(&p, &ContourSpec::default(), &times).unwrap();
        let eul = solve_evolution_euler(&p, 0.0025, &times).unwrap();
        let size = lap.reports.iter().map(|r| r.u_l2).fold(0.0, f64::max);
        let d = trajectory_difference(&lap, &eul, 1.0).unwrap();
        assert!(d <= 0.02 * size, "{d} vs {size} ({:?})", lap.contour);
        assert!(lap.reports.iter().all(|r| r.p_mean <= 1e-10 * r.p_l2.max(1e-300)));

        // data cut at T = 1 versus data continued smoothly
        let mut cut = p.clone();
        cut.f[0].1 = TimeProfile::Pieces(vec![
            Piece { start: 0.0, end: Some(1.0), decay: 0.0, poly: vec![1.0] },
            Piece { start: 0.0, end: Some(1.0), decay: 1.0, poly: vec![-1.0] },
        ]);
        let r = extension_independence_test(&p, &cut, &ContourSpec::default(), &times, 0.5).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.outside_difference > r.difference);
        assert!(matches!(solve_evolution_laplace(&cut, &ContourSpec::default(), &times), Err(Error::ContourUnderResolved { .. })));
        let same = extension_independence_test(&p, &p, &ContourSpec::default(), &times, 0.5).unwrap();
        assert_eq!(same.difference, 0.0);
    }
}
