//! Manufactured solutions, convergence tables and estimate sweeps.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corner::{admissible_weight_window, WindowVerdict};
use crate::error::{Error, Result};
use crate::fem::{ScalarData, VectorData, C64};
use crate::geometry::{lerp, Point, PolygonDomain};
use crate::mesh::{generate_graded_mesh, Mesh, MeshOptions};
use crate::poly::{Poly2, PolyScalar, PolyVector};
use crate::quadrature::CornerQuadrature;
use crate::stokes::{weighted_regularity_report, ResolventProblem, StokesOperator, VelocityForm};
use crate::time::{EvolutionProblem, Piece, TimeProfile};
use crate::weighted::{source_norm, Difference, DualNormOperator, NormSpec, WeightVector};

/// Exact polynomial velocity/pressure pair on a polygon.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub domain: PolygonDomain,
    pub u: [Poly2; 2],
    pub p: Poly2,
    pub divergence_free: bool,
}

/// `a(x) = x²(1−x)²`, the one-dimensional factor of the stream function.
fn bump() -> Poly2 {
    let x = Poly2::x();
    x.mul(&Poly2::constant(1.0).sub(&x)).pow(2)
}

impl ManufacturedCase {
    /// `u = curl ψ`, `ψ = (x(1−x)y(1−y))²`, `p = x − 1/2` on the unit square.
    pub fn stream_function() -> Self {
        let a = bump();
        let b = {
            let y = Poly2::y();
            y.mul(&Poly2::constant(1.0).sub(&y)).pow(2)
        };
        let psi = a.mul(&b);
        Self {
            name: "stream_function".into(),
            domain: PolygonDomain::unit_square(),
            u: [psi.dy(), psi.dx().scale(-1.0)],
            p: Poly2::x().sub(&Poly2::constant(0.5)),
            divergence_free: true,
        }
    }

    pub fn zero() -> Self {
        Self { name: "zero".into(), domain: PolygonDomain::unit_square(), u: [Poly2::default(), Poly2::default()], p: Poly2::default(), divergence_free: true }
    }

    fn divergence_poly(&self) -> Poly2 {
        self.u[0].dx().add(&self.u[1].dy())
    }

    /// `−Δu − ∇(∇·u) + ∇p`
    pub fn stationary_part(&self) -> [Poly2; 2] {
        let d = self.divergence_poly();
        [
            self.u[0].laplacian().scale(-1.0).sub(&d.dx()).add(&self.p.dx()),
            self.u[1].laplacian().scale(-1.0).sub(&d.dy()).add(&self.p.dy()),
        ]
    }

    pub fn velocity(&self) -> VectorData {
        VectorData::function(Arc::new(PolyVector(self.u.clone())))
    }

    pub fn pressure(&self) -> ScalarData {
        ScalarData::function(Arc::new(PolyScalar(self.p.clone())))
    }

    /// `f = s u − Δu − ∇(∇·u) + ∇p`
    pub fn forcing(&self, s: C64) -> VectorData {
        let mut f = VectorData::function(Arc::new(PolyVector(self.stationary_part())));
        if s != C64::new(0.0, 0.0) {
            f.terms.extend(self.velocity().scaled(s).terms);
        }
        f
    }

    /// `g = −∇·u`
    pub fn divergence_data(&self) -> ScalarData {
        if self.divergence_free {
            return ScalarData::zero();
        }
        ScalarData::function(Arc::new(PolyScalar(self.divergence_poly().scale(-1.0))))
    }

    /// Separable time-dependent problem with exact solution `u(x)·t²e^{−t}`,
    /// `p(x)·t²e^{−t}`, which starts from rest.
    pub fn evolution(&self, mesh: Arc<Mesh>, t_final: f64, beta: WeightVector) -> EvolutionProblem {
        let mut e = EvolutionProblem::new(mesh, t_final, beta);
        // ∂_t(t²e^{−t}) = (2t − t²)e^{−t}
        let dt_profile = TimeProfile::Pieces(vec![Piece { start: 0.0, end: None, decay: 1.0, poly: vec![0.0, 2.0, -1.0] }]);
        e.f.push((self.velocity(), dt_profile));
        e.f.push((VectorData::function(Arc::new(PolyVector(self.stationary_part()))), Self::evolution_profile()));
        if !self.divergence_free {
            e.g.push((self.divergence_data(), Self::evolution_profile()));
        }
        e
    }

    /// Time factor `t²e^{−t}` of [`ManufacturedCase::evolution`].
    pub fn evolution_profile() -> TimeProfile {
        TimeProfile::monomial_exp(1.0, 2, 1.0)
    }

    /// Checks zero trace, the divergence claim and the forcing against an
    /// independently derived stationary forcing, at 100 random points each.
    pub fn check_consistency(&self, independent: &dyn Fn(Point) -> [f64; 2], seed: u64) -> ConsistencyReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = self.domain.vertices();
        let n = v.len();
        let mut max_trace = 0.0f64;
        for _ in 0..100 {
            let j = rng.random_range(0..n);
            let x = lerp(v[j], v[(j + 1) % n], rng.random_range(0.0..=1.0));
            max_trace = max_trace.max(self.u[0].eval(x).abs()).max(self.u[1].eval(x).abs());
        }
        let (lo, hi) = v.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]));
        let stat = self.stationary_part();
        let div = self.divergence_poly();
        let mut max_div = 0.0f64;
        let mut max_residual = 0.0f64;
        let mut k = 0;
        while k < 100 {
            let x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            if !self.domain.contains(x) {
                continue;
            }
            k += 1;
            max_div = max_div.max(div.eval(x).abs());
            let r = independent(x);
            max_residual = max_residual.max((stat[0].eval(x) - r[0]).abs()).max((stat[1].eval(x) - r[1]).abs());
        }
        ConsistencyReport { max_trace, max_divergence: max_div, max_forcing_residual: max_residual }
    }
}

/// Stationary forcing of the stream-function case from the product rule on
/// `ψ = a(x) a(y)`, `a(t) = t²(1−t)²`, written out by hand.
pub fn stream_function_forcing_by_hand(x: Point) -> [f64; 2] {
    let a = |t: f64| t * t * (1.0 - t) * (1.0 - t);
    let a1 = |t: f64| 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    let a2 = |t: f64| 2.0 - 12.0 * t + 12.0 * t * t;
    let a3 = |t: f64| -12.0 + 24.0 * t;
    let (p, q) = (x[0], x[1]);
    // u = (a(p) a'(q), −a'(p) a(q)), divergence free, ∇(x − 1/2) = (1, 0)
    let lap1 = a2(p) * a1(q) + a(p) * a3(q);
    let lap2 = -(a3(p) * a(q) + a1(p) * a2(q));
    [-lap1 + 1.0, -lap2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub max_trace: f64,
    pub max_divergence: f64,
    pub max_forcing_residual: f64,
}

impl ConsistencyReport {
    pub fn passed(&self, divergence_free: bool) -> bool {
        self.max_trace <= 1e-12 && (!divergence_free || self.max_divergence <= 1e-12) && self.max_forcing_residual <= 1e-10
    }
}

fn csv_f(v: f64) -> String {
    format!("{v:?}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(csv_f).unwrap_or_else(|| "void".into())
}

// ---- convergence -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub velocity_dofs: usize,
    pub u_l2: f64,
    pub u_w1: f64,
    pub p_l2: f64,
    pub residual: f64,
    pub pressure_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub case: String,
    pub s: [f64; 2],
    pub rows: Vec<ConvergenceRow>,
    /// Observed orders between successive rows: `[u_l2, u_w1, p_l2]`.
    pub orders: Vec<[Option<f64>; 3]>,
}

fn observed_order(e0: f64, e1: f64, h0: f64, h1: f64) -> Option<f64> {
    (e0 > 0.0 && e1 > 0.0).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

pub fn convergence_study(case: &ManufacturedCase, levels: &[f64], s: C64) -> Result<ConvergenceReport> {
    let f = case.forcing(s);
    let g = case.divergence_data();
    let (ue, pe) = (case.velocity(), case.pressure());
    let quad = CornerQuadrature::default();
    let rows = levels
        .iter()
        .map(|&h| -> Result<ConvergenceRow> {
            let mesh = Arc::new(generate_graded_mesh(&case.domain, &MeshOptions::uniform(h))?);
            let op = Arc::new(StokesOperator::new(mesh.clone(), VelocityForm::Strain));
            let sol = op.factor(s)?.solve(&f, &g)?;
            let du = Difference(&sol.u, &ue);
            let dp = Difference(&sol.p, &pe);
            Ok(ConvergenceRow {
                h,
                velocity_dofs: op.velocity_dofs(),
                u_l2: source_norm(&mesh, &du, &NormSpec::w(0), &quad)?.value,
                u_w1: source_norm(&mesh, &du, &NormSpec::w(1), &quad)?.value,
                p_l2: source_norm(&mesh, &dp, &NormSpec::w(0), &quad)?.value,
                residual: sol.residuals.linear.max(sol.residuals.momentum).max(sol.residuals.divergence),
                pressure_mean: sol.pressure_mean().norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let orders = rows
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            [observed_order(a.u_l2, b.u_l2, a.h, b.h), observed_order(a.u_w1, b.u_w1, a.h, b.h), observed_order(a.p_l2, b.p_l2, a.h, b.h)]
        })
        .collect();
    Ok(ConvergenceReport { case: case.name.clone(), s: [s.re, s.im], rows, orders })
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,velocity_dofs,u_l2,u_w1,p_l2,residual,pressure_mean,order_u_l2,order_u_w1,order_p_l2\n");
        for (k, r) in self.rows.iter().enumerate() {
            let o = if k == 0 { [None; 3] } else { self.orders[k - 1] };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                csv_f(r.h),
                r.velocity_dofs,
                csv_f(r.u_l2),
                csv_f(r.u_w1),
                csv_f(r.p_l2),
                csv_f(r.residual),
                csv_f(r.pressure_mean),
                csv_opt(o[0]),
                csv_opt(o[1]),
                csv_opt(o[2])
            );
        }
        out
    }
}

// ---- estimate sweep --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: [f64; 2],
    pub u_v2: f64,
    pub s_u_v0: f64,
    pub grad_p_v0: f64,
    pub f_v0: f64,
    pub g_v1: f64,
    pub s_g_dual: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` for a void (0/0) row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub beta: Vec<f64>,
    pub admissible: bool,
    pub rows: Vec<SweepRow>,
    pub max_over_min: Option<f64>,
    /// Least-squares slope of `log R` against `log |s|`.
    pub slope: Option<f64>,
}

pub fn estimate_sweep(mesh: Arc<Mesh>, f: &VectorData, g: &ScalarData, beta: &WeightVector, s_list: &[C64], gamma0: f64) -> Result<SweepReport> {
    for s in s_list {
        if s.re < 0.0 || s.norm() < gamma0 {
            return Err(Error::InvalidInput(format!("sweep point {s} needs Re s >= 0 and |s| >= {gamma0}")));
        }
    }
    let op = Arc::new(StokesOperator::new(mesh.clone(), VelocityForm::Strain));
    let dual = if g.is_zero() { 0.0 } else { DualNormOperator::new(mesh.clone(), beta)?.norm(g)?.value };
    let rows = s_list
        .par_iter()
        .map(|&s| -> Result<SweepRow> {
            let problem = ResolventProblem { s, f: f.clone(), g: g.clone(), mesh: mesh.clone(), beta: beta.clone() };
            problem.validate()?;
            let sol = op.factor(s)?.solve(f, g)?;
            let r = weighted_regularity_report(&sol, &problem)?;
            let s_g_dual = s.norm() * dual;
            let lhs = r.u_v2 + r.s_u_v0 + r.grad_p_v0;
            let rhs = r.f_v0 + r.g_v1 + s_g_dual;
            Ok(SweepRow {
                s: [s.re, s.im],
                u_v2: r.u_v2,
                s_u_v0: r.s_u_v0,
                grad_p_v0: r.grad_p_v0,
                f_v0: r.f_v0,
                g_v1: r.g_v1,
                s_g_dual,
                lhs,
                rhs,
                ratio: (rhs > 0.0).then(|| lhs / rhs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.ratio.filter(|v| *v > 0.0).map(|v| (C64::new(r.s[0], r.s[1]).norm().ln(), v.ln()))).collect();
    let max_over_min = (!pts.is_empty()).then(|| {
        let (lo, hi) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        (hi - lo).exp()
    });
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    });
    Ok(SweepReport { beta: beta.beta.clone(), admissible: beta.is_admissible(), rows, max_over_min, slope })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_s,im_s,u_v2,s_u_v0,grad_p_v0,f_v0,g_v1,s_g_dual,lhs,rhs,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                csv_f(r.s[0]),
                csv_f(r.s[1]),
                csv_f(r.u_v2),
                csv_f(r.s_u_v0),
                csv_f(r.grad_p_v0),
                csv_f(r.f_v0),
                csv_f(r.g_v1),
                csv_f(r.s_g_dual),
                csv_f(r.lhs),
                csv_f(r.rhs),
                csv_opt(r.ratio)
            );
        }
        out
    }

    /// `|s|, R(s)` series for plotting; void rows are skipped.
    pub fn plot_csv(&self) -> String {
        let pts: Vec<(f64, f64)> = self.rows.iter().filter_map(|r| r.ratio.map(|v| (C64::new(r.s[0], r.s[1]).norm(), v))).collect();
        plot_series_csv("abs_s", "ratio", &pts)
    }
}

/// Two-column x–y series for external plotting.
pub fn plot_series_csv(x: &str, y: &str, pts: &[(f64, f64)]) -> String {
    let mut out = format!("{x},{y}\n");
    for (a, b) in pts {
        let _ = writeln!(out, "{},{}", csv_f(*a), csv_f(*b));
    }
    out
}

// ---- window audit ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub corner: usize,
    pub alpha: f64,
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub beta: f64,
    pub verdict: WindowVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub admissible: bool,
}

pub fn corner_window_audit(domain: &PolygonDomain, beta: &WeightVector) -> Result<AuditReport> {
    if beta.len() != domain.num_corners() {
        return Err(Error::InvalidInput("weight length differs from corner count".into()));
    }
    let rows = domain
        .openings()
        .iter()
        .zip(&beta.beta)
        .enumerate()
        .map(|(j, (&alpha, &b))| -> Result<AuditRow> {
            let w = admissible_weight_window(alpha)?;
            let e = crate::corner::solve_corner_exponent(alpha)?;
            Ok(AuditRow { corner: j, alpha, re_lambda: e.lambda_star.re, im_lambda: e.lambda_star.im, lower: w.lower, upper: w.upper, beta: b, verdict: w.verdict(b) })
        })
        .collect::<Result<Vec<_>>>()?;
    let admissible = rows.iter().all(|r| r.verdict == WindowVerdict::Inside);
    Ok(AuditReport { rows, admissible })
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("corner,alpha,re_lambda,im_lambda,window_lower,window_upper,beta,verdict\n");
        for r in &self.rows {
            let v = serde_json::to_value(r.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{},{},{}", r.corner, csv_f(r.alpha), csv_f(r.re_lambda), csv_f(r.im_lambda), csv_f(r.lower), csv_f(r.upper), csv_f(r.beta), v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_function_case_is_consistent() {
        let c = ManufacturedCase::stream_function();
        let r = c.check_consistency(&stream_function_forcing_by_hand, 11);
        assert!(r.passed(true), "{r:?}");
        // a wrong reference is caught
        let r = c.check_consistency(&|x| { let v = stream_function_forcing_by_hand(x); [v[0] + 1e-6, v[1]] }, 11);
        assert!(!r.passed(true));
    }

    #[test]
    fn zero_case_is_reproduced_exactly() {
        let r = convergence_study(&ManufacturedCase::zero(), &[0.5, 0.25], C64::new(0.0, 10.0)).unwrap();
        assert!(r.rows.iter().all(|row| row.u_l2 == 0.0 && row.p_l2 == 0.0));
        assert!(r.orders.iter().all(|o| o.iter().all(Option::is_none)));
        assert!(r.to_csv().contains("void"));
    }

    #[test]
    fn manufactured_rates() {
        let r = convergence_study(&ManufacturedCase::stream_function(), &[0.25, 0.125], C64::new(0.0, 10.0)).unwrap();
        let o = r.orders[0];
        assert!(o[0].unwrap() > 2.5 && o[1].unwrap() > 1.5 && o[2].unwrap() > 1.5, "{o:?}");
        assert!(r.rows.iter().all(|row| row.residual <= 1e-10 && row.pressure_mean <= 1e-10));
    }

    #[test]
    fn zero_sweep_is_void() {
        let m = Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(0.5)).unwrap());
        let s = [C64::new(0.0, 1.0), C64::new(0.0, 10.0)];
        let r = estimate_sweep(m.clone(), &VectorData::zero(), &ScalarData::zero(), &WeightVector::uniform(4, 0.5), &s, 1.0).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio.is_none()));
        assert_eq!(r.max_over_min, None);
        assert!(estimate_sweep(m, &VectorData::zero(), &ScalarData::zero(), &WeightVector::uniform(4, 0.5), &[C64::new(0.0, 0.5)], 1.0).is_err());
    }

    #[test]
    fn audits() {
        let sq = corner_window_audit(&PolygonDomain::unit_square(), &WeightVector::uniform(4, 0.5)).unwrap();
        assert!(sq.admissible && sq.rows.iter().all(|r| r.re_lambda > 1.0));
        let z = corner_window_audit(&PolygonDomain::unit_square(), &WeightVector::new(vec![0.5, 0.0, 0.5, 0.5])).unwrap();
        assert_eq!(z.rows[1].verdict, WindowVerdict::ExcludedZero);
        assert!(z.to_csv().lines().count() == 5);
    }
}
