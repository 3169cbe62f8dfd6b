//! Pure-Neumann Poisson problem `−Δq = φ`, `∂q/∂n = 0`, `∫q = 0` on P2, and
//! the weighted pressure estimate checked against a resolvent solution.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{p2_gradients, p2_values, DiscreteField, Family, ScalarData, C64, ZERO};
use crate::geometry::dist;
use crate::mesh::Mesh;
use crate::quadrature::{triangle_rule, CornerQuadrature};
use crate::sparse::{Csr, Factorization, Triplets};
use crate::stokes::{FlowSolution, GradientOf, ResolventProblem};
use crate::weighted::{boundary_source_norm, source_norm, DualNormOperator, NormSpec, WeightVector};

#[derive(Debug, Clone)]
pub struct NeumannProblem {
    pub mesh: Arc<Mesh>,
    pub phi: ScalarData,
    pub gamma: WeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannReport {
    pub q_l2: f64,
    /// `‖∇q‖_{V^1_{1−γ}}`
    pub grad_q_v1: f64,
    /// `‖φ‖_{V^0_{1−γ}}`
    pub phi_v0: f64,
    pub ratio: Option<f64>,
    /// Relative residual of `∫∇q·∇v = ∫φv` over all discrete `v`.
    pub galerkin_residual: f64,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub q: DiscreteField,
    pub report: NeumannReport,
}

/// Interior angles at the weight centres, taken from the mesh.
pub fn mesh_openings(mesh: &Mesh) -> Result<Vec<f64>> {
    (0..mesh.corners().len())
        .map(|j| mesh.corner_opening(j).ok_or_else(|| Error::InvalidInput(format!("corner {j} is not a mesh node"))))
        .collect()
}

fn check_gamma(mesh: &Mesh, gamma: &WeightVector, cap: f64) -> Result<()> {
    if gamma.len() != mesh.corners().len() {
        return Err(Error::InvalidInput("weight length differs from corner count".into()));
    }
    for (j, (g, a)) in gamma.beta.iter().zip(mesh_openings(mesh)?).enumerate() {
        let hi = (PI / a).min(cap);
        if !(*g > 0.0 && *g < hi) {
            return Err(Error::InvalidInput(format!("gamma[{j}] = {g} outside (0, {hi})")));
        }
    }
    Ok(())
}

fn p2_stiffness(mesh: &Mesh) -> Csr {
    let rule = triangle_rule(2);
    let mut t = Triplets::with_capacity(Family::P2.ndofs(mesh), 36 * mesh.num_triangles());
    for e in 0..mesh.num_triangles() {
        let dofs = Family::P2.element_dofs(mesh, e);
        let g = mesh.bary_gradients(e);
        let area = mesh.area(e);
        let mut ke = [[0.0; 6]; 6];
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let gr = p2_gradients(*b, &g);
            for i in 0..6 {
                for j in 0..6 {
                    ke[i][j] += w * area * (gr[i][0] * gr[j][0] + gr[i][1] * gr[j][1]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                t.push_real(dofs[i], dofs[j], ke[i][j]);
            }
        }
    }
    t.to_csr()
}

fn p2_load(mesh: &Mesh, phi: &ScalarData) -> Vec<C64> {
    let mut load = vec![ZERO; Family::P2.ndofs(mesh)];
    if phi.is_zero() {
        return load;
    }
    let rule = triangle_rule(6);
    for e in 0..mesh.num_triangles() {
        let dofs = Family::P2.element_dofs(mesh, e);
        let area = mesh.area(e);
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let x = mesh.point_at(e, *b);
            let v = phi.eval(e, *b, x).0 * (w * area);
            for (i, p) in p2_values(*b).iter().enumerate() {
                load[dofs[i]] += v * *p;
            }
        }
    }
    load
}

/// `∫φ` under the quadrature of the Neumann load; the solver's compatibility
/// test sees exactly this value.
pub fn load_integral(mesh: &Mesh, phi: &ScalarData) -> C64 {
    p2_load(mesh, phi).iter().sum()
}

/// `∫ψ_i` for every P2 dof (vertex functions integrate to zero).
fn p2_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; Family::P2.ndofs(mesh)];
    for e in 0..mesh.num_triangles() {
        let dofs = Family::P2.element_dofs(mesh, e);
        for i in 3..6 {
            w[dofs[i]] += mesh.area(e) / 3.0;
        }
    }
    w
}

pub fn solve_neumann(problem: &NeumannProblem) -> Result<NeumannSolution> {
    let mesh = &problem.mesh;
    problem.phi.validate(mesh)?;
    check_gamma(mesh, &problem.gamma, f64::INFINITY)?;
    let load = p2_load(mesh, &problem.phi);
    let total: C64 = load.iter().sum();
    let scale = load.iter().map(|v| v.norm()).sum::<f64>().max(1.0);
    if total.norm() > 1e-10 * scale {
        return Err(Error::IncompatibleData(format!("∫φ = {total:e} is not zero")));
    }
    let k = p2_stiffness(mesh);
    let mut pinned = k.clone();
    pinned.set_identity_row(0);
    let mut rhs = load.clone();
    rhs[0] = ZERO;
    let mut q = Factorization::new(pinned)?.solve(&rhs)?;
    let w = p2_weights(mesh);
    let area = mesh.total_area();
    let mean: C64 = q.iter().zip(&w).map(|(q, w)| q * w).sum::<C64>() / area;
    for v in &mut q {
        *v -= mean;
    }
    let kq = k.mul_vec(&q);
    let res: f64 = kq.iter().zip(&load).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let lnorm = load.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let galerkin_residual = if lnorm > 0.0 { res / lnorm } else { res };
    let final_mean = q.iter().zip(&w).map(|(q, w)| q * w).sum::<C64>().norm();
    let q = DiscreteField::new(mesh.clone(), Family::P2, q)?;

    let quad = CornerQuadrature::default();
    let shifted = problem.gamma.negated().shifted(1.0);
    let q_l2 = source_norm(mesh, &q, &NormSpec::w(0), &quad)?.value;
    let grad_q_v1 = source_norm(mesh, &GradientOf(&q), &NormSpec::v(1, shifted.clone()), &quad)?.value;
    let phi_v0 = source_norm(mesh, &problem.phi, &NormSpec::v(0, shifted), &quad)?.value;
    let lhs = q_l2 + grad_q_v1;
    let report = NeumannReport {
        q_l2,
        grad_q_v1,
        phi_v0,
        ratio: if phi_v0 > 0.0 { Some(lhs / phi_v0) } else { None },
        galerkin_residual,
        mean: final_mean,
    };
    Ok(NeumannSolution { q, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsTerms {
    pub f: f64,
    pub g: f64,
    pub sg_dual: f64,
    #[serde(rename = "Du_boundary")]
    pub du_boundary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureDiagnostic {
    pub gamma: Vec<f64>,
    pub lhs: f64,
    pub rhs_terms: RhsTerms,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub s: [f64; 2],
}

/// Compares `‖p‖_{V^0_{γ−1}}` with the data and boundary-gradient terms.
/// `eps` is the corner patch radius on which `g` must vanish.
pub fn pressure_diagnostic(solution: &FlowSolution, problem: &ResolventProblem, gamma: &WeightVector, eps: f64) -> Result<PressureDiagnostic> {
    let mesh = &problem.mesh;
    check_gamma(mesh, gamma, 2.0)?;
    let rule = triangle_rule(6);
    for (j, c) in mesh.corners().iter().enumerate() {
        for t in mesh.elements_near_corner(j, eps) {
            for b in &rule.bary {
                let x = mesh.point_at(t, *b);
                if dist(x, *c) < eps && problem.g.eval(t, *b, x).0 != ZERO {
                    return Err(Error::HypothesisViolated(format!("divergence data nonzero near corner {j}")));
                }
            }
        }
    }
    let quad = CornerQuadrature::default();
    let lhs = source_norm(mesh, &solution.p, &NormSpec::v(0, gamma.shifted(-1.0)), &quad)?.value;
    let f = source_norm(mesh, &problem.f, &NormSpec::v(0, gamma.clone()), &quad)?.value;
    let g = source_norm(mesh, &problem.g, &NormSpec::v(1, gamma.clone()), &quad)?.value;
    let sg_dual = if problem.g.is_zero() { 0.0 } else { solution.s.norm() * DualNormOperator::new(mesh.clone(), gamma)?.norm(&problem.g)?.value };
    let du_boundary = boundary_source_norm(mesh, &solution.u, gamma, 1, &quad)?.value;
    let rhs = f + g + sg_dual + du_boundary;
    Ok(PressureDiagnostic {
        gamma: gamma.beta.clone(),
        lhs,
        rhs_terms: RhsTerms { f, g, sg_dual, du_boundary },
        rhs,
        ratio: if rhs > 0.0 { Some(lhs / rhs) } else { None },
        s: [solution.s.re, solution.s.im],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{re, ScalarFn, VectorData, VectorFn};
    use crate::geometry::{Point, PolygonDomain};
    use crate::mesh::{generate_graded_mesh, MeshOptions};
    use crate::stokes::solve_weak_resolvent;
    use crate::weighted::Difference;

    fn square(h: f64) -> Arc<Mesh> {
        Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(h)).unwrap())
    }

    fn eigen_phi() -> ScalarData {
        ScalarData::function(Arc::new(ScalarFn(|x: Point| re(PI * PI * (PI * x[0]).cos()), |x: Point| [re(-PI * PI * PI * (PI * x[0]).sin()), ZERO])))
    }

    fn eigen_q() -> ScalarData {
        ScalarData::function(Arc::new(ScalarFn(|x: Point| re((PI * x[0]).cos()), |x: Point| [re(-PI * (PI * x[0]).sin()), ZERO])))
    }

    #[test]
    fn openings_from_mesh() {
        let m = generate_graded_mesh(&PolygonDomain::l_shape(), &MeshOptions::uniform(0.25)).unwrap();
        let a = mesh_openings(&m).unwrap();
        assert!((a[3] - 1.5 * PI).abs() < 1e-12);
        assert!((a[0] - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn zero_data() {
        let p = NeumannProblem { mesh: square(0.25), phi: ScalarData::zero(), gamma: WeightVector::uniform(4, 0.5) };
        let s = solve_neumann(&p).unwrap();
        assert_eq!(s.q.max_abs(), 0.0);
        assert_eq!(s.report.ratio, None);
    }

    #[test]
    fn nonzero_mean_rejected() {
        let phi = ScalarData::function(Arc::new(ScalarFn(|_| re(1.0), |_| [ZERO; 2])));
        let p = NeumannProblem { mesh: square(0.5), phi, gamma: WeightVector::uniform(4, 0.5) };
        assert!(matches!(solve_neumann(&p), Err(Error::IncompatibleData(_))));
    }

    #[test]
    fn eigenfunction_converges_at_full_order() {
        let q = eigen_q();
        let quad = CornerQuadrature::default();
        let errs: Vec<f64> = [0.25, 0.125, 0.0625]
            .iter()
            .map(|&h| {
                let p = NeumannProblem { mesh: square(h), phi: eigen_phi(), gamma: WeightVector::uniform(4, 0.5) };
                let s = solve_neumann(&p).unwrap();
                assert!(s.report.galerkin_residual < 1e-10);
                assert!(s.report.mean <= 1e-10 * s.report.q_l2);
                source_norm(s.q.mesh(), &Difference(&s.q, &q), &NormSpec::w(1), &quad).unwrap().value
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.7, "{errs:?}");
        }
    }

    #[test]
    fn gamma_outside_window_rejected() {
        let m = Arc::new(generate_graded_mesh(&PolygonDomain::l_shape(), &MeshOptions::uniform(0.25)).unwrap());
        let p = NeumannProblem { mesh: m, phi: ScalarData::zero(), gamma: WeightVector::new(vec![0.5, 0.5, 0.5, 0.8, 0.5, 0.5]) };
        assert!(matches!(solve_neumann(&p), Err(Error::InvalidInput(_))));
    }

    fn force() -> VectorData {
        VectorData::function(Arc::new(VectorFn(|x: Point| [re(x[1] * (1.0 - x[1])), re(x[0])], |x: Point| [[ZERO, re(1.0 - 2.0 * x[1])], [re(1.0), ZERO]])))
    }

    #[test]
    fn diagnostic_scales_linearly_and_gates_hypothesis() {
        let m = square(0.25);
        let mk = |f: VectorData| ResolventProblem { s: C64::new(0.0, 10.0), f, g: ScalarData::zero(), mesh: m.clone(), beta: WeightVector::uniform(4, 0.5) };
        let gamma = WeightVector::uniform(4, 0.5);
        let p1 = mk(force());
        let d1 = pressure_diagnostic(&solve_weak_resolvent(&p1).unwrap(), &p1, &gamma, 0.25).unwrap();
        let p2 = mk(force().scaled(re(2.0)));
        let d2 = pressure_diagnostic(&solve_weak_resolvent(&p2).unwrap(), &p2, &gamma, 0.25).unwrap();
        assert!(d1.lhs > 0.0 && d1.lhs.is_finite());
        assert!((d2.lhs - 2.0 * d1.lhs).abs() <= 1e-10 * d2.lhs);
        assert!((d2.rhs - 2.0 * d1.rhs).abs() <= 1e-10 * d2.rhs);
        assert!((d2.ratio.unwrap() - d1.ratio.unwrap()).abs() <= 1e-10);

        let z = mk(VectorData::zero());
        let dz = pressure_diagnostic(&solve_weak_resolvent(&z).unwrap(), &z, &gamma, 0.25).unwrap();
        assert_eq!(dz.lhs, 0.0);

        let g = ScalarData::function(Arc::new(ScalarFn(|x: Point| re(x[0] - 0.5), |_| [re(1.0), ZERO])));
        let bad = ResolventProblem { g, ..mk(force()) };
        let sol = solve_weak_resolvent(&bad).unwrap();
        assert!(matches!(pressure_diagnostic(&sol, &bad, &gamma, 0.25), Err(Error::HypothesisViolated(_))));
        let json = serde_json::to_value(&d1).unwrap();
        assert!(json["rhs_terms"]["Du_boundary"].is_number());
    }
}
