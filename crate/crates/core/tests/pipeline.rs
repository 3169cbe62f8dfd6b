//! End-to-end runs through the public API: mesh, solve, write, read back.

use std::sync::Arc;

use polystokes::fem::{DiscreteField, ScalarData, VectorData, C64};
use polystokes::harness::ManufacturedCase;
use polystokes::stokes::{solve_weak_resolvent, ResolventProblem};
use polystokes::weighted::WeightVector;
use polystokes::{generate_graded_mesh, Mesh, MeshOptions, PolygonDomain};

fn l_mesh() -> Arc<Mesh> {
    let opts = MeshOptions::graded(0.25, vec![1.0, 1.0, 1.0, 2.0, 1.0, 1.0]);
    Arc::new(generate_graded_mesh(&PolygonDomain::l_shape(), &opts).unwrap())
}

#[test]
fn graded_mesh_survives_a_disk_round_trip() {
    let mesh = l_mesh();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    mesh.write(&path).unwrap();
    let back = Mesh::read(&path).unwrap();
    assert_eq!(back.to_text(), mesh.to_text());
    assert!((back.total_area() - 3.0).abs() < 1e-12);
}

#[test]
fn manufactured_solve_writes_fields_that_read_back_exactly() {
    let mesh = Arc::new(generate_graded_mesh(&PolygonDomain::unit_square(), &MeshOptions::uniform(0.25)).unwrap());
    let case = ManufacturedCase::stream_function();
    let s = C64::new(0.0, 10.0);
    let problem = ResolventProblem {
        s,
        f: case.forcing(s),
        g: ScalarData::zero(),
        mesh: mesh.clone(),
        beta: WeightVector::audited(&PolygonDomain::unit_square(), vec![0.5; 4]).unwrap(),
    };
    let sol = solve_weak_resolvent(&problem).unwrap();
    assert!(sol.residuals.momentum < 1e-10 && sol.residuals.divergence < 1e-10);
    assert!(sol.pressure_mean().norm() < 1e-10);

    let dir = tempfile::tempdir().unwrap();
    mesh.write(&dir.path().join("mesh.txt")).unwrap();
    for (name, field) in [("u.field", &sol.u), ("p.field", &sol.p)] {
        let path = dir.path().join(name);
        field.write(&path, "mesh.txt").unwrap();
        let back = DiscreteField::read(&path).unwrap();
        assert_eq!(back.family(), field.family());
        assert_eq!(back.coeffs(), field.coeffs());
    }
}

#[test]
fn zero_data_on_the_l_shape_gives_the_zero_solution() {
    let mesh = l_mesh();
    let problem = ResolventProblem {
        s: C64::new(1.0, 3.0),
        f: VectorData::zero(),
        g: ScalarData::zero(),
        mesh,
        beta: WeightVector::new(vec![0.5; 6]),
    };
    let sol = solve_weak_resolvent(&problem).unwrap();
    assert!(sol.u.coeffs().iter().chain(sol.p.coeffs()).all(|c| c.norm() == 0.0));
}
