//! Subcommand bodies. Each returns its artifacts in memory so the caller can
//! write them, or compare two runs byte for byte.

use std::fmt::Write as _;
use std::sync::Arc;

use polystokes::config::EvolveMethod;
use polystokes::corner::exponent_table_csv;
use polystokes::criteria::run_suite;
use polystokes::fem::C64;
use polystokes::harness::{corner_window_audit, estimate_sweep, ManufacturedCase};
use polystokes::mesh::triangle_min_angle;
use polystokes::neumann::pressure_diagnostic;
use polystokes::stokes::{solve_weak_resolvent, ResolventProblem};
use polystokes::time::{solve_evolution_euler, solve_evolution_laplace, trajectory_difference, EvolutionProblem, Trajectory};
use polystokes::{Error, Mesh, Result};
use serde_json::{json, Value};

use crate::data::Setup;

const MESH_FILE: &str = "mesh.txt";

#[derive(Default)]
pub struct Outcome {
    /// `(file name, contents)`, deterministic for a given configuration.
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Failed assertions; any entry means exit status 2.
    pub failures: Vec<String>,
    /// Lines for stdout.
    pub lines: Vec<String>,
    /// Run-dependent facts (timings) for the metadata file.
    pub metadata: Value,
}

impl Outcome {
    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.artifacts.push((name.to_string(), contents.into()));
    }

    fn add_json(&mut self, name: &str, v: &impl serde::Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(v).map_err(|e| polystokes::Error::Io(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn corners(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let audit = corner_window_audit(&setup.domain, &setup.beta()?)?;
    out.add("corners.csv", audit.to_csv());
    out.add_json("corners.json", &audit)?;
    let extra = &setup.config.task.corners.alphas;
    if !extra.is_empty() {
        out.add("exponents.csv", exponent_table_csv(extra)?);
    }
    out.lines.push(format!("{} corners, weights {}", audit.rows.len(), if audit.admissible { "admissible" } else { "not admissible" }));
    Ok(out)
}

fn mesh_summary(m: &Mesh) -> Value {
    let min_angle = (0..m.num_triangles()).map(|t| triangle_min_angle(m.vertices_of(t))).fold(f64::INFINITY, f64::min);
    let h_max = (0..m.num_triangles()).map(|t| m.diameter(t)).fold(0.0, f64::max);
    let h_min = (0..m.num_triangles()).map(|t| m.diameter(t)).fold(f64::INFINITY, f64::min);
    json!({
        "nodes": m.num_nodes(),
        "edges": m.num_edges(),
        "triangles": m.num_triangles(),
        "min_angle_deg": min_angle.to_degrees(),
        "h_max": h_max,
        "h_min": h_min,
        "area": m.total_area(),
        "grading": m.grading(),
    })
}

pub fn mesh(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let m = setup.mesh()?;
    out.add(MESH_FILE, m.to_text());
    let summary = mesh_summary(&m);
    out.lines.push(format!("{} nodes, {} triangles", m.num_nodes(), m.num_triangles()));
    out.add_json("mesh.json", &summary)?;
    Ok(out)
}

pub fn resolvent(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let task = &setup.config.task.resolvent;
    let mesh = setup.mesh()?;
    let s = C64::new(task.s[0], task.s[1]);
    let problem = ResolventProblem {
        s,
        f: setup.force(&task.force, &mesh, Some(s))?,
        g: setup.divergence(&task.divergence, &mesh)?,
        mesh: mesh.clone(),
        beta: setup.beta()?,
    };
    let sol = solve_weak_resolvent(&problem)?;
    let r = sol.residuals;
    let worst = r.linear.max(r.momentum).max(r.divergence);
    if worst > 1e-10 {
        out.failures.push(format!("discrete residual {worst:e} exceeds 1e-10"));
    }
    let mean = sol.pressure_mean();
    // patch radius: the smallest default grading radius
    let eps = (0..setup.domain.num_corners()).map(|j| setup.domain.grading_radius(j)).fold(f64::INFINITY, f64::min);
    let diagnostic = match pressure_diagnostic(&sol, &problem, &setup.gamma(), eps) {
        Ok(d) => json!(d),
        Err(e @ (Error::HypothesisViolated(_) | Error::InvalidInput(_))) => json!({ "skipped": e.to_string() }),
        Err(e) => return Err(e),
    };
    out.add(MESH_FILE, mesh.to_text());
    out.add("u.field", sol.u.to_text(MESH_FILE));
    out.add("p.field", sol.p.to_text(MESH_FILE));
    out.add_json(
        "resolvent.json",
        &json!({
            "s": task.s,
            "beta": problem.beta.beta,
            "residuals": r,
            "pressure_mean": [mean.re, mean.im],
            "norms": sol.norm_report,
            "pressure_diagnostic": diagnostic,
        }),
    )?;
    match &sol.norm_report {
        Some(n) => out.lines.push(format!("‖u‖_V2 = {:e}, ratio = {}", n.u_v2, n.ratio.map_or("void".into(), num))),
        None => out.lines.push("solved".into()),
    }
    Ok(out)
}

pub fn sweep(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let task = &setup.config.task.sweep;
    let mesh = setup.mesh()?;
    let s: Vec<C64> = task.s.iter().map(|v| C64::new(v[0], v[1])).collect();
    let f = setup.force(&task.force, &mesh, None)?;
    let g = setup.divergence(&task.divergence, &mesh)?;
    let r = estimate_sweep(mesh, &f, &g, &setup.beta()?, &s, setup.config.solver.gamma0)?;
    out.add("sweep.csv", r.to_csv());
    out.add("sweep_plot.csv", r.plot_csv());
    out.add_json("sweep.json", &r)?;
    out.lines.push(format!(
        "max/min ratio {}, slope {}",
        r.max_over_min.map_or("void".into(), num),
        r.slope.map_or("void".into(), num)
    ));
    Ok(out)
}

fn evolution_problem(setup: &Setup, mesh: Arc<Mesh>) -> Result<EvolutionProblem> {
    let task = &setup.config.task.evolve;
    let beta = setup.beta()?;
    let mut p = if matches!(task.force, polystokes::config::ForceSpec::Manufactured(_)) {
        ManufacturedCase::stream_function().evolution(mesh, task.t_final, beta)
    } else {
        let mut p = EvolutionProblem::new(mesh.clone(), task.t_final, beta);
        let f = setup.force(&task.force, &mesh, None)?;
        if !f.is_zero() {
            p.f.push((f, task.profile.clone()));
        }
        p
    };
    let solver = &setup.config.solver;
    p.gamma = solver.contour_gamma;
    p.gamma0 = solver.gamma0;
    p.transform_tol = solver.transform_tol;
    Ok(p)
}

fn trajectory_json(t: &Trajectory) -> Value {
    json!({ "method": t.method, "samples": t.reports, "contour": t.contour })
}

pub fn evolve(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let task = &setup.config.task.evolve;
    let mesh = setup.mesh()?;
    let problem = evolution_problem(setup, mesh.clone())?;
    let mut trajs = Vec::new();
    if matches!(task.method, EvolveMethod::Laplace | EvolveMethod::Both) {
        trajs.push(solve_evolution_laplace(&problem, &setup.config.solver.contour, &task.times)?);
    }
    if matches!(task.method, EvolveMethod::Euler | EvolveMethod::Both) {
        trajs.push(solve_evolution_euler(&problem, task.dt, &task.times)?);
    }
    let mut csv = String::from("method,t,u_l2,p_l2,p_mean,contour_change\n");
    for tr in &trajs {
        let name = serde_json::to_value(tr.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for r in &tr.reports {
            let change = r.contour_change.map_or("void".into(), num);
            let _ = writeln!(csv, "{name},{},{},{},{},{change}", num(r.t), num(r.u_l2), num(r.p_l2), num(r.p_mean));
            if r.p_mean > 1e-10 * r.p_l2.max(1.0) {
                out.failures.push(format!("{name}: pressure mean {:e} at t = {}", r.p_mean, r.t));
            }
        }
        if let Some(u) = tr.u.last() {
            out.add(&format!("u_{name}_final.field"), u.to_text(MESH_FILE));
        }
    }
    let difference = if trajs.len() == 2 { Some(trajectory_difference(&trajs[0], &trajs[1], task.t_final)?) } else { None };
    out.add(MESH_FILE, mesh.to_text());
    out.add("evolve.csv", csv);
    out.add_json(
        "evolve.json",
        &json!({
            "t_final": task.t_final,
            "trajectories": trajs.iter().map(trajectory_json).collect::<Vec<_>>(),
            "sup_l2_difference": difference,
        }),
    )?;
    out.lines.push(match difference {
        Some(d) => format!("{} samples, Laplace/Euler sup L2 difference {d:e}", task.times.len()),
        None => format!("{} samples", task.times.len()),
    });
    Ok(out)
}

pub fn verify(setup: &Setup) -> Result<Outcome> {
    let mut out = Outcome::default();
    let runs = run_suite(&setup.config.task.verify)?;
    let mut csv = String::from("id,title,passed\n");
    for r in &runs {
        let _ = writeln!(csv, "{},\"{}\",{}", r.report.id, r.report.title, r.report.passed);
        out.lines.push(r.line());
        if !r.ok() {
            out.failures.push(format!("criterion {}", r.report.id));
        }
    }
    let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
    out.add("verify.csv", csv);
    out.add_json("verify.json", &reports)?;
    out.metadata = json!({
        "criteria": runs.iter().map(|r| json!({
            "id": r.report.id,
            "runtime_s": r.runtime_s,
            "budget_s": r.budget_s,
            "within_budget": r.within_budget(),
        })).collect::<Vec<_>>(),
    });
    Ok(out)
}
