//! Run configuration: a single TOML file. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonDomain};
use crate::mesh::MeshOptions;
use crate::time::{ContourSpec, TimeProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub task: TaskSpec,
    /// Output directory; `--out` overrides it.
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// `unit_square` or `l_shape`; exclusive with `vertices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Point>>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<PolygonDomain> {
        match (&self.preset, &self.vertices) {
            (Some(p), None) => match p.as_str() {
                "unit_square" => Ok(PolygonDomain::unit_square()),
                "l_shape" => Ok(PolygonDomain::l_shape()),
                other => Err(Error::ConfigInvalid(format!("domain.preset: unknown preset '{other}'"))),
            },
            (None, Some(v)) => PolygonDomain::new(v),
            _ => Err(Error::ConfigInvalid("domain: give exactly one of 'preset' or 'vertices'".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub h: f64,
    /// Grading exponent per corner; empty means ungraded.
    #[serde(default)]
    pub grading: Vec<f64>,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "default_min_angle")]
    pub min_angle_deg: f64,
}

fn default_min_angle() -> f64 {
    20.0
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { h: 0.125, grading: Vec::new(), radii: Vec::new(), min_angle_deg: 20.0 }
    }
}

impl MeshSpec {
    pub fn options(&self) -> MeshOptions {
        MeshOptions { h: self.h, grading: self.grading.clone(), radii: self.radii.clone(), min_angle_deg: self.min_angle_deg }
    }
}

/// Corner weights; empty `beta` means the midpoint of the positive part of each corner's window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Neumann/pressure weights; empty means 0.5 at every corner.
    #[serde(default)]
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "one")]
    pub gamma0: f64,
    /// Contour abscissa for `evolve`.
    #[serde(default = "two")]
    pub contour_gamma: f64,
    #[serde(default)]
    pub contour: ContourSpec,
    #[serde(default = "transform_tol")]
    pub transform_tol: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn transform_tol() -> f64 {
    1e-8
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { gamma0: 1.0, contour_gamma: 2.0, contour: ContourSpec::default(), transform_tol: 1e-8 }
    }
}

/// Variant payload with no fields; unknown keys next to `kind` are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoFields {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantForce {
    pub value: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSign {
    pub amplitude: f64,
    pub at: f64,
}

/// Spatial force data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceSpec {
    Zero(NoFields),
    Constant(ConstantForce),
    /// Forcing of the stream-function solution (exact solution known).
    Manufactured(NoFields),
    /// A POLYSTOKES-FIELD file on the run mesh.
    Field(FieldFile),
}

impl Default for ForceSpec {
    fn default() -> Self {
        Self::Zero(NoFields {})
    }
}

/// Spatial divergence data `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceSpec {
    Zero(NoFields),
    /// `+amplitude` for `x < at`, `−amplitude` otherwise.
    SplitSign(SplitSign),
    Field(FieldFile),
}

impl Default for DivergenceSpec {
    fn default() -> Self {
        Self::Zero(NoFields {})
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(default)]
    pub corners: CornersTask,
    #[serde(default)]
    pub resolvent: ResolventTask,
    #[serde(default)]
    pub sweep: SweepTask,
    #[serde(default)]
    pub evolve: EvolveTask,
    #[serde(default)]
    pub verify: VerifyOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornersTask {
    /// Extra openings (radians) tabulated besides the domain's corners.
    #[serde(default)]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventTask {
    /// `[Re s, Im s]`
    pub s: [f64; 2],
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default)]
    pub divergence: DivergenceSpec,
}

impl Default for ResolventTask {
    fn default() -> Self {
        Self { s: [0.0, 10.0], force: ForceSpec::default(), divergence: DivergenceSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTask {
    pub s: Vec<[f64; 2]>,
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default)]
    pub divergence: DivergenceSpec,
}

impl Default for SweepTask {
    fn default() -> Self {
        Self { s: vec![[0.0, 1.0], [0.0, 10.0], [0.0, 100.0], [0.0, 1000.0]], force: ForceSpec::default(), divergence: DivergenceSpec::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolveMethod {
    Laplace,
    Euler,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveTask {
    pub method: EvolveMethod,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub dt: f64,
    #[serde(default)]
    pub force: ForceSpec,
    /// Time profile of the force; the manufactured force carries its own.
    #[serde(default = "TimeProfile::ramp")]
    pub profile: TimeProfile,
}

impl Default for EvolveTask {
    fn default() -> Self {
        Self {
            method: EvolveMethod::Both,
            t_final: 1.0,
            times: (0..=10).map(|k| k as f64 / 10.0).collect(),
            dt: 0.01,
            force: ForceSpec::default(),
            profile: TimeProfile::ramp(),
        }
    }
}

/// Mesh sizes and budgets for the acceptance suite. Tolerances are fixed in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub convergence_levels: Vec<f64>,
    pub korn_h: f64,
    pub sweep_h: f64,
    /// Grading exponent at the reentrant corner of the L-shape sweep mesh.
    pub sweep_grading: f64,
    pub lift_levels: Vec<f64>,
    pub neumann_levels: Vec<f64>,
    pub diagnostic_h: f64,
    pub evolve_h: f64,
    pub evolve_dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Criterion ids to run; empty means all.
    pub only: Vec<u32>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            convergence_levels: vec![0.25, 0.125, 0.0625],
            korn_h: 0.25,
            sweep_h: 0.125,
            sweep_grading: 2.0,
            lift_levels: vec![0.25, 0.125, 0.0625],
            neumann_levels: vec![0.25, 0.125, 0.0625],
            diagnostic_h: 0.125,
            evolve_h: 0.125,
            evolve_dt: 0.01,
            t_final: 1.0,
            seed: 7,
            only: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain.build()?;
        let n = domain.num_corners();
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.mesh.h > 0.0) {
            return bad("mesh.h must be positive".into());
        }
        for (name, v) in [("mesh.grading", &self.mesh.grading), ("mesh.radii", &self.mesh.radii), ("weights.beta", &self.weights.beta), ("weights.gamma", &self.weights.gamma)] {
            if !v.is_empty() && v.len() != n {
                return bad(format!("{name}: expected {n} entries (one per corner), found {}", v.len()));
            }
        }
        let c = &self.solver.contour;
        if c.nodes < 3 || c.nodes % 2 == 0 {
            return bad(format!("solver.contour.nodes must be odd and >= 3, found {}", c.nodes));
        }
        if !(self.solver.contour_gamma > self.solver.gamma0) {
            return bad("solver.contour_gamma must exceed solver.gamma0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output = "runs/l"
[domain]
preset = "l_shape"
[mesh]
h = 0.25
grading = [1.0, 1.0, 1.0, 2.0, 1.0, 1.0]
[task.resolvent]
s = [0.0, 10.0]
force = { kind = "constant", value = [1.0, 0.0] }
[task.evolve]
method = "laplace"
t_final = 1.0
times = [0.0, 0.5, 1.0]
dt = 0.01
profile = { pieces = [{ start = 0.0, poly = [0.0, 1.0] }] }
"#;

    #[test]
    fn round_trips() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.mesh.grading.len(), 6);
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        let d = RunConfig::from_toml("[domain]\nvertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]\n").unwrap();
        assert_eq!(RunConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in ["colour = 1\n", "[mesh]\nh = 0.1\nsmooth = true\n", "[task.resolvent]\ns = [0.0, 1.0]\nforce = { kind = \"zero\", x = 1 }\n", "[solver.contour]\nnodes = 129\ncutoff = 80.0\ntol = 0.05\nextra = 1\n"] {
            let text = format!("{extra}[domain]\npreset = \"unit_square\"\n");
            let e = RunConfig::from_toml(&text).unwrap_err();
            assert!(matches!(e, Error::ConfigInvalid(_)), "{extra}: {e}");
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = RunConfig::from_toml("[domain]\npreset = \"unit_square\"\n[mesh]\nh = 0.1\ngrading = [1.0]\n").unwrap_err();
        assert!(e.to_string().contains("mesh.grading"), "{e}");
        let e = RunConfig::from_toml("[domain]\npreset = \"unit_square\"\n[mesh]\nh = \"big\"\n").unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
        assert!(RunConfig::from_toml("[domain]\npreset = \"disc\"\n").is_err());
    }
}
