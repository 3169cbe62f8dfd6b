//! Turns the data and weight sections of a run configuration into solver inputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use polystokes::config::{DivergenceSpec, ForceSpec, RunConfig};
use polystokes::corner::admissible_weight_window;
use polystokes::fem::{re, DiscreteField, Family, ScalarData, ScalarFn, VectorData, VectorFn, C64, ZERO};
use polystokes::harness::ManufacturedCase;
use polystokes::poly::PolyVector;
use polystokes::weighted::WeightVector;
use polystokes::{generate_graded_mesh, Error, Mesh, PolygonDomain, Result};

/// A resolved run: the configuration plus the directory its relative paths refer to.
pub struct Setup {
    pub config: RunConfig,
    pub base: PathBuf,
    pub domain: PolygonDomain,
}

impl Setup {
    pub fn new(config: RunConfig, base: PathBuf) -> Result<Self> {
        let domain = config.domain.build()?;
        Ok(Self { config, base, domain })
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(generate_graded_mesh(&self.domain, &self.config.mesh.options())?))
    }

    /// Configured `β`, or the midpoint of the positive part of each corner's window.
    pub fn beta(&self) -> Result<WeightVector> {
        let b = if self.config.weights.beta.is_empty() {
            self.domain.openings().iter().map(|&a| admissible_weight_window(a).map(|w| w.positive_midpoint())).collect::<Result<Vec<_>>>()?
        } else {
            self.config.weights.beta.clone()
        };
        WeightVector::audited(&self.domain, b)
    }

    pub fn gamma(&self) -> WeightVector {
        let g = &self.config.weights.gamma;
        WeightVector::new(if g.is_empty() { vec![0.5; self.domain.num_corners()] } else { g.clone() })
    }

    fn field(&self, path: &str, mesh: &Arc<Mesh>, families: &[Family]) -> Result<DiscreteField> {
        let path = self.base.join(path);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let (field, mesh_ref) = DiscreteField::from_text(&text, mesh.clone())?;
        let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&mesh_ref);
        if Mesh::read(&mesh_path)?.to_text() != mesh.to_text() {
            return Err(Error::ConfigInvalid(format!("{}: field mesh differs from the run mesh", path.display())));
        }
        if !families.contains(&field.family()) {
            return Err(Error::ConfigInvalid(format!("{}: expected a {families:?} field", path.display())));
        }
        Ok(field)
    }

    /// Spatial force. The manufactured force is `s u + (stationary part)` when
    /// `s` is given and the stationary part alone otherwise.
    pub fn force(&self, spec: &ForceSpec, mesh: &Arc<Mesh>, s: Option<C64>) -> Result<VectorData> {
        Ok(match spec {
            ForceSpec::Zero(_) => VectorData::zero(),
            ForceSpec::Constant(c) => {
                let v = c.value;
                VectorData::function(Arc::new(VectorFn(move |_| [re(v[0]), re(v[1])], |_| [[ZERO; 2]; 2])))
            }
            ForceSpec::Manufactured(_) => {
                let case = ManufacturedCase::stream_function();
                match s {
                    Some(s) => case.forcing(s),
                    None => VectorData::function(Arc::new(PolyVector(case.stationary_part()))),
                }
            }
            ForceSpec::Field(f) => VectorData::field(self.field(&f.path, mesh, &[Family::P2Vector])?),
        })
    }

    pub fn divergence(&self, spec: &DivergenceSpec, mesh: &Arc<Mesh>) -> Result<ScalarData> {
        Ok(match spec {
            DivergenceSpec::Zero(_) => ScalarData::zero(),
            DivergenceSpec::SplitSign(p) => {
                let (a, at) = (p.amplitude, p.at);
                ScalarData::function(Arc::new(ScalarFn(move |x: polystokes::Point| re(if x[0] < at { a } else { -a }), |_| [ZERO; 2])))
            }
            DivergenceSpec::Field(f) => ScalarData::field(self.field(&f.path, mesh, &[Family::P1, Family::P2])?),
        })
    }
}
