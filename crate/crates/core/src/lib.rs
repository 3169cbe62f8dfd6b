//! Resolvent and evolution solvers for the Stokes system with a grad-div term
//! on polygonal domains, with corner-weighted norms and verification tools.

pub mod config;
pub mod corner;
pub mod criteria;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod neumann;
pub mod poly;
pub mod quadrature;
pub mod sparse;
pub mod stokes;
pub mod time;
pub mod weighted;

pub use error::{Error, Result};
pub use geometry::{Point, PolygonDomain};
pub use mesh::{generate_graded_mesh, Mesh, MeshOptions};
