//! Pointwise curvature engine for pseudo-Riemannian metrics, homothety
//! matching of curvature models, and tools for homogeneity experiments.

pub mod error;
pub mod geometry;
pub mod jet;
pub mod lab;
pub mod metric;
pub mod model;
pub mod tensor;
pub mod weyl;
pub mod zoo;

pub use error::{Error, Result};
pub use geometry::LocalGeometry;
pub use jet::{Jet, JetSpace, MAX_JET_ORDER};
pub use metric::{MetricField, Point, Signature};
pub use tensor::{JetTensor, Slot, TensorAtPoint};
pub use weyl::{weyl_scalars, WeylInvariant, WeylScalarSet};
