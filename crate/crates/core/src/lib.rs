//! Manifold-valued multidimensional scaling built on semi-relaxed
//! Gromov-Wasserstein (srGW) transport.
//!
//! The pipeline embeds a finite metric space into a circle, sphere or
//! Euclidean space in two stages: a srGW problem onto a jittered grid of the
//! target gives a Monge map used as a warm start, then Adam on the stress
//! functional refines the embedding (optionally learning the radius).
//!
//! Alongside the pipeline the crate carries brute-force Gromov-Hausdorff
//! type distances for small spaces, synthetic data generators, a WGS-84
//! inverse geodesic, and the two-district redistricting ensemble analysis.

pub mod datasets;
pub mod embed;
pub mod error;
pub mod gromov;
pub mod io;
pub mod manifolds;
pub mod mmspace;
pub mod redistrict;
pub mod srgw;
pub mod svg;

pub use error::{Error, Result};

pub use manifolds::{ManifoldKind, ManifoldPoint};
pub use mmspace::MetricMeasureSpace;
pub use srgw::{SemiCoupling, SolverConfig, SolverResult};
