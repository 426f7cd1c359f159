//! Retrieval-based local manifold approximation.

mod basis;
mod index;
mod project;

pub use basis::{local_basis, LocalBasis, ProjectionMode};
pub use index::{AnnIndex, Neighbor, KMEANS_ITERS};
pub use project::{lomap_project, LomapContext, NeighborNoise, ProjectionSchedule, RetrievalKey};
