//! Meshes, oriented point clouds, sampling and signed distances.

pub mod bvh;
pub mod cloud;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod primitives;
pub mod query;
pub mod sampling;
pub mod sdf;

pub use cloud::OrientedPointCloud;
pub use mesh::{normalization_for_bounds, normalize_mesh, NormalizationTransform, TriangleMesh};
pub use query::QueryBatch;
pub use sampling::{sample_queries, sample_surface, SurfaceSampler};
pub use sdf::{signed_distance, MeshSdf, SignedDistance};
