//! Triangle-mesh geometry for the visuo-tactile pipeline.
//!
//! Procedural tool construction, a brute-force signed-distance oracle,
//! canonical unit-sphere normalization, query-set sampling, isosurface
//! extraction, Chamfer distance, and OBJ/PLY text I/O.

pub mod chamfer;
mod error;
pub mod io;
pub mod marching;
pub mod mesh;
pub mod normalize;
pub mod sample;
pub mod sdf;
pub mod tools;

pub use chamfer::{chamfer_distance, Frame, PointCloud};
pub use error::{GeomError, Result};
pub use marching::marching_cubes;
pub use mesh::TriangleMesh;
pub use normalize::{normalize_to_unit_sphere, NormalizationInfo};
pub use sample::{sample_query_set, sample_surface_points, Band, QueryCounts, QuerySample};
pub use sdf::{closest_point_on_triangle, signed_distance, unsigned_distance};
pub use tools::{build_tool_mesh, ToolKind};

pub type Vec3 = nalgebra::Vector3<f64>;
