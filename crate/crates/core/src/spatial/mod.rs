//! Exact spatial queries: radius search over point sets and closest-point
//! distance to triangle meshes. Both structures are pure accelerators.

mod bvh;
mod kdtree;

pub use bvh::{closest_point_on_triangle, point_to_surface_distance, MeshDistance};
pub use kdtree::KdTree;
