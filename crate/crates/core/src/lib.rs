//! Dense multi-view stereo and non-rigid template fitting for posed
//! keyframe sequences.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cloud;
pub mod constraints;
pub mod depth;
pub mod error;
pub mod eval;
pub mod fit;
pub mod image;
pub mod io;
pub mod landmarks;
pub mod mesh;
pub mod mvs;
pub mod pipeline;
pub mod raster;
pub mod spatial;
pub mod synth;
pub mod viewsel;

pub use camera::{backproject, project, CameraPose, Intrinsics, Keyframe};
pub use cloud::PointCloud;
pub use depth::DepthMap;
pub use error::{Error, Result};
pub use mesh::{Aabb, TriMesh};
