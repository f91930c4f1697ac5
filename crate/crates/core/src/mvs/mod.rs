//! Multi-view stereo: per-keyframe PatchMatch depth estimation guided by a
//! prior mesh, prior-based outlier filtering, and consistency fusion into a
//! single point cloud.

mod filter;
mod fusion;
mod patchmatch;

pub use filter::{filter_with_prior, DEFAULT_TAU_REL};
pub use fusion::{fuse_depth_maps, fuse_with_provenance, fusion_support, FusedPoint, FusionConfig};
pub use patchmatch::{patchmatch_depth, patchmatch_run, PatchMatchConfig, PatchMatchOutput, PriorDepth};
