//! Synthetic scenes for end-to-end testing.

mod head;
mod render;
mod scene;

pub use head::{head_correspondences, landmark_directions, Bump, HeadParams};
pub use render::{render_image, value_noise, Shading};
pub use scene::{arc_cameras, head_project, render_scene, synth_scene, template_placement, write_project, SynthConfig, SynthScene};
