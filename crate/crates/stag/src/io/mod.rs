//! File formats and the synthetic scene generator.

pub mod depth_io;
pub mod flow_io;
pub mod image_io;
pub mod stag_io;
pub mod synth;

pub use depth_io::{load_depth, save_depth};
pub use flow_io::{load_flow, save_flow};
pub use image_io::{load_frame, load_mask, save_frame, save_mask};
pub use stag_io::{load_header, load_model, save_model, StagHeader};
pub use synth::{generate_scene, GeneratedScene, SyntheticSceneSpec};
