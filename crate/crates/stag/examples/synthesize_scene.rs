//! Generates a synthetic scene with exact ground-truth depth, optical flow
//! and per-sprite masks, and writes all of it under ./out/scene.
//!
//! Run with: cargo run --release -p stag --example synthesize_scene

use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::io::{save_depth, save_flow, save_frame, save_mask};

fn main() -> stag::Result<()> {
    let spec = SyntheticSceneSpec {
        width: 96,
        height: 54,
        frames: 10,
        seed: 7,
        background: Background::Texture {
            base: [0.15, 0.2, 0.35],
            accent: [0.45, 0.5, 0.4],
            scale: 3.0,
            z: 0.9,
        },
        sprites: vec![
            Sprite {
                color: [0.85, 0.25, 0.2],
                rx: 14.0,
                ry: 11.0,
                z: 0.3,
                center: [28.0, 26.0],
                motion: Motion::Linear { velocity: [3.5, 0.5] },
            },
            Sprite {
                color: [0.95, 0.8, 0.25],
                rx: 7.0,
                ry: 7.0,
                z: 0.5,
                center: [70.0, 16.0],
                motion: Motion::Circular {
                    radius: 6.0,
                    period: 10.0,
                    phase: 0.0,
                },
            },
        ],
    };
    let scene = stag::io::generate_scene(&spec)?;

    let out = std::path::Path::new("out/scene");
    for sub in ["frames", "depth", "flow", "masks"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    for (i, frame) in scene.cube.frames.iter().enumerate() {
        save_frame(&out.join(format!("frames/frame_{i:04}.ppm")), frame)?;
        save_depth(&out.join(format!("depth/depth_{i:04}.dpt")), &scene.cube.depths[i])?;
    }
    for (i, flow) in scene.cube.flow_fwd.iter().enumerate() {
        save_flow(&out.join(format!("flow/flow_fwd_{i:04}.flo")), flow)?;
        save_flow(&out.join(format!("flow/flow_bwd_{i:04}.flo")), &scene.cube.flow_bwd[i])?;
    }
    for (si, masks) in scene.masks.iter().enumerate() {
        for (fi, mask) in masks.iter().enumerate() {
            save_mask(&out.join(format!("masks/sprite{si:02}_frame{fi:04}.pgm")), mask)?;
        }
    }
    println!(
        "wrote {} frames with depth, flow and {} sprite masks to {}",
        scene.cube.num_frames(),
        scene.masks.len(),
        out.display()
    );
    Ok(())
}
