//! Doubles the frame rate of a fitted model by rendering the deformation
//! field at unseen timestamps, and writes the frames to ./out/interp.
//!
//! Run with: cargo run --release -p stag --example interpolate_frames

use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::scene::config::FitConfig;
use stag::segment::{interpolate_frames, LongVideoModel};

fn main() -> stag::Result<()> {
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames: 6,
        seed: 9,
        background: Background::Gradient {
            top: [0.25, 0.3, 0.4],
            bottom: [0.45, 0.4, 0.35],
            z: 0.85,
        },
        sprites: vec![Sprite {
            color: [0.2, 0.6, 0.9],
            rx: 7.0,
            ry: 6.0,
            z: 0.4,
            center: [12.0, 14.0],
            motion: Motion::Linear { velocity: [3.0, 0.0] },
        }],
    })?;

    let cfg = FitConfig {
        k_input: 4,
        m_supervision: 6,
        iterations: 400,
        print_every: 0,
        ..FitConfig::default()
    };
    let (cloud, _) = stag::fit::fit(&scene.cube, &cfg, 5)?;
    let model = LongVideoModel::single(cloud, scene.cube.num_frames());

    let frames = interpolate_frames(&model, 2)?;
    let out = std::path::Path::new("out/interp");
    std::fs::create_dir_all(out)?;
    for (i, (t, render)) in frames.iter().enumerate() {
        stag::io::save_frame(&out.join(format!("frame_{i:04}.ppm")), &render.color)?;
        println!("t={t:.3} -> frame_{i:04}.ppm");
    }
    println!("{} frames at 2x the original rate", frames.len());
    Ok(())
}
