//! Processes a longer video as overlapping segments sharing one frame each,
//! then renders the stitched model across the whole timeline.
//!
//! Run with: cargo run --release -p stag --example long_video_segments

use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::scene::config::FitConfig;
use stag::segment::{fit_long, plan_segments, render_at, ViewTransform};

fn main() -> stag::Result<()> {
    let frames = 16;
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames,
        seed: 19,
        background: Background::Gradient {
            top: [0.25, 0.25, 0.35],
            bottom: [0.5, 0.45, 0.35],
            z: 0.9,
        },
        sprites: vec![Sprite {
            color: [0.85, 0.35, 0.25],
            rx: 7.0,
            ry: 6.0,
            z: 0.3,
            center: [9.0, 13.0],
            motion: Motion::Linear { velocity: [1.8, 0.1] },
        }],
    })?;

    let plan = plan_segments(frames, 6)?;
    println!("windows: {:?}", plan.0);

    let cfg = FitConfig {
        k_input: 4,
        m_supervision: 6,
        iterations: 350,
        print_every: 0,
        ..FitConfig::default()
    };
    let (model, reports) = fit_long(&scene.cube, &cfg, 23, 6)?;
    for (i, r) in reports.iter().enumerate() {
        let min = r.psnr_per_frame.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("segment {i}: fitted in {:.1}s, min frame PSNR {min:.2} dB", r.wall_time_s);
    }

    let out = std::path::Path::new("out/long_video");
    std::fs::create_dir_all(out)?;
    for f in 0..frames {
        let t = f as f64 / (frames - 1) as f64;
        let render = render_at(&model, t, &ViewTransform::identity())?;
        stag::io::save_frame(&out.join(format!("frame_{f:04}.ppm")), &render.color)?;
    }
    println!("stitched model over {} segments rendered to {}", model.segments.len(), out.display());
    Ok(())
}
