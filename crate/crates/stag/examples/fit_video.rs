//! Fits a Gaussian cloud to a short synthetic video and reports per-frame
//! reconstruction quality.
//!
//! Run with: cargo run --release -p stag --example fit_video

use stag::fit;
use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::scene::config::FitConfig;

fn main() -> stag::Result<()> {
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames: 8,
        seed: 3,
        background: Background::Gradient {
            top: [0.2, 0.25, 0.4],
            bottom: [0.5, 0.45, 0.3],
            z: 0.9,
        },
        sprites: vec![Sprite {
            color: [0.9, 0.3, 0.2],
            rx: 7.0,
            ry: 6.0,
            z: 0.3,
            center: [13.0, 13.0],
            motion: Motion::Linear { velocity: [2.2, 0.4] },
        }],
    })?;

    let cfg = FitConfig {
        k_input: 5,
        m_supervision: 8,
        iterations: 400,
        print_every: 100,
        ..FitConfig::default()
    };
    let (cloud, report) = fit::fit(&scene.cube, &cfg, 42)?;

    println!("\nfitted {} Gaussians in {:.1}s", cloud.num_gaussians(), report.wall_time_s);
    println!("loss {:.5} -> {:.5}", report.initial_loss.total, report.final_loss.total);
    for (frame, psnr) in report.supervised_frames.iter().zip(&report.psnr_per_frame) {
        let role = if report.input_frames.contains(frame) {
            "reference"
        } else {
            "interpolated"
        };
        println!("frame {frame}: {psnr:.2} dB ({role})");
    }
    Ok(())
}
