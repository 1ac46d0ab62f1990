//! Selects the Gaussians under a frame-0 object mask and renders the
//! selection's alpha at every frame, tracking the object without any
//! mask-specific training.
//!
//! Run with: cargo run --release -p stag --example propagate_mask

use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::scene::config::FitConfig;
use stag::segment::{mask_at, propagate_selection, LongVideoModel};

fn main() -> stag::Result<()> {
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames: 6,
        seed: 13,
        background: Background::Gradient {
            top: [0.3, 0.3, 0.35],
            bottom: [0.45, 0.4, 0.35],
            z: 0.9,
        },
        sprites: vec![Sprite {
            color: [0.9, 0.65, 0.2],
            rx: 8.0,
            ry: 6.5,
            z: 0.3,
            center: [13.0, 13.0],
            motion: Motion::Linear { velocity: [3.2, 0.2] },
        }],
    })?;

    let cfg = FitConfig {
        k_input: 4,
        m_supervision: 6,
        iterations: 400,
        print_every: 0,
        ..FitConfig::default()
    };
    let (cloud, _) = stag::fit::fit(&scene.cube, &cfg, 8)?;
    let model = LongVideoModel::single(cloud, scene.cube.num_frames());

    let selection = propagate_selection(&model, &scene.masks[0][0])?;
    let out = std::path::Path::new("out/masks");
    std::fs::create_dir_all(out)?;
    for f in 0..scene.cube.num_frames() {
        let t = f as f64 / (scene.cube.num_frames() - 1) as f64;
        let mask = mask_at(&model, &selection, t)?;
        // Intersection-over-union against the generator's ground truth.
        let gt = &scene.masks[0][f];
        let mut inter = 0.0;
        let mut union = 0.0;
        for (a, b) in mask.data().iter().zip(gt.data()) {
            if *a > 0.5 || *b > 0.5 {
                union += 1.0;
            }
            if *a > 0.5 && *b > 0.5 {
                inter += 1.0;
            }
        }
        stag::io::save_mask(&out.join(format!("mask_{f:04}.pgm")), &mask)?;
        println!("frame {f}: IoU {:.3}", inter / union.max(1.0));
    }
    Ok(())
}
