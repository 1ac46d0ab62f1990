//! Exports rendered depth maps for every frame of a fitted model and compares
//! them (after affine alignment) to the ground truth.
//!
//! Run with: cargo run --release -p stag --example export_depth

use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::losses::align_depth;
use stag::scene::config::FitConfig;
use stag::segment::{render_at, LongVideoModel, ViewTransform};

fn main() -> stag::Result<()> {
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames: 5,
        seed: 31,
        background: Background::Gradient {
            top: [0.2, 0.3, 0.4],
            bottom: [0.5, 0.4, 0.3],
            z: 0.9,
        },
        sprites: vec![Sprite {
            color: [0.3, 0.8, 0.4],
            rx: 9.0,
            ry: 7.0,
            z: 0.25,
            center: [20.0, 13.0],
            motion: Motion::Linear { velocity: [1.5, 0.0] },
        }],
    })?;

    let cfg = FitConfig {
        k_input: 3,
        m_supervision: 5,
        iterations: 400,
        print_every: 0,
        ..FitConfig::default()
    };
    let (cloud, _) = stag::fit::fit(&scene.cube, &cfg, 17)?;
    let model = LongVideoModel::single(cloud, scene.cube.num_frames());

    let out = std::path::Path::new("out/depth");
    std::fs::create_dir_all(out)?;
    for f in 0..scene.cube.num_frames() {
        let t = f as f64 / (scene.cube.num_frames() - 1) as f64;
        let render = render_at(&model, t, &ViewTransform::identity())?;
        stag::io::save_depth(&out.join(format!("depth_{f:04}.dpt")), &render.depth)?;

        let align = align_depth(&render.depth, &scene.cube.depths[f])?;
        let mut mae = 0.0;
        for i in 0..render.depth.data().len() {
            if align.mask[i] {
                mae += (align.beta * render.depth.data()[i] + align.gamma
                    - scene.cube.depths[f].data()[i])
                    .abs();
            }
        }
        mae /= align.masked_count as f64;
        println!("frame {f}: aligned depth MAE {mae:.4} (beta {:.3}, gamma {:.3})", align.beta, align.gamma);
    }
    println!("depth maps written to {}", out.display());
    Ok(())
}
