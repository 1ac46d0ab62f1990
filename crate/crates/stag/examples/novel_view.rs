//! Renders a fitted model from adjusted viewpoints: a small rotation about
//! the vertical axis and a dolly-zoom style intrinsic scaling.
//!
//! Run with: cargo run --release -p stag --example novel_view

use nalgebra::{Matrix3, Vector3};
use stag::io::synth::{Background, Motion, Sprite, SyntheticSceneSpec};
use stag::scene::config::FitConfig;
use stag::segment::{render_at, LongVideoModel, ViewTransform};

fn main() -> stag::Result<()> {
    let scene = stag::io::generate_scene(&SyntheticSceneSpec {
        width: 48,
        height: 27,
        frames: 4,
        seed: 21,
        background: Background::Texture {
            base: [0.2, 0.25, 0.3],
            accent: [0.5, 0.45, 0.35],
            scale: 2.0,
            z: 0.85,
        },
        sprites: vec![Sprite {
            color: [0.85, 0.3, 0.25],
            rx: 8.0,
            ry: 7.0,
            z: 0.35,
            center: [22.0, 13.0],
            motion: Motion::Static,
        }],
    })?;

    let cfg = FitConfig {
        k_input: 2,
        m_supervision: 4,
        iterations: 300,
        print_every: 0,
        ..FitConfig::default()
    };
    let (cloud, _) = stag::fit::fit(&scene.cube, &cfg, 2)?;
    let model = LongVideoModel::single(cloud, scene.cube.num_frames());

    let out = std::path::Path::new("out/novel_view");
    std::fs::create_dir_all(out)?;

    let canonical = render_at(&model, 0.0, &ViewTransform::identity())?;
    stag::io::save_frame(&out.join("canonical.ppm"), &canonical.color)?;

    // 8 degrees about the vertical axis.
    let angle = 8f64.to_radians();
    let rotated = ViewTransform {
        rotation: Matrix3::new(
            angle.cos(),
            0.0,
            angle.sin(),
            0.0,
            1.0,
            0.0,
            -angle.sin(),
            0.0,
            angle.cos(),
        ),
        translation: Vector3::zeros(),
        intrinsic_scale: 1.0,
    };
    let view = render_at(&model, 0.0, &rotated)?;
    stag::io::save_frame(&out.join("rotated.ppm"), &view.color)?;

    let zoomed = ViewTransform {
        intrinsic_scale: 1.6,
        ..ViewTransform::identity()
    };
    let view = render_at(&model, 0.0, &zoomed)?;
    stag::io::save_frame(&out.join("zoomed.ppm"), &view.color)?;

    println!("wrote canonical.ppm, rotated.ppm and zoomed.ppm to {}", out.display());
    Ok(())
}
