//! Command-line entry point wiring the library into user workflows.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, missing or malformed
//! inputs, checked before any output is written), 1 runtime failure. Every
//! command with an output location writes a `run_manifest.json` there on
//! success; its `manifest_hash` covers the deterministic fields (command,
//! config, seed, inputs, outputs, version, metrics) and excludes timings.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fit;
use crate::img::Image;
use crate::io;
use crate::losses;
use crate::scene::config::FitConfig;
use crate::scene::cube::VideoCube;
use crate::segment::{self, LongVideoModel, ViewTransform};

#[derive(Parser)]
#[command(name = "stag", version, about = "Dynamic Gaussian video representation tool")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene with ground-truth depth, flow and masks.
    Synth {
        /// Scene description (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to frames with depth and flow priors.
    Fit(FitArgs),
    /// Render timestamps, optionally under a novel view.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// Single global timestamp in [0, 1].
        #[arg(long, conflicts_with = "fps_mult")]
        t: Option<f64>,
        /// Interpolation multiplier over the original frame rate.
        #[arg(long)]
        fps_mult: Option<usize>,
        /// Pose file: 12 whitespace-separated numbers (row-major 3x4 rigid
        /// transform), optionally followed by an intrinsic scale.
        #[arg(long)]
        xform: Option<PathBuf>,
        /// Intrinsic zoom factor (multiplies any pose-file scale).
        #[arg(long)]
        zoom: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate a frame-0 object mask over all original timestamps.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export rendered depth maps at all original timestamps.
    Depth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR per frame plus loss terms against ground-truth frames.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Dump a model file header.
    Info {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian grid as UxV, e.g. 64x36; defaults to the frame resolution.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = true)]
    bounded_deform: bool,
    /// Process the video as overlapping windows of this many frames.
    #[arg(long)]
    segment_len: Option<usize>,
}

enum CmdError {
    Validation(String),
    Runtime(String),
}

impl CmdError {
    fn code(&self) -> i32 {
        match self {
            CmdError::Validation(_) => 2,
            CmdError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Validation(m) | CmdError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CmdError {
    CmdError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CmdError {
    CmdError::Runtime(e.to_string())
}

type CmdResult = Result<(), CmdError>;

#[derive(Serialize)]
struct Timings {
    wall_s: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: String,
    metrics: serde_json::Value,
    manifest_hash: String,
    timings: Timings,
}

struct ManifestBuilder {
    command: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    metrics: serde_json::Value,
    start: Instant,
}

impl ManifestBuilder {
    fn new(command: &[String]) -> Self {
        Self {
            command: command.to_vec(),
            config: serde_json::Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
            start: Instant::now(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Serializes with the hash over all deterministic fields, then writes
    /// atomically into `dir`.
    fn write(self, dir: &Path) -> Result<(), CmdError> {
        let hashed = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": env!("CARGO_PKG_VERSION"),
            "metrics": self.metrics,
        });
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&hashed).map_err(runtime)?);
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            metrics: self.metrics,
            manifest_hash: format!("{:x}", hasher.finalize()),
            timings: Timings {
                wall_s: self.start.elapsed().as_secs_f64(),
            },
        };
        let path = dir.join("run_manifest.json");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&manifest).map_err(runtime)?).map_err(runtime)?;
        fs::rename(&tmp, &path).map_err(runtime)?;
        Ok(())
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(argv.iter()) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Synth { spec, out } => cmd_synth(&argv, &spec, &out),
        Cmd::Fit(args) => cmd_fit(&argv, &args),
        Cmd::Render {
            model,
            t,
            fps_mult,
            xform,
            zoom,
            out,
        } => cmd_render(&argv, &model, t, fps_mult, xform.as_deref(), zoom, &out),
        Cmd::Segment { model, mask, out } => cmd_segment(&argv, &model, &mask, &out),
        Cmd::Depth { model, out } => cmd_depth(&argv, &model, &out),
        Cmd::Eval {
            model,
            frames,
            report,
        } => cmd_eval(&argv, &model, &frames, &report),
        Cmd::Info { model } => cmd_info(&model),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn require_file(p: &Path) -> Result<(), CmdError> {
    if !p.is_file() {
        return Err(CmdError::Validation(format!("missing file: {}", p.display())));
    }
    Ok(())
}

fn require_dir(p: &Path) -> Result<(), CmdError> {
    if !p.is_dir() {
        return Err(CmdError::Validation(format!(
            "missing directory: {}",
            p.display()
        )));
    }
    Ok(())
}

fn sorted_files(dir: &Path, prefix: &str, exts: &[&str]) -> Result<Vec<PathBuf>, CmdError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(validation)? {
        let path = entry.map_err(validation)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if name.starts_with(prefix) && exts.contains(&ext) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CmdError::Validation(format!(
            "no {prefix}*.{} files in {}",
            exts.join("/"),
            dir.display()
        )));
    }
    Ok(out)
}

fn cmd_synth(argv: &[String], spec_path: &Path, out: &Path) -> CmdResult {
    require_file(spec_path)?;
    let spec_text = fs::read_to_string(spec_path).map_err(validation)?;
    let spec: io::SyntheticSceneSpec = serde_json::from_str(&spec_text)
        .map_err(|e| CmdError::Validation(format!("{}: {e}", spec_path.display())))?;
    let scene = io::generate_scene(&spec).map_err(validation)?;

    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(spec_path);
    manifest.config = serde_json::to_value(&spec).map_err(runtime)?;
    manifest.seed = Some(spec.seed);

    for sub in ["frames", "depth", "flow", "masks"] {
        fs::create_dir_all(out.join(sub)).map_err(runtime)?;
    }
    let cube = &scene.cube;
    for (i, frame) in cube.frames.iter().enumerate() {
        let p = out.join(format!("frames/frame_{i:04}.ppm"));
        io::save_frame(&p, frame).map_err(runtime)?;
        manifest.output(&p);
    }
    for (i, depth) in cube.depths.iter().enumerate() {
        let p = out.join(format!("depth/depth_{i:04}.dpt"));
        io::save_depth(&p, depth).map_err(runtime)?;
        manifest.output(&p);
    }
    for (i, flow) in cube.flow_fwd.iter().enumerate() {
        let p = out.join(format!("flow/flow_fwd_{i:04}.flo"));
        io::save_flow(&p, flow).map_err(runtime)?;
        manifest.output(&p);
    }
    for (i, flow) in cube.flow_bwd.iter().enumerate() {
        let p = out.join(format!("flow/flow_bwd_{i:04}.flo"));
        io::save_flow(&p, flow).map_err(runtime)?;
        manifest.output(&p);
    }
    for (si, frames) in scene.masks.iter().enumerate() {
        for (fi, mask) in frames.iter().enumerate() {
            let p = out.join(format!("masks/sprite{si:02}_frame{fi:04}.pgm"));
            io::save_mask(&p, mask).map_err(runtime)?;
            manifest.output(&p);
        }
    }
    manifest.metrics = serde_json::json!({
        "frames": cube.num_frames(),
        "width": cube.width(),
        "height": cube.height(),
        "sprites": spec.sprites.len(),
    });
    manifest.write(out)
}

fn parse_grid(s: &str) -> Result<(usize, usize), CmdError> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() == 2 {
        if let (Ok(u), Ok(v)) = (parts[0].parse(), parts[1].parse()) {
            return Ok((u, v));
        }
    }
    Err(CmdError::Validation(format!(
        "bad --grid value {s:?}, expected UxV like 64x36"
    )))
}

/// Loads a frames/depth/flow directory triple into a cube.
fn load_cube(frames_dir: &Path, depth_dir: &Path, flow_dir: &Path) -> Result<VideoCube, CmdError> {
    let frame_paths = sorted_files(frames_dir, "frame_", &["ppm", "png"])?;
    let n = frame_paths.len();
    let mut frames = Vec::with_capacity(n);
    for p in &frame_paths {
        frames.push(io::load_frame(p).map_err(validation)?);
    }
    let depth_paths = sorted_files(depth_dir, "depth_", &["dpt"])?;
    if depth_paths.len() != n {
        return Err(CmdError::Validation(format!(
            "{} depth maps for {} frames",
            depth_paths.len(),
            n
        )));
    }
    let mut depths = Vec::with_capacity(n);
    for p in &depth_paths {
        depths.push(io::load_depth(p).map_err(validation)?);
    }
    let (mut flow_fwd, mut flow_bwd) = (Vec::new(), Vec::new());
    if n > 1 {
        let fwd = sorted_files(flow_dir, "flow_fwd_", &["flo"])?;
        let bwd = sorted_files(flow_dir, "flow_bwd_", &["flo"])?;
        if fwd.len() != n - 1 || bwd.len() != n - 1 {
            return Err(CmdError::Validation(format!(
                "expected {} forward/backward flow files, found {}/{}",
                n - 1,
                fwd.len(),
                bwd.len()
            )));
        }
        for p in fwd.iter().chain(bwd.iter()) {
            let f = io::load_flow(p).map_err(validation)?;
            if flow_fwd.len() < n - 1 {
                flow_fwd.push(f);
            } else {
                flow_bwd.push(f);
            }
        }
    }
    let timestamps = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    };
    let cube = VideoCube {
        frames,
        timestamps,
        depths,
        flow_fwd,
        flow_bwd,
    };
    cube.validate().map_err(validation)?;
    Ok(cube)
}

fn cmd_fit(argv: &[String], args: &FitArgs) -> CmdResult {
    require_dir(&args.frames)?;
    require_dir(&args.depth)?;
    require_dir(&args.flow)?;
    let cube = load_cube(&args.frames, &args.depth, &args.flow)?;

    let mut cfg = FitConfig {
        k_input: args.k,
        m_supervision: args.m,
        iterations: args.iters,
        ..FitConfig::default()
    };
    cfg.deform.bounded = args.bounded_deform;
    if let Some(grid) = &args.grid {
        cfg.grid = Some(parse_grid(grid)?);
    }
    cfg.validate().map_err(validation)?;

    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(&args.frames);
    manifest.input(&args.depth);
    manifest.input(&args.flow);
    manifest.seed = Some(args.seed);
    manifest.config = serde_json::json!({
        "fit": cfg,
        "segment_len": args.segment_len,
    });

    let (model, reports) = match args.segment_len {
        Some(len) if cube.num_frames() > len => {
            segment::fit_long(&cube, &cfg, args.seed, len).map_err(runtime)?
        }
        _ => {
            let (cloud, report) = fit::fit(&cube, &cfg, args.seed).map_err(runtime)?;
            (
                LongVideoModel::single(cloud, cube.num_frames()),
                vec![report],
            )
        }
    };

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    io::save_model(&args.out, &model).map_err(runtime)?;
    manifest.output(&args.out);
    manifest.metrics = serde_json::to_value(&reports).map_err(runtime)?;
    let dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    manifest.write(dir)
}

fn parse_pose_file(path: &Path) -> Result<ViewTransform, CmdError> {
    let text = fs::read_to_string(path).map_err(validation)?;
    let nums: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CmdError::Validation(format!("{}: {e}", path.display())))?;
    if nums.len() != 12 && nums.len() != 13 {
        return Err(CmdError::Validation(format!(
            "{}: expected 12 numbers (row-major 3x4) plus optional scale, got {}",
            path.display(),
            nums.len()
        )));
    }
    let rotation = nalgebra::Matrix3::new(
        nums[0], nums[1], nums[2], nums[4], nums[5], nums[6], nums[8], nums[9], nums[10],
    );
    let translation = nalgebra::Vector3::new(nums[3], nums[7], nums[11]);
    let xf = ViewTransform {
        rotation,
        translation,
        intrinsic_scale: if nums.len() == 13 { nums[12] } else { 1.0 },
    };
    xf.validate().map_err(validation)?;
    Ok(xf)
}

fn cmd_render(
    argv: &[String],
    model_path: &Path,
    t: Option<f64>,
    fps_mult: Option<usize>,
    xform: Option<&Path>,
    zoom: Option<f64>,
    out: &Path,
) -> CmdResult {
    require_file(model_path)?;
    let model = io::load_model(model_path).map_err(validation)?;
    let mut view = match xform {
        Some(p) => {
            require_file(p)?;
            parse_pose_file(p)?
        }
        None => ViewTransform::identity(),
    };
    if let Some(z) = zoom {
        if z <= 0.0 {
            return Err(CmdError::Validation("--zoom must be positive".into()));
        }
        view.intrinsic_scale *= z;
    }
    if let Some(t) = t {
        if !(0.0..=1.0).contains(&t) {
            return Err(CmdError::Validation(format!("--t {t} outside [0, 1]")));
        }
    }

    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(model_path);
    if let Some(p) = xform {
        manifest.input(p);
    }
    fs::create_dir_all(out).map_err(runtime)?;

    let renders: Vec<(f64, crate::raster::RenderOutput)> = match (t, fps_mult) {
        (Some(t), _) => vec![(t, segment::render_at(&model, t, &view).map_err(runtime)?)],
        (None, mult) => {
            let mult = mult.unwrap_or(1);
            if mult < 1 {
                return Err(CmdError::Validation("--fps-mult must be >= 1".into()));
            }
            if view.is_identity() {
                segment::interpolate_frames(&model, mult).map_err(runtime)?
            } else {
                let count = mult * (model.total_frames - 1) + 1;
                let mut outs = Vec::with_capacity(count);
                for i in 0..count {
                    let t = i as f64 / (count - 1) as f64;
                    outs.push((t, segment::render_at(&model, t, &view).map_err(runtime)?));
                }
                outs
            }
        }
    };
    let mut times = Vec::new();
    for (i, (t, render)) in renders.iter().enumerate() {
        let p = out.join(format!("render_{i:04}.ppm"));
        io::save_frame(&p, &render.color).map_err(runtime)?;
        manifest.output(&p);
        let p = out.join(format!("render_depth_{i:04}.dpt"));
        io::save_depth(&p, &render.depth).map_err(runtime)?;
        manifest.output(&p);
        times.push(*t);
    }
    manifest.metrics = serde_json::json!({ "timestamps": times });
    manifest.write(out)
}

fn cmd_segment(argv: &[String], model_path: &Path, mask_path: &Path, out: &Path) -> CmdResult {
    require_file(model_path)?;
    require_file(mask_path)?;
    let model = io::load_model(model_path).map_err(validation)?;
    let mask = io::load_mask(mask_path).map_err(validation)?;
    if mask.width() != model.width() || mask.height() != model.height() {
        return Err(CmdError::Validation(format!(
            "mask is {}x{} but the model renders {}x{}",
            mask.width(),
            mask.height(),
            model.width(),
            model.height()
        )));
    }

    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(model_path);
    manifest.input(mask_path);
    fs::create_dir_all(out).map_err(runtime)?;

    let selection = segment::propagate_selection(&model, &mask).map_err(runtime)?;
    if selection.empty {
        eprintln!("warning: mask selected no Gaussians at some stage");
    }
    for i in 0..model.total_frames {
        let t = if model.total_frames == 1 {
            0.0
        } else {
            i as f64 / (model.total_frames - 1) as f64
        };
        let m = segment::mask_at(&model, &selection, t).map_err(runtime)?;
        let p = out.join(format!("mask_{i:04}.pgm"));
        io::save_mask(&p, &m).map_err(runtime)?;
        manifest.output(&p);
    }
    manifest.metrics = serde_json::json!({
        "frames": model.total_frames,
        "empty_selection": selection.empty,
    });
    manifest.write(out)
}

fn cmd_depth(argv: &[String], model_path: &Path, out: &Path) -> CmdResult {
    require_file(model_path)?;
    let model = io::load_model(model_path).map_err(validation)?;
    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(model_path);
    fs::create_dir_all(out).map_err(runtime)?;
    for i in 0..model.total_frames {
        let t = if model.total_frames == 1 {
            0.0
        } else {
            i as f64 / (model.total_frames - 1) as f64
        };
        let render = segment::render_at(&model, t, &ViewTransform::identity()).map_err(runtime)?;
        let p = out.join(format!("depth_{i:04}.dpt"));
        io::save_depth(&p, &render.depth).map_err(runtime)?;
        manifest.output(&p);
    }
    manifest.metrics = serde_json::json!({ "frames": model.total_frames });
    manifest.write(out)
}

fn cmd_eval(argv: &[String], model_path: &Path, frames_dir: &Path, report_path: &Path) -> CmdResult {
    require_file(model_path)?;
    require_dir(frames_dir)?;
    let model = io::load_model(model_path).map_err(validation)?;
    let frame_paths = sorted_files(frames_dir, "frame_", &["ppm", "png"])?;
    if frame_paths.len() != model.total_frames {
        return Err(CmdError::Validation(format!(
            "{} frames on disk but the model covers {}",
            frame_paths.len(),
            model.total_frames
        )));
    }
    let mut frames: Vec<Image> = Vec::with_capacity(frame_paths.len());
    for p in &frame_paths {
        frames.push(io::load_frame(p).map_err(validation)?);
    }

    let mut manifest = ManifestBuilder::new(argv);
    manifest.input(model_path);
    manifest.input(frames_dir);

    let mut psnrs = Vec::new();
    let mut mses = Vec::new();
    for (i, target) in frames.iter().enumerate() {
        let t = if model.total_frames == 1 {
            0.0
        } else {
            i as f64 / (model.total_frames - 1) as f64
        };
        let render = segment::render_at(&model, t, &ViewTransform::identity()).map_err(runtime)?;
        let (mse, _) = losses::mse_loss(&render.color, target).map_err(runtime)?;
        mses.push(mse);
        psnrs.push(fit::psnr_of_mse(mse));
    }
    let mean_psnr = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
    let report = serde_json::json!({
        "psnr_per_frame": psnrs,
        "mse_per_frame": mses,
        "mean_psnr": mean_psnr,
        "frames": frames.len(),
    });
    if let Some(parent) = report_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    fs::write(report_path, serde_json::to_vec_pretty(&report).map_err(runtime)?).map_err(runtime)?;
    manifest.output(report_path);
    manifest.metrics = report;
    let dir = report_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    manifest.write(dir)
}

fn cmd_info(model_path: &Path) -> CmdResult {
    require_file(model_path)?;
    let header = io::load_header(model_path).map_err(validation)?;
    println!("magic:        STAGV001");
    println!("segments:     {}", header.n_segments);
    println!("total_frames: {}", header.total_frames);
    println!("resolution:   {}x{}", header.width, header.height);
    println!("grid:         {}x{}", header.grid_u, header.grid_v);
    println!("feature_dim:  {}", header.feature_dim);
    println!("depth_bins:   {}", header.n_bins);
    println!("time_order:   {}", header.l_order);
    println!("time_dim:     {}", header.time_dim);
    println!("hidden_dim:   {}", header.hidden_dim);
    println!(
        "deformation:  {}",
        if header.flags & 1 != 0 {
            format!("bounded (+/-{})", header.bound)
        } else {
            "unbounded".to_string()
        }
    );
    println!(
        "camera:       fx={} fy={} cx={} cy={}",
        header.fx, header.fy, header.cx, header.cy
    );
    Ok(())
}
