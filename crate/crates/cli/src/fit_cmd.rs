use std::path::{Path, PathBuf};

use gsrast::fit::{fit, trace_to_csv, FitSchedule, TargetView};
use gsrast::io::cameras::load_cameras_json;
use gsrast::io::pfm::load_pfm;
use gsrast::io::ply::{load_splat_ply, save_splat_ply};
use gsrast::io::png::read_image_png;
use gsrast::losses::LossWeights;
use gsrast::raster::{render, RenderOptions};
use gsrast::synthetic::{plane_init_scene, random_scene};
use gsrast::{Error, Gaussian3D, Result};

use crate::Ctx;

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum InitKind {
    /// Seeded random splats in the unit cube.
    Random,
    /// Jittered grid on the z = 0 plane.
    Plane,
    /// Load the initialization from --init-file.
    File,
}

#[derive(clap::Args)]
pub struct FitArgs {
    /// Directory containing cameras.json, one PNG per view, and optional
    /// <image-stem>_depth.pfm ground-truth depth for evaluation.
    #[arg(long)]
    pub targets: PathBuf,

    #[arg(long, value_enum)]
    pub init: InitKind,

    /// Scene PLY used when --init file.
    #[arg(long)]
    pub init_file: Option<PathBuf>,

    /// Splat count used when --init random.
    #[arg(long, default_value_t = 16)]
    pub init_count: usize,

    /// Photometric-only warmup iterations.
    #[arg(long, default_value_t = 2000)]
    pub iters_phase1: usize,

    /// Iterations with depth-distortion and normal-consistency terms.
    #[arg(long, default_value_t = 2000)]
    pub iters_phase2: usize,

    /// Depth-distortion weight (phase 2).
    #[arg(long, default_value_t = 100.0)]
    pub w_d: f64,

    /// Normal-consistency weight (phase 2).
    #[arg(long, default_value_t = 5.0)]
    pub w_n: f64,

    /// Output scene PLY; the loss trace lands next to it as *.trace.csv.
    #[arg(long)]
    pub out: PathBuf,
}

/// Ground-truth depth convention: `img/view.png` → `img/view_depth.pfm`.
fn depth_path_for(image: &Path) -> Option<PathBuf> {
    let stem = image.file_stem()?.to_str()?;
    let candidate = image.with_file_name(format!("{stem}_depth.pfm"));
    candidate.exists().then_some(candidate)
}

fn load_views(targets: &Path) -> Result<Vec<TargetView>> {
    let cams = load_cameras_json(&targets.join("cameras.json"))?;
    let mut views = Vec::with_capacity(cams.views.len());
    for (i, view) in cams.views.iter().enumerate() {
        let image_path = view.image.as_ref().ok_or_else(|| {
            Error::Format(format!("/{i}/image: fit targets need an image per view"))
        })?;
        let (image, w, h) = read_image_png(image_path)?;
        if (w, h) != (view.camera.width, view.camera.height) {
            return Err(Error::Format(format!(
                "/{i}/image: {}×{} does not match the camera's {}×{}",
                w, h, view.camera.width, view.camera.height
            )));
        }
        let depth = match depth_path_for(image_path) {
            Some(p) => {
                let pfm = load_pfm(&p)?;
                if pfm.channels != 1 || (pfm.width, pfm.height) != (w, h) {
                    return Err(Error::Format(format!(
                        "{}: depth map must be single-channel {w}×{h}",
                        p.display()
                    )));
                }
                Some(pfm.data)
            }
            None => None,
        };
        views.push(TargetView { camera: view.camera.clone(), image, depth });
    }
    Ok(views)
}

/// Mean absolute difference between rendered median depth and ground truth,
/// over pixels where the ground truth reports a surface.
fn depth_mae(scene: &[Gaussian3D], views: &[TargetView]) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for view in views {
        let Some(truth) = &view.depth else { continue };
        let fb = render(scene, &view.camera, &RenderOptions::default())?;
        for (d, t) in fb.median_depth.iter().zip(truth) {
            if *t > 0.0 {
                sum += (d - t).abs();
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

pub fn run(args: &FitArgs, ctx: &Ctx) -> Result<u8> {
    crate::echo(
        serde_json::json!({
            "command": "fit",
            "targets": args.targets.display().to_string(),
            "init": format!("{:?}", args.init).to_lowercase(),
            "iters_phase1": args.iters_phase1,
            "iters_phase2": args.iters_phase2,
            "w_d": args.w_d,
            "w_n": args.w_n,
            "out": args.out.display().to_string(),
        }),
        ctx,
    );

    let views = load_views(&args.targets)?;
    let initial = match args.init {
        InitKind::Random => random_scene(args.init_count, ctx.seed)?,
        InitKind::Plane => plane_init_scene(ctx.seed),
        InitKind::File => {
            let path = args.init_file.as_ref().ok_or_else(|| {
                Error::InvalidArgument("--init file requires --init-file".into())
            })?;
            load_splat_ply(path)?.splats
        }
    };

    let mut schedule = FitSchedule::for_views(&views);
    schedule.phase1_iters = args.iters_phase1;
    schedule.phase2_iters = args.iters_phase2;
    let weights = LossWeights { w_d: args.w_d, w_n: args.w_n, ..LossWeights::default() };

    let result = fit(&initial, &views, &weights, &schedule)?;
    save_splat_ply(&result.scene, &args.out)?;
    let trace_path = args.out.with_extension("trace.csv");
    std::fs::write(&trace_path, trace_to_csv(&result.trace))?;

    match result.trace.last() {
        Some(row) => println!(
            "fit {} splats, {} iterations, final loss {:.6e}",
            result.scene.len(),
            result.trace.len(),
            row.total
        ),
        None => println!("fit ran 0 iterations; output equals the initialization"),
    }
    if let Some(mae) = depth_mae(&result.scene, &views)? {
        println!("mean absolute depth error vs ground truth: {mae:.6e}");
    }
    println!("wrote {} and {}", args.out.display(), trace_path.display());
    Ok(0)
}
