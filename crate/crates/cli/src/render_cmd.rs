use std::path::PathBuf;

use gsrast::io::cameras::load_cameras_json;
use gsrast::io::pfm::write_pfm;
use gsrast::io::ply::load_splat_ply;
use gsrast::io::png::write_image_png;
use gsrast::raster::{render, RenderOptions};
use gsrast::{Error, Result};

use crate::Ctx;

#[derive(clap::Args)]
pub struct RenderArgs {
    /// Input splat scene (binary 3DGS-style PLY).
    #[arg(long)]
    pub scene: PathBuf,

    /// Camera array JSON.
    #[arg(long)]
    pub cameras: PathBuf,

    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,

    /// Accumulated-opacity crossing that selects the median-depth splat.
    #[arg(long, default_value_t = 0.5)]
    pub median_threshold: f64,
}

pub fn run(args: &RenderArgs, ctx: &Ctx) -> Result<u8> {
    crate::echo(
        serde_json::json!({
            "command": "render",
            "scene": args.scene.display().to_string(),
            "cameras": args.cameras.display().to_string(),
            "out": args.out.display().to_string(),
            "median_threshold": args.median_threshold,
        }),
        ctx,
    );

    let scene = load_splat_ply(&args.scene)?;
    let cams = load_cameras_json(&args.cameras)?;
    if cams.views.is_empty() {
        return Err(Error::InvalidArgument("camera set is empty".into()));
    }
    std::fs::create_dir_all(&args.out)?;

    let opts = RenderOptions {
        median_threshold: args.median_threshold,
        ..RenderOptions::default()
    };
    for view in &cams.views {
        let fb = render(&scene.splats, &view.camera, &opts)?;
        let stem = format!("view_{:04}", view.id);
        let (w, h) = (fb.width, fb.height);
        write_image_png(&fb.color, w, h, &args.out.join(format!("{stem}_color.png")))?;
        write_pfm(&fb.median_depth, w, h, 1, &args.out.join(format!("{stem}_depth.pfm")))?;
        write_pfm(&fb.normal, w, h, 3, &args.out.join(format!("{stem}_normal.pfm")))?;
        write_pfm(&fb.accum_opacity, w, h, 1, &args.out.join(format!("{stem}_opacity.pfm")))?;
    }
    println!(
        "rendered {} splats for {} views into {}",
        scene.splats.len(),
        cams.views.len(),
        args.out.display()
    );
    Ok(0)
}
