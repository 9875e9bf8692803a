use std::path::PathBuf;

use gsrast::fusion::{clamp_depth_range, extract_mesh, integrate_depth, TsdfVolume};
use gsrast::io::cameras::load_cameras_json;
use gsrast::io::mesh::write_mesh;
use gsrast::io::ply::load_splat_ply;
use gsrast::raster::{render, RenderOptions};
use gsrast::{Error, Gaussian3D, Result};

use crate::Ctx;

#[derive(clap::Args)]
pub struct MeshArgs {
    /// Input splat scene (binary 3DGS-style PLY).
    #[arg(long)]
    pub scene: PathBuf,

    /// Camera array JSON; every view contributes one median depth map.
    #[arg(long)]
    pub cameras: PathBuf,

    /// TSDF voxel edge length in scene units.
    #[arg(long)]
    pub voxel_size: f64,

    /// Output mesh (.ply binary, .obj ASCII).
    #[arg(long)]
    pub out: PathBuf,
}

/// Diagonal of the splat-center bounding box; depth maps are clamped to a
/// generous multiple of this so far-field outliers cannot carve the volume.
fn scene_diagonal(scene: &[Gaussian3D]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for g in scene {
        for k in 0..3 {
            lo[k] = lo[k].min(g.center[k]);
            hi[k] = hi[k].max(g.center[k]);
        }
    }
    (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
}

pub fn run(args: &MeshArgs, ctx: &Ctx) -> Result<u8> {
    crate::echo(
        serde_json::json!({
            "command": "mesh",
            "scene": args.scene.display().to_string(),
            "cameras": args.cameras.display().to_string(),
            "voxel_size": args.voxel_size,
            "out": args.out.display().to_string(),
        }),
        ctx,
    );

    let scene = load_splat_ply(&args.scene)?;
    let cams = load_cameras_json(&args.cameras)?;
    if scene.splats.is_empty() || cams.views.is_empty() {
        return Err(Error::InvalidArgument("meshing needs splats and cameras".into()));
    }

    let mut volume = TsdfVolume::for_splats(&scene.splats, args.voxel_size)?;
    let max_depth = 10.0 * scene_diagonal(&scene.splats).max(args.voxel_size);
    let opts = RenderOptions::default();
    for view in &cams.views {
        let fb = render(&scene.splats, &view.camera, &opts)?;
        let mut depth = fb.median_depth;
        clamp_depth_range(&mut depth, max_depth);
        integrate_depth(&mut volume, &depth, &view.camera)?;
    }

    if cams.views.len() > 1 {
        volume.prune_low_weight(2.0);
    }
    let mut mesh = extract_mesh(&volume, 0.0)?;
    mesh.compute_vertex_normals();
    write_mesh(&mesh, &args.out)?;
    println!(
        "mesh: {} vertices, {} triangles → {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        args.out.display()
    );
    if mesh.is_empty() {
        eprintln!("warning: no surface crossed the TSDF; the mesh is empty");
    }
    Ok(0)
}
