//! Regenerates the checked-in fixtures under `fixtures/`:
//!
//! * `fixtures/plane/` — four 128×128 training views of the textured plane
//!   patch (PNG targets plus analytic depth PFMs) and one held-out view in
//!   `holdout/`, for fit experiments.
//! * `fixtures/sphere/` — a 2,000-splat unit-sphere scene and a 20-camera
//!   orbit, for mesh-extraction runs.
//!
//! Run from the workspace root: `cargo run -p gsrast-cli --example make_fixtures`

use std::path::Path;

use gsrast::io::cameras::save_cameras_json;
use gsrast::io::pfm::write_pfm;
use gsrast::io::ply::save_splat_ply;
use gsrast::io::png::write_image_png;
use gsrast::raster::{render, RenderOptions};
use gsrast::synthetic::{orbit_cameras, plane_cameras, plane_depth, sphere_scene, textured_plane_scene};
use gsrast::{Camera, Result};

fn write_plane_view(dir: &Path, id: u32, camera: &Camera) -> Result<String> {
    let scene = textured_plane_scene();
    let fb = render(&scene, camera, &RenderOptions::default())?;
    let name = format!("view_{id:04}.png");
    write_image_png(&fb.color, fb.width, fb.height, &dir.join(&name))?;
    write_pfm(
        &plane_depth(camera),
        camera.width,
        camera.height,
        1,
        &dir.join(format!("view_{id:04}_depth.pfm")),
    )?;
    Ok(name)
}

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");

    let plane_dir = root.join("plane");
    std::fs::create_dir_all(plane_dir.join("holdout"))?;
    let (train, held_out) = plane_cameras();
    let mut entries = Vec::new();
    for (i, cam) in train.iter().enumerate() {
        let name = write_plane_view(&plane_dir, i as u32, cam)?;
        entries.push((i as u32, cam, Some(name)));
    }
    save_cameras_json(&entries, &plane_dir.join("cameras.json"))?;

    let holdout_dir = plane_dir.join("holdout");
    let name = write_plane_view(&holdout_dir, 100, &held_out)?;
    save_cameras_json(&[(100, &held_out, Some(name))], &holdout_dir.join("cameras.json"))?;

    let sphere_dir = root.join("sphere");
    std::fs::create_dir_all(&sphere_dir)?;
    save_splat_ply(&sphere_scene(2000, 7), &sphere_dir.join("scene.ply"))?;
    let orbit = orbit_cameras(20, 3.0);
    let entries: Vec<(u32, &Camera, Option<String>)> =
        orbit.iter().enumerate().map(|(i, c)| (i as u32, c, None)).collect();
    save_cameras_json(&entries, &sphere_dir.join("cameras.json"))?;

    println!("fixtures written under {}", root.display());
    Ok(())
}
