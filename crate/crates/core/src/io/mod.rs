//! File formats: 3DGS-style splat PLY, camera JSON, PFM float maps, PNG
//! color images, and OBJ/PLY mesh output.

pub mod cameras;
pub mod mesh;
pub mod pfm;
pub mod ply;
pub mod png;
