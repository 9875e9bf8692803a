//! Software Gaussian-splatting renderer with closed-form per-pixel depth and
//! normal rasterization, regularization losses with analytic gradients, a
//! small scene fitter, and TSDF-based mesh extraction.

pub mod camera;
pub mod error;
pub mod fit;
pub mod fusion;
pub mod gaussian;
pub mod grad;
pub mod io;
pub mod losses;
pub mod mc_tables;
pub mod oracle;
pub mod projection;
pub mod raster;
pub mod scalar;
pub mod sh;
pub mod ssim;
pub mod synthetic;

pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::Gaussian3D;
pub use projection::SplatProjection;
