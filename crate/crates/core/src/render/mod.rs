//! Pinhole camera, z-buffered normal rendering with a reverse pass, and
//! projection of images onto the UV layout.

mod bake;
mod camera;
mod image;
pub(crate) mod raster;

pub use bake::{bake_to_uv, VISIBILITY_TOLERANCE};
pub use camera::{project_vertices, CameraModel, Projected, MIN_DEPTH};
pub use image::{image_to_mask, mask_to_image, BitDepth, ImageBuffer};
pub use raster::{
    normals_backward, project_backward, rasterize_normals, rasterize_visibility, render_texture,
    shade_fixed, uv_to_texel, RasterOutput, NO_FACE,
};
