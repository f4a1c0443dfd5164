use super::camera::CameraModel;
use super::image::ImageBuffer;
use super::raster::{rasterize_visibility, scan_triangle, uv_to_texel, RasterOutput, NO_FACE};
use crate::error::{Error, Result};
use crate::geom::{face_cross, Vec2, Vec3};
use crate::mesh::TriMesh;

/// Depth slack of the visibility test, in mesh units.
pub const VISIBILITY_TOLERANCE: f64 = 1e-3;

/// Largest depth gap between a bilinear tap's visible surface and the
/// baked face's plane, in mesh units.
pub const TAP_TOLERANCE: f64 = 1e-2;

/// Projects `image` onto the mesh's UV layout. A texel is covered when its
/// surface point faces the camera, is not occluded and lands inside the
/// image; covered texels receive the bilinearly sampled image value.
pub fn bake_to_uv(
    image: &ImageBuffer,
    mesh: &TriMesh,
    cam: &CameraModel,
    uv_width: usize,
    uv_height: usize,
) -> Result<(ImageBuffer, Vec<bool>)> {
    let uv = mesh
        .uv
        .as_ref()
        .ok_or_else(|| Error::invalid("mesh has no texture coordinates"))?;
    if image.width != cam.width as usize || image.height != cam.height as usize {
        return Err(Error::dim(format!(
            "image is {}x{} but camera expects {}x{}",
            image.width, image.height, cam.width, cam.height
        )));
    }
    let vis = rasterize_visibility(mesh, cam)?;
    let center = cam.center();
    let mut out = ImageBuffer::new(uv_width, uv_height, image.channels);
    let mut covered = vec![false; uv_width * uv_height];
    let mut px = vec![0.0; image.channels];
    let cam_corners = |fi: usize| mesh.corners(fi).map(|p| cam.to_camera(&p));
    for (fi, f) in mesh.faces().iter().enumerate() {
        let [a, b, c] = mesh.corners(fi);
        let own = cam_corners(fi);
        let normal = face_cross(&a, &b, &c);
        let s: [Vec2; 3] = [
            uv_to_texel(&uv[f[0]], uv_width, uv_height),
            uv_to_texel(&uv[f[1]], uv_width, uv_height),
            uv_to_texel(&uv[f[2]], uv_width, uv_height),
        ];
        scan_triangle(&s, uv_width, uv_height, |texel, w| {
            let p = a * w[0] + b * w[1] + c * w[2];
            if normal.dot(&(p - center)) >= 0.0 {
                return;
            }
            let d = cam.to_camera(&p);
            let Ok(q) = cam.project(&p) else { return };
            if !(q.u >= 0.0 && q.v >= 0.0 && q.u < image.width as f64 && q.v < image.height as f64) {
                return;
            }
            let pix = (q.v as usize) * vis.width + q.u as usize;
            let front = vis.face_id[pix];
            if front == NO_FACE {
                return;
            }
            if front as usize != fi && d.z > plane_depth(&cam_corners(front as usize), &d) + VISIBILITY_TOLERANCE {
                return;
            }
            if !taps_on_surface(&vis, cam, &own, q.u, q.v) {
                return;
            }
            if image.sample_bilinear(q.u, q.v, &mut px) {
                out.at_mut(texel).copy_from_slice(&px);
                covered[texel] = true;
            }
        });
    }
    Ok((out, covered))
}

/// Depth of `face`'s plane along the camera-space ray `d`, infinite when
/// the ray grazes the plane.
fn plane_depth(face: &[Vec3; 3], d: &Vec3) -> f64 {
    let [a, b, c] = face;
    let n = (b - a).cross(&(c - a));
    let denom = n.dot(d);
    if denom.abs() < 1e-12 * n.norm() * d.norm() {
        return f64::INFINITY;
    }
    n.dot(a) / denom * d.z
}

/// All four bilinear taps at `(u, v)` see the surface of `face` (within
/// `TAP_TOLERANCE` of its plane), so neither background nor an occluder
/// leaks into the sample.
fn taps_on_surface(vis: &RasterOutput, cam: &CameraModel, face: &[Vec3; 3], u: f64, v: f64) -> bool {
    let fx = (u - 0.5).clamp(0.0, (vis.width - 1) as f64);
    let fy = (v - 0.5).clamp(0.0, (vis.height - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(vis.width - 1), (y0 + 1).min(vis.height - 1));
    [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].iter().all(|&(x, y)| {
        let pix = y * vis.width + x;
        if vis.face_id[pix] == NO_FACE {
            return false;
        }
        let ray = Vec3::new((x as f64 + 0.5 - cam.cx) / cam.fx, (y as f64 + 0.5 - cam.cy) / cam.fy, 1.0);
        (vis.depth[pix] - plane_depth(face, &ray)).abs() <= TAP_TOLERANCE
    })
}
