use crate::error::{Error, Result};
use crate::geom::{sign, Vec2, Vec3};
use crate::render::{ImageBuffer, RasterOutput};

/// Mean absolute per-channel difference over pixels covered by both the
/// render and the target, with per-pixel adjoints of the rendered normal.
pub fn normal_loss(
    raster: &RasterOutput,
    target: &ImageBuffer,
    target_mask: &[bool],
) -> Result<(f64, Vec<(usize, Vec3)>)> {
    if target.width != raster.width || target.height != raster.height || target.channels != 3 {
        return Err(Error::dim(format!(
            "target normal map is {}x{}x{}, render is {}x{}x3",
            target.width, target.height, target.channels, raster.width, raster.height
        )));
    }
    if target_mask.len() != raster.mask.len() {
        return Err(Error::dim("target mask size differs from the render"));
    }
    let pixels: Vec<usize> = raster.covered().filter(|&p| target_mask[p]).collect();
    if pixels.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / (3.0 * pixels.len() as f64);
    let mut sum = 0.0;
    let mut adjoints = Vec::with_capacity(pixels.len());
    for p in pixels {
        let n = raster.normals.at(p);
        let t = target.at(p);
        let mut g = Vec3::zeros();
        for c in 0..3 {
            let d = n[c] - t[c];
            sum += d.abs();
            g[c] = sign(d) * scale;
        }
        adjoints.push((p, g));
    }
    Ok((sum * scale, adjoints))
}

/// Landmark residual in pixel² units with adjoints for every projected
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkValue {
    pub corners: f64,
    pub contours: f64,
    pub g_corners: Vec<Vec2>,
    pub g_contours: Vec<Vec<Vec2>>,
}

impl LandmarkValue {
    pub fn value(&self) -> f64 {
        self.corners + self.contours
    }
}

/// Corner MSE plus, per contour, the one-sided Chamfer mean from projected
/// to detected points; contour terms are summed.
pub fn landmark_loss(
    projected_corners: &[Vec2],
    detected_corners: &[Vec2],
    projected_contours: &[&[Vec2]],
    detected_contours: &[&[Vec2]],
) -> Result<LandmarkValue> {
    if projected_corners.len() != detected_corners.len() {
        return Err(Error::dim(format!(
            "{} projected corners, {} detected",
            projected_corners.len(),
            detected_corners.len()
        )));
    }
    if projected_contours.len() != detected_contours.len() {
        return Err(Error::dim("contour lists differ in length"));
    }
    let mut out = LandmarkValue {
        corners: 0.0,
        contours: 0.0,
        g_corners: vec![Vec2::zeros(); projected_corners.len()],
        g_contours: Vec::with_capacity(projected_contours.len()),
    };
    if !projected_corners.is_empty() {
        let inv = 1.0 / projected_corners.len() as f64;
        for (i, (p, d)) in projected_corners.iter().zip(detected_corners).enumerate() {
            let r = p - d;
            out.corners += r.norm_squared();
            out.g_corners[i] = r * (2.0 * inv);
        }
        out.corners *= inv;
    }
    for (proj, det) in projected_contours.iter().zip(detected_contours) {
        if det.is_empty() {
            return Err(Error::invalid("detected contour is empty"));
        }
        let mut g = vec![Vec2::zeros(); proj.len()];
        if proj.is_empty() {
            out.g_contours.push(g);
            continue;
        }
        let n = proj.len() as f64;
        let mut sum = 0.0;
        for (i, p) in proj.iter().enumerate() {
            let (nearest, d2) = nearest_point(p, det);
            sum += d2;
            g[i] = (p - det[nearest]) * (2.0 / n);
        }
        out.contours += sum / n;
        out.g_contours.push(g);
    }
    Ok(out)
}

/// Index of and squared distance to the nearest point (first on ties).
fn nearest_point(p: &Vec2, set: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in set.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}
