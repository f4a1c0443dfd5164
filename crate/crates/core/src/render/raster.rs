use nalgebra::Matrix3;

use super::camera::{project_vertices, CameraModel, Projected};
use super::image::ImageBuffer;
use crate::error::{Error, Result};
use crate::geom::{cross2, cross2_backward, face_cross, face_cross_backward, normalize_backward, Vec2, Vec3};
use crate::mesh::TriMesh;

/// Face-id value for uncovered pixels.
pub const NO_FACE: u32 = u32::MAX;

/// Screen-space triangles smaller than this (in pixels²) are skipped.
const MIN_SCREEN_AREA: f64 = 1e-12;

/// Result of a z-buffered rasterization.
#[derive(Debug, Clone)]
pub struct RasterOutput {
    pub width: usize,
    pub height: usize,
    /// Camera-space unit normals, 3 channels; zero outside coverage.
    pub normals: ImageBuffer,
    pub mask: Vec<bool>,
    pub face_id: Vec<u32>,
    /// Screen-space barycentrics of the pixel center in its face.
    pub bary: Vec<[f64; 3]>,
    /// Perspective-correct camera depth; infinite outside coverage.
    pub depth: Vec<f64>,
}

impl RasterOutput {
    pub fn covered(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn coverage_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[inline]
fn pixel_center(index: usize, width: usize) -> Vec2 {
    Vec2::new((index % width) as f64 + 0.5, (index / width) as f64 + 0.5)
}

#[inline]
fn screen(p: &Projected) -> Vec2 {
    Vec2::new(p.u, p.v)
}

/// Edge functions of `q` against triangle `s`; `e[k]` is the doubled signed
/// area of the sub-triangle opposite corner k.
#[inline]
fn edge_functions(s: &[Vec2; 3], q: &Vec2) -> [f64; 3] {
    [
        cross2(&(s[1] - q), &(s[2] - q)),
        cross2(&(s[2] - q), &(s[0] - q)),
        cross2(&(s[0] - q), &(s[1] - q)),
    ]
}

#[inline]
fn barycentric(s: &[Vec2; 3], q: &Vec2) -> Option<[f64; 3]> {
    let e = edge_functions(s, q);
    let area = e[0] + e[1] + e[2];
    if area.abs() < MIN_SCREEN_AREA {
        return None;
    }
    Some([e[0] / area, e[1] / area, e[2] / area])
}

/// Calls `visit(pixel index, barycentrics)` for every pixel center inside
/// the 2D triangle `s` on a `width`×`height` grid.
pub(crate) fn scan_triangle(s: &[Vec2; 3], width: usize, height: usize, mut visit: impl FnMut(usize, [f64; 3])) {
    let min_u = s[0].x.min(s[1].x).min(s[2].x);
    let max_u = s[0].x.max(s[1].x).max(s[2].x);
    let min_v = s[0].y.min(s[1].y).min(s[2].y);
    let max_v = s[0].y.max(s[1].y).max(s[2].y);
    if !(min_u.is_finite() && max_u.is_finite() && min_v.is_finite() && max_v.is_finite()) {
        return;
    }
    let x0 = (min_u - 0.5).ceil().max(0.0);
    let x1 = (max_u - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_v - 0.5).ceil().max(0.0);
    let y1 = (max_v - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let e = edge_functions(s, &Vec2::zeros());
    let area = e[0] + e[1] + e[2];
    if area.abs() < MIN_SCREEN_AREA {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let q = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let e = edge_functions(s, &q);
            let b = [e[0] / area, e[1] / area, e[2] / area];
            if b[0] >= 0.0 && b[1] >= 0.0 && b[2] >= 0.0 {
                visit(y * width + x, b);
            }
        }
    }
}

/// Hard z-buffer visibility: face id, barycentrics and depth per pixel.
/// Ties keep the lower face id.
pub fn rasterize_visibility(mesh: &TriMesh, cam: &CameraModel) -> Result<RasterOutput> {
    cam.validate()?;
    let proj = project_vertices(mesh, cam)?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut face_id = vec![NO_FACE; w * h];
    let mut bary = vec![[0.0; 3]; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let s = [screen(&proj[f[0]]), screen(&proj[f[1]]), screen(&proj[f[2]])];
        let z = [proj[f[0]].depth, proj[f[1]].depth, proj[f[2]].depth];
        scan_triangle(&s, w, h, |pix, b| {
            let d = 1.0 / (b[0] / z[0] + b[1] / z[1] + b[2] / z[2]);
            if d < depth[pix] {
                depth[pix] = d;
                face_id[pix] = fi as u32;
                bary[pix] = b;
            }
        });
    }
    let mask = face_id.iter().map(|&f| f != NO_FACE).collect();
    Ok(RasterOutput {
        width: w,
        height: h,
        normals: ImageBuffer::new(w, h, 3),
        mask,
        face_id,
        bary,
        depth,
    })
}

/// Renders camera-space normals: the covering face's area-weighted vertex
/// normals interpolated with screen-space barycentrics and renormalized.
pub fn rasterize_normals(mesh: &TriMesh, cam: &CameraModel) -> Result<RasterOutput> {
    let mut out = rasterize_visibility(mesh, cam)?;
    shade_into(mesh, cam, &mut out)?;
    Ok(out)
}

/// Re-evaluates barycentrics and normals of `mesh` under the pixel-to-face
/// assignment of `raster`. Barycentrics may leave [0, 1] when `mesh` has moved.
pub fn shade_fixed(mesh: &TriMesh, cam: &CameraModel, raster: &RasterOutput) -> Result<RasterOutput> {
    let mut out = raster.clone();
    shade_into(mesh, cam, &mut out)?;
    Ok(out)
}

fn shade_into(mesh: &TriMesh, cam: &CameraModel, out: &mut RasterOutput) -> Result<()> {
    let proj = project_vertices(mesh, cam)?;
    let vn = crate::mesh::vertex_normals(mesh);
    let r = cam.rotation_matrix();
    let faces = mesh.faces();
    for pix in 0..out.face_id.len() {
        let fid = out.face_id[pix];
        if fid == NO_FACE {
            continue;
        }
        let f = faces[fid as usize];
        let s = [screen(&proj[f[0]]), screen(&proj[f[1]]), screen(&proj[f[2]])];
        let b = barycentric(&s, &pixel_center(pix, out.width)).ok_or_else(|| {
            Error::Numerical(format!("face {fid} collapsed to zero screen area"))
        })?;
        let m = vn[f[0]] * b[0] + vn[f[1]] * b[1] + vn[f[2]] * b[2];
        let len = m.norm();
        if len < 1e-12 {
            return Err(Error::Numerical(format!(
                "interpolated normal vanishes inside face {fid}"
            )));
        }
        let n = r * (m / len);
        out.bary[pix] = b;
        out.normals.at_mut(pix).copy_from_slice(n.as_slice());
    }
    Ok(())
}

/// Reverse pass of `rasterize_normals`: maps per-pixel adjoints of the
/// camera-space normal to vertex-position adjoints. Visibility is treated as
/// constant, so only shading and barycentrics carry gradient.
pub fn normals_backward(
    mesh: &TriMesh,
    cam: &CameraModel,
    raster: &RasterOutput,
    pixel_adjoints: &[(usize, Vec3)],
) -> Result<Vec<Vec3>> {
    let proj = project_vertices(mesh, cam)?;
    let faces = mesh.faces();
    let r = cam.rotation_matrix();
    let rt = r.transpose();

    // unnormalized area-weighted normals
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for (fi, f) in faces.iter().enumerate() {
        let [a, b, c] = mesh.corners(fi);
        let n = face_cross(&a, &b, &c);
        for &v in f {
            acc[v] += n;
        }
    }
    let lens: Vec<f64> = acc.iter().map(|n| n.norm()).collect();
    let vn: Vec<Vec3> = acc
        .iter()
        .zip(&lens)
        .map(|(n, &l)| if l > 0.0 { n / l } else { Vec3::zeros() })
        .collect();

    let mut g_vn = vec![Vec3::zeros(); mesh.vertex_count()];
    let mut g_screen = vec![Vec2::zeros(); mesh.vertex_count()];
    for &(pix, g_cam) in pixel_adjoints {
        let fid = raster.face_id[pix];
        if fid == NO_FACE {
            continue;
        }
        let f = faces[fid as usize];
        let s = [screen(&proj[f[0]]), screen(&proj[f[1]]), screen(&proj[f[2]])];
        let q = pixel_center(pix, raster.width);
        let e = edge_functions(&s, &q);
        let area = e[0] + e[1] + e[2];
        if area.abs() < MIN_SCREEN_AREA {
            continue;
        }
        let b = [e[0] / area, e[1] / area, e[2] / area];
        let m = vn[f[0]] * b[0] + vn[f[1]] * b[1] + vn[f[2]] * b[2];
        let len = m.norm();
        if len < 1e-12 {
            continue;
        }
        let g_m = normalize_backward(&(m / len), len, &(rt * g_cam));
        let mut g_b = [0.0; 3];
        for k in 0..3 {
            g_vn[f[k]] += g_m * b[k];
            g_b[k] = vn[f[k]].dot(&g_m);
        }
        // b_k = e_k / area with area = Σ e
        let dot = g_b[0] * b[0] + g_b[1] * b[1] + g_b[2] * b[2];
        let g_e = [(g_b[0] - dot) / area, (g_b[1] - dot) / area, (g_b[2] - dot) / area];
        // e0 = (s1-q)×(s2-q), e1 = (s2-q)×(s0-q), e2 = (s0-q)×(s1-q)
        for (k, (i, j)) in [(1, 2), (2, 0), (0, 1)].into_iter().enumerate() {
            let (ga, gb) = cross2_backward(&(s[i] - q), &(s[j] - q), g_e[k]);
            g_screen[f[i]] += ga;
            g_screen[f[j]] += gb;
        }
    }

    let mut grad = vec![Vec3::zeros(); mesh.vertex_count()];
    // screen coordinates through the pinhole
    for (v, gs) in g_screen.iter().enumerate() {
        if gs.x == 0.0 && gs.y == 0.0 {
            continue;
        }
        grad[v] += project_backward(cam, &r, &mesh.vertices[v], gs.x, gs.y);
    }
    // vertex normals through the face cross products
    let mut g_acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        if lens[v] > 0.0 && g_vn[v] != Vec3::zeros() {
            g_acc[v] = normalize_backward(&vn[v], lens[v], &g_vn[v]);
        }
    }
    for (fi, f) in faces.iter().enumerate() {
        let g = g_acc[f[0]] + g_acc[f[1]] + g_acc[f[2]];
        if g == Vec3::zeros() {
            continue;
        }
        let [a, b, c] = mesh.corners(fi);
        let gp = face_cross_backward(&a, &b, &c, &g);
        for k in 0..3 {
            grad[f[k]] += gp[k];
        }
    }
    Ok(grad)
}

/// Adjoint of the pinhole projection of world point `p` given adjoints of
/// its pixel coordinates.
pub fn project_backward(cam: &CameraModel, r: &Matrix3<f64>, p: &Vec3, g_u: f64, g_v: f64) -> Vec3 {
    let c = r * p + cam.translation_vec();
    let iz = 1.0 / c.z;
    let g_cam = Vec3::new(
        g_u * cam.fx * iz,
        g_v * cam.fy * iz,
        -(g_u * cam.fx * c.x + g_v * cam.fy * c.y) * iz * iz,
    );
    r.transpose() * g_cam
}

/// Texel-space position of a UV coordinate on a `width`×`height` map. UV
/// v = 0 is the bottom row.
#[inline]
pub fn uv_to_texel(uv: &Vec2, width: usize, height: usize) -> Vec2 {
    Vec2::new(uv.x * width as f64, (1.0 - uv.y) * height as f64)
}

/// Color render: perspective-correct UV lookup of `texture` with bilinear
/// filtering. Returns the image and its coverage mask.
pub fn render_texture(mesh: &TriMesh, cam: &CameraModel, texture: &ImageBuffer) -> Result<(ImageBuffer, Vec<bool>)> {
    let uv = mesh
        .uv
        .as_ref()
        .ok_or_else(|| Error::invalid("mesh has no texture coordinates"))?;
    let vis = rasterize_visibility(mesh, cam)?;
    let proj = project_vertices(mesh, cam)?;
    let mut out = ImageBuffer::new(vis.width, vis.height, texture.channels);
    let mut px = vec![0.0; texture.channels];
    for pix in 0..vis.face_id.len() {
        let fid = vis.face_id[pix];
        if fid == NO_FACE {
            continue;
        }
        let f = mesh.faces()[fid as usize];
        let b = vis.bary[pix];
        let w: Vec<f64> = (0..3).map(|k| b[k] / proj[f[k]].depth).collect();
        let sum: f64 = w.iter().sum();
        let t = (uv[f[0]] * w[0] + uv[f[1]] * w[1] + uv[f[2]] * w[2]) / sum;
        let tex = uv_to_texel(&t, texture.width, texture.height);
        texture.sample_bilinear(
            tex.x.clamp(0.0, texture.width as f64),
            tex.y.clamp(0.0, texture.height as f64),
            &mut px,
        );
        out.at_mut(pix).copy_from_slice(&px);
    }
    Ok((out, vis.mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::triangle;

    pub(crate) fn axis_camera(size: u32) -> CameraModel {
        CameraModel {
            fx: size as f64,
            fy: size as f64,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0,
            rotation: [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
            translation: [0.0; 3],
            width: size,
            height: size,
        }
    }

    #[test]
    fn facing_triangle_renders_minus_z() {
        // y grows downward on screen, so this winding faces the camera
        let m = triangle([[-2., -2., 1.], [-2., 2., 1.], [2., 0., 1.]]);
        let r = rasterize_normals(&m, &axis_camera(32)).unwrap();
        assert!(r.coverage_count() > 100);
        for p in r.covered() {
            let n = r.normals.at(p);
            assert!(n[0].abs() < 1e-6 && n[1].abs() < 1e-6 && (n[2] + 1.0).abs() < 1e-6);
            let b = r.bary[p];
            assert!(b.iter().all(|&x| x >= 0.0) && (b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.depth[p] > 0.0);
        }
    }

    #[test]
    fn nearer_face_wins() {
        let m = TriMesh::new(
            vec![
                Vec3::new(-1., -1., 2.),
                Vec3::new(-1., 1., 2.),
                Vec3::new(1., 0., 2.),
                Vec3::new(-0.5, -0.5, 1.5),
                Vec3::new(-0.5, 0.5, 1.5),
                Vec3::new(0.5, 0.0, 1.5),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
            None,
        )
        .unwrap();
        let cam = axis_camera(64);
        let r = rasterize_normals(&m, &cam).unwrap();
        let near = crate::mesh::fixtures::triangle([[-0.5, -0.5, 1.5], [-0.5, 0.5, 1.5], [0.5, 0.0, 1.5]]);
        let near_only = rasterize_visibility(&near, &cam).unwrap();
        for p in near_only.covered() {
            assert_eq!(r.face_id[p], 1);
        }
        assert!(r.face_id.iter().any(|&f| f == 0));
        for (p, &f) in r.face_id.iter().enumerate() {
            assert_eq!(r.mask[p], f != NO_FACE);
        }
    }

    #[test]
    fn rasterization_is_deterministic() {
        let m = crate::mesh::fixtures::cube();
        let cam = CameraModel::orbit(&m, 48, 48, 3.0, 0.8, 0.4);
        let a = rasterize_normals(&m, &cam).unwrap();
        let b = rasterize_normals(&m, &cam).unwrap();
        assert_eq!(a.face_id, b.face_id);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.normals, b.normals);
    }

    #[test]
    fn in_plane_translation_has_no_normal_gradient() {
        let m = triangle([[-2., -2., 1.], [-2., 2., 1.], [2., 0., 1.]]);
        let cam = axis_camera(32);
        let r = rasterize_normals(&m, &cam).unwrap();
        // loss = Σ |n - t| with t tilted; adjoint = sign(n - t)
        let adj: Vec<(usize, Vec3)> = r.covered().map(|p| (p, Vec3::new(-1.0, 1.0, 1.0))).collect();
        let g = normals_backward(&m, &cam, &r, &adj).unwrap();
        // gradient restricted to in-plane directions must vanish
        let in_plane: f64 = g.iter().map(|v| v.x.abs() + v.y.abs()).sum();
        assert!(in_plane / adj.len() as f64 <= 1e-6);
        let total = g[0] + g[1] + g[2];
        assert!(total.x.abs() < 1e-6 && total.y.abs() < 1e-6);
    }

    #[test]
    fn frozen_face_touches_only_its_vertices() {
        let m = crate::mesh::fixtures::grid(6);
        let mut m = m.clone();
        for v in &mut m.vertices {
            v.z = 2.0 + 0.1 * (3.0 * v.x).sin() * v.y;
        }
        let cam = CameraModel::frontal(&m, 64, 64, 3.0, 0.9);
        let r = rasterize_normals(&m, &cam).unwrap();
        let pix = r.covered().nth(r.coverage_count() / 2).unwrap();
        let f = m.faces()[r.face_id[pix] as usize];
        let g = normals_backward(&m, &cam, &r, &[(pix, Vec3::new(0.3, -0.2, 0.5))]).unwrap();
        // the pixel depends on its face corners and, through vertex normals,
        // on their one-ring; nothing else may move
        let mut ring = vec![false; m.vertex_count()];
        for face in m.faces() {
            if face.iter().any(|v| f.contains(v)) {
                for &v in face {
                    ring[v] = true;
                }
            }
        }
        for (v, gv) in g.iter().enumerate() {
            if !ring[v] {
                assert_eq!(*gv, Vec3::zeros());
            }
        }
    }

    fn fd_check_mesh(m: &TriMesh, cam: &CameraModel, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = rasterize_normals(m, cam).unwrap();
        let target: Vec<Vec3> = r
            .covered()
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..0.0)))
            .collect();
        let pixels: Vec<usize> = r.covered().collect();
        // smooth loss: Σ (n - t)² / 2 keeps the check free of kinks
        let loss = |mm: &TriMesh| -> f64 {
            let s = shade_fixed(mm, cam, &r).unwrap();
            pixels
                .iter()
                .zip(&target)
                .map(|(&p, t)| {
                    let n = s.normals.at(p);
                    0.5 * ((n[0] - t.x).powi(2) + (n[1] - t.y).powi(2) + (n[2] - t.z).powi(2))
                })
                .sum()
        };
        let adj: Vec<(usize, Vec3)> = pixels
            .iter()
            .zip(&target)
            .map(|(&p, t)| {
                let n = r.normals.at(p);
                (p, Vec3::new(n[0] - t.x, n[1] - t.y, n[2] - t.z))
            })
            .collect();
        let g = normals_backward(m, cam, &r, &adj).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        let mut good = 0;
        for v in 0..m.vertex_count() {
            for k in 0..3 {
                let mut a = m.clone();
                a.vertices[v][k] += h;
                let mut b = m.clone();
                b.vertices[v][k] -= h;
                let fd = (loss(&a) - loss(&b)) / (2.0 * h);
                let an = g[v][k];
                if an.abs() < 1e-8 && fd.abs() < 1e-8 {
                    continue;
                }
                checked += 1;
                if (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) {
                    good += 1;
                }
            }
        }
        assert!(checked > 0);
        assert!(good as f64 >= 0.95 * checked as f64, "{good}/{checked}");
    }

    #[test]
    fn normal_gradient_matches_finite_differences() {
        let mut m = crate::mesh::fixtures::grid(5);
        for (i, v) in m.vertices.iter_mut().enumerate() {
            v.z = 0.15 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
        }
        let cam = CameraModel::frontal(&m, 40, 40, 2.5, 0.9);
        fd_check_mesh(&m, &cam, 3);
        let cam = CameraModel::orbit(&m, 40, 40, 2.5, 0.9, 0.5);
        fd_check_mesh(&m, &cam, 4);
    }

    #[test]
    fn texture_render_of_constant_is_constant() {
        let mut m = crate::mesh::fixtures::grid(4);
        m.uv = Some(m.vertices.iter().map(|v| Vec2::new(v.x, v.y)).collect());
        let cam = CameraModel::frontal(&m, 32, 32, 2.0, 0.8);
        let tex = ImageBuffer::filled(16, 16, 3, 0.25);
        let (img, mask) = render_texture(&m, &cam, &tex).unwrap();
        assert!(mask.iter().any(|&x| x));
        for (p, &c) in mask.iter().enumerate() {
            if c {
                assert!(img.at(p).iter().all(|&x| (x - 0.25).abs() < 1e-12));
            }
        }
    }
}
