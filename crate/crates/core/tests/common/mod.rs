#![allow(dead_code)]

use rigfit::geom::Vec3;
use rigfit::losses::evgcc_curvature;
use rigfit::mesh::{interior_angles, TriMesh};
use rigfit::render::{render_texture, CameraModel, ImageBuffer};
use rigfit::rig::{synthetic_head, HeadOptions, RiggedTemplate};
use rigfit::texture::{erode_mask, extract_appearance, uv_coverage, AppearanceOptions, BlendMasks, UvTexture};

pub const IMAGE_SIZE: u32 = 512;
pub const UV_SIZE: usize = 256;

pub fn head() -> (RiggedTemplate, CameraModel) {
    synthetic_head(&HeadOptions::default(), IMAGE_SIZE).unwrap()
}

pub fn small_head() -> (RiggedTemplate, CameraModel) {
    synthetic_head(&HeadOptions { columns: 41, rows: 29 }, 128).unwrap()
}

/// Unit cube, two triangles per side, outward CCW. Corner 0 carries
/// three face diagonals.
pub fn cube() -> TriMesh {
    let v = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let f = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(v, f, None).unwrap()
}

/// Smooth RGB texture over the UV square.
pub fn procedural_texture(size: usize) -> ImageBuffer {
    let mut tex = ImageBuffer::new(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64;
            let v = 1.0 - (y as f64 + 0.5) / size as f64;
            let p = tex.pixel_mut(x, y);
            p[0] = 0.6 + 0.2 * (3.0 * u).sin() * (2.0 * v).cos();
            p[1] = 0.45 + 0.1 * u;
            p[2] = 0.35 + 0.1 * v;
        }
    }
    tex
}

pub struct SeamReport {
    /// Largest jump across a known/solved boundary as a fraction of the
    /// channel's range over the hard mask.
    pub worst_jump: f64,
    pub pairs: usize,
    /// Mean absolute error of solved-from-bake texels against the source.
    pub known_mae: f64,
}

/// Half-profile bake: the head is textured with a re-toned copy of the
/// template texture, rendered from `yaw`, baked back and completed against
/// the template inside the masked facial region. Boundary pairs are scored
/// three erosions inside the hard mask.
pub fn seam_scenario(tmpl: &RiggedTemplate, yaw: f64) -> SeamReport {
    let n = UV_SIZE;
    let tex = procedural_texture(n);
    let mut src = tex.clone();
    for v in &mut src.data {
        *v = 0.85 * *v + 0.08;
    }
    let cam = CameraModel::orbit(&tmpl.neutral, IMAGE_SIZE, IMAGE_SIZE, 2.0, 0.8, yaw);
    let (img, _) = render_texture(&tmpl.neutral, &cam, &src).unwrap();
    let hard = uv_coverage(&tmpl.neutral, n, n, Some(&tmpl.face_mask())).unwrap();
    let masks = BlendMasks::from_hard(hard, n, n).unwrap();
    let app = extract_appearance(
        &img,
        &tmpl.neutral,
        &cam,
        &UvTexture::full(tex),
        None,
        &masks,
        &AppearanceOptions::default(),
    )
    .unwrap();
    let out = &app.albedo.image;
    let known: Vec<bool> = (0..n * n).map(|p| masks.soft[p] && app.baked_albedo.mask[p]).collect();
    let solved: Vec<bool> = (0..n * n).map(|p| masks.hard[p] && !known[p]).collect();
    let mut range = [0.0; 3];
    for (c, r) in range.iter_mut().enumerate() {
        let vals = (0..n * n).filter(|&p| masks.hard[p]).map(|p| out.at(p)[c]);
        let (lo, hi) = vals.fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        *r = hi - lo;
    }
    let mut inner = masks.hard.clone();
    for _ in 0..3 {
        inner = erode_mask(&inner, n, n);
    }
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for p in 0..n * n {
        if !known[p] || !inner[p] {
            continue;
        }
        let (x, y) = (p % n, p / n);
        let right = (x + 1 < n).then(|| p + 1);
        let left = (x > 0).then(|| p - 1);
        let down = (y + 1 < n).then(|| p + n);
        let up = (y > 0).then(|| p - n);
        for q in [right, left, down, up].into_iter().flatten() {
            if !solved[q] || !inner[q] {
                continue;
            }
            pairs += 1;
            for (c, r) in range.iter().enumerate() {
                worst = worst.max((out.at(p)[c] - out.at(q)[c]).abs() / r);
            }
        }
    }
    let mut err = 0.0;
    let mut count = 0;
    for p in (0..n * n).filter(|&p| known[p]) {
        for c in 0..3 {
            err += (out.at(p)[c] - src.at(p)[c]).abs();
            count += 1;
        }
    }
    SeamReport {
        worst_jump: worst,
        pairs,
        known_mae: err / count as f64,
    }
}

/// Mean absolute interior-angle difference per corner.
pub fn conformal_distortion(a: &TriMesh, b: &TriMesh) -> f64 {
    let x = interior_angles(a).unwrap();
    let y = interior_angles(b).unwrap();
    let sum: f64 = x
        .iter()
        .zip(&y)
        .map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).abs()).sum::<f64>())
        .sum();
    sum / (3 * x.len()) as f64
}

/// Mean `|c_a − c_b|` of per-vertex EV-GCC curvature.
pub fn curvature_error(tmpl: &RiggedTemplate, a: &TriMesh, b: &TriMesh) -> f64 {
    let ca = evgcc_curvature(a, tmpl.adjacency()).unwrap();
    let cb = evgcc_curvature(b, tmpl.adjacency()).unwrap();
    ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).sum::<f64>() / ca.len() as f64
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
