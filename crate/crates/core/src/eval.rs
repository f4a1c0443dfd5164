//! Surface-to-surface metrics on uniformly resampled point sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{sample_surface, vertex_normals, TriMesh};

pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub nc: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Static 3-d tree over a point set.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    /// Point indices in tree order; node `i` of a subrange is its median.
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        KdTree { points, order }
    }

    /// Index of and squared distance to the nearest point. Ties go to the
    /// lower index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, axis: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.order[mid];
        let p = &self.points[i];
        let d = (p - q).norm_squared();
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
        let diff = q[axis] - p[axis];
        let next = (axis + 1) % 3;
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, near.0, near.1, next, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, next, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, (axis + 1) % 3);
    build(points, &mut right[1..], (axis + 1) % 3);
}

/// Sample positions and interpolated unit vertex normals.
fn samples(mesh: &TriMesh, n: usize, seed: u64, filter: Option<&[bool]>) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    if let Some(f) = filter {
        if f.len() != mesh.face_count() {
            return Err(Error::dim("face filter length differs from the face count"));
        }
        if !f.iter().any(|&b| b) {
            return Err(Error::invalid("masked region is empty"));
        }
    }
    let normals = vertex_normals(mesh);
    let s = sample_surface(mesh, n, seed, filter)?;
    let mut pos = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    for p in &s {
        pos.push(p.position(mesh));
        let f = mesh.faces()[p.face];
        let v = normals[f[0]] * p.bary[0] + normals[f[1]] * p.bary[1] + normals[f[2]] * p.bary[2];
        let len = v.norm();
        nrm.push(if len > 0.0 { v / len } else { v });
    }
    Ok((pos, nrm))
}

/// (mean squared nearest distance, mean normal cosine) from `a` to `b`.
fn one_way(pa: &[Vec3], na: &[Vec3], pb: &[Vec3], nb: &[Vec3]) -> (f64, f64) {
    let tree = KdTree::new(pb);
    let (mut d2, mut cos) = (0.0, 0.0);
    for (p, n) in pa.iter().zip(na) {
        let (j, d) = tree.nearest(p).expect("sample set is nonempty");
        d2 += d;
        cos += n.dot(&nb[j]);
    }
    let inv = 1.0 / pa.len() as f64;
    (d2 * inv, cos * inv)
}

/// Symmetric RMSE and normal consistency from `n` samples per mesh. Both
/// meshes are sampled with `seed`; `filter`, when given, restricts
/// sampling to the marked faces of each mesh (meshes must then share
/// connectivity).
pub fn evaluate(a: &TriMesh, b: &TriMesh, n: usize, seed: u64, filter: Option<&[bool]>) -> Result<EvalResult> {
    let (pa, na) = samples(a, n, seed, filter)?;
    let (pb, nb) = samples(b, n, seed, filter)?;
    let (ab, cab) = one_way(&pa, &na, &pb, &nb);
    let (ba, cba) = one_way(&pb, &nb, &pa, &na);
    Ok(EvalResult {
        rmse: (0.5 * (ab + ba)).sqrt(),
        nc: 0.5 * (cab + cba),
        samples: n,
        seed,
    })
}

pub fn rmse(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(evaluate(a, b, n, seed, None)?.rmse)
}

pub fn normal_consistency(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(evaluate(a, b, n, seed, None)?.nc)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mesh::{grid, icosphere};

    fn transformed(m: &TriMesh, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        m.with_vertices(m.vertices.iter().map(f).collect())
    }

    fn flipped(m: &TriMesh) -> TriMesh {
        let faces = m.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        TriMesh::new(m.vertices.clone(), faces, None).unwrap()
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..500).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            assert_eq!(tree.nearest(&q).unwrap(), brute);
        }
        // duplicates resolve to the lowest index
        let dup = vec![Vec3::zeros(); 5];
        assert_eq!(KdTree::new(&dup).nearest(&Vec3::zeros()).unwrap().0, 0);
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }

    #[test]
    fn identical_meshes() {
        let m = icosphere(2);
        let r = evaluate(&m, &m, 5000, 3, None).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!(r.nc >= 0.999);
    }

    #[test]
    fn translated_sheet() {
        // unit sheet in the yz plane, moved along its normal
        let a = transformed(&grid(20), |p| Vec3::new(0.0, p.x, p.y));
        let b = transformed(&a, |p| p + Vec3::new(0.01, 0.0, 0.0));
        let r = rmse(&a, &b, DEFAULT_SAMPLES, 1).unwrap();
        assert!((r - 0.01).abs() < 0.05 * 0.01, "{r}");
    }

    #[test]
    fn concentric_spheres() {
        let a = icosphere(4);
        let b = transformed(&a, |p| p * 1.02);
        let r = rmse(&a, &b, 20_000, 2).unwrap();
        assert!((r - 0.02).abs() < 0.1 * 0.02, "{r}");
    }

    #[test]
    fn flipped_normals_are_antipodal() {
        let m = icosphere(2);
        let nc = normal_consistency(&m, &flipped(&m), 5000, 1).unwrap();
        assert!(nc < -0.999, "{nc}");
    }

    #[test]
    fn tilted_plane() {
        let a = transformed(&grid(10), |p| p - Vec3::new(0.5, 0.5, 0.0));
        let t = 10f64.to_radians();
        let b = transformed(&a, |p| Vec3::new(p.x * t.cos(), p.y, p.x * t.sin()));
        let nc = normal_consistency(&a, &b, 20_000, 5).unwrap();
        assert!((nc - t.cos()).abs() < 0.005, "{nc}");
    }

    #[test]
    fn symmetric_and_filtered() {
        let a = icosphere(2);
        let b = transformed(&a, |p| Vec3::new(p.x * 1.1, p.y, p.z));
        assert_eq!(rmse(&a, &b, 3000, 9).unwrap(), rmse(&b, &a, 3000, 9).unwrap());
        let none = vec![false; a.face_count()];
        assert!(evaluate(&a, &b, 100, 1, Some(&none)).is_err());
        assert!(evaluate(&a, &b, 100, 1, Some(&none[1..])).is_err());
    }
}
