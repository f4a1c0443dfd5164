use std::collections::HashMap;

use super::TriMesh;
use crate::geom::Vec3;

/// (n+1)×(n+1) vertex grid in the z=0 plane spanning [0,1]², normals +z.
pub fn grid(n: usize) -> TriMesh {
    let n = n.max(1);
    let mut v = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            v.push(Vec3::new(i as f64 / n as f64, j as f64 / n as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut f = Vec::new();
    for j in 0..n {
        for i in 0..n {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(v, f, None).expect("grid is a valid mesh")
}

/// Unit sphere from a subdivided icosahedron, outward CCW faces.
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(4 * f.len());
        for [a, b, c] in f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    TriMesh::new(v, f, None).expect("icosphere is a valid mesh")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::face_normals;

    #[test]
    fn icosphere_counts_and_orientation() {
        for s in 0..4 {
            let m = icosphere(s);
            assert_eq!(m.face_count(), 20 * 4usize.pow(s as u32));
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s as u32) + 2);
            assert!(m.edges().iter().all(|e| e.face_count == 2));
            assert!(m.vertices.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
            for (fi, n) in face_normals(&m).unwrap().iter().enumerate() {
                let [a, b, c] = m.corners(fi);
                assert!(n.dot(&((a + b + c) / 3.0)) > 0.0);
            }
        }
    }
}
