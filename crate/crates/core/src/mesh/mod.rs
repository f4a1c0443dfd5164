//! Indexed triangle meshes, edge adjacency and the per-element geometry
//! (normals, dihedral angles, corner angles) every loss is built from.

mod obj;
mod sample;
mod shapes;

use std::collections::HashMap;
use std::sync::Arc;

pub use obj::{load_obj, parse_obj, to_obj_string, write_obj};
pub use sample::{resample_surface, sample_surface, SurfaceSample};
pub use shapes::{grid, icosphere};

use crate::error::{Error, Result};
use crate::geom::{angle_between, face_cross, Vec2, Vec3};

/// Faces whose cross-product norm falls below this are degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// An undirected edge and the faces that contain it.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub verts: [usize; 2],
    pub faces: [usize; 2],
    pub face_count: u8,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.face_count == 2
    }
}

/// Connectivity shared by every posed copy of a mesh.
#[derive(Debug)]
pub struct Topology {
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    face_edges: Vec<[usize; 3]>,
    vertex_count: usize,
}

/// Indexed triangle surface.
///
/// Connectivity is immutable and shared between copies; positions and UVs
/// are owned. A deformed instance is produced with [`TriMesh::with_vertices`].
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub uv: Option<Vec<Vec2>>,
    topo: Arc<Topology>,
}

impl TriMesh {
    /// Builds a mesh and its edge table. Fails on out-of-range indices,
    /// repeated corners and edges with more than two incident faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, uv: Option<Vec<Vec2>>) -> Result<Self> {
        let n = vertices.len();
        if let Some(uv) = &uv {
            if uv.len() != n {
                return Err(Error::dim(format!("{} uv entries for {} vertices", uv.len(), n)));
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::invalid(format!(
                        "face {fi}: out-of-range index {v} (have {n} vertices)"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {fi} repeats a vertex")));
            }
        }
        let (edges, face_edges) = build_edges(&faces)?;
        Ok(TriMesh {
            vertices,
            uv,
            topo: Arc::new(Topology {
                faces,
                edges,
                face_edges,
                vertex_count: n,
            }),
        })
    }

    /// Same connectivity and UVs, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> TriMesh {
        assert_eq!(vertices.len(), self.topo.vertex_count, "vertex count changed");
        TriMesh {
            vertices,
            uv: self.uv.clone(),
            topo: Arc::clone(&self.topo),
        }
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.topo.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.topo.edges
    }

    /// Edge ids of each face, opposite to corners 0, 1, 2 respectively.
    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.topo.face_edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.topo.faces.len()
    }

    /// True when both meshes index the same faces in the same order.
    pub fn same_connectivity(&self, other: &TriMesh) -> bool {
        Arc::ptr_eq(&self.topo, &other.topo)
            || (self.vertex_count() == other.vertex_count() && self.faces() == other.faces())
    }

    pub(crate) fn check_same_connectivity(&self, other: &TriMesh) -> Result<()> {
        if self.same_connectivity(other) {
            Ok(())
        } else {
            Err(Error::dim("connectivity mismatch between meshes"))
        }
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let f = self.topo.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * face_cross(&a, &b, &c).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Uniformly rescales about the bounding-box center so the diagonal is 1.
    pub fn normalize_unit_diagonal(&mut self) -> Result<()> {
        let (lo, hi) = self.bbox();
        let diag = (hi - lo).norm();
        if !(diag > 0.0) {
            return Err(Error::invalid("cannot normalize a mesh with empty extent"));
        }
        let center = (lo + hi) * 0.5;
        for v in &mut self.vertices {
            *v = center + (*v - center) / diag;
        }
        Ok(())
    }

    /// Fails if any face is degenerate in the current embedding.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for fi in 0..self.face_count() {
            let [a, b, c] = self.corners(fi);
            if face_cross(&a, &b, &c).norm() < DEGENERATE_EPS {
                return Err(Error::DegenerateFace { face: fi });
            }
        }
        Ok(())
    }
}

fn build_edges(faces: &[[usize; 3]]) -> Result<(Vec<Edge>, Vec<[usize; 3]>)> {
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
    let mut edges: Vec<Edge> = Vec::with_capacity(faces.len() * 3 / 2 + 3);
    let mut face_edges = Vec::with_capacity(faces.len());
    for (fi, f) in faces.iter().enumerate() {
        let mut fe = [0usize; 3];
        for k in 0..3 {
            let a = f[(k + 1) % 3];
            let b = f[(k + 2) % 3];
            let key = (a.min(b), a.max(b));
            let id = match lookup.get(&key) {
                Some(&id) => {
                    let e = &mut edges[id];
                    if e.face_count >= 2 {
                        return Err(Error::NonManifold {
                            a: key.0,
                            b: key.1,
                            face: fi,
                        });
                    }
                    e.faces[1] = fi;
                    e.face_count = 2;
                    id
                }
                None => {
                    let id = edges.len();
                    edges.push(Edge {
                        verts: [key.0, key.1],
                        faces: [fi, usize::MAX],
                        face_count: 1,
                    });
                    lookup.insert(key, id);
                    id
                }
            };
            fe[k] = id;
        }
        face_edges.push(fe);
    }
    Ok((edges, face_edges))
}

/// Per-interior-edge importance and per-vertex normalized edge weights used
/// to spread dihedral angles onto vertices.
#[derive(Debug, Clone)]
pub struct EdgeAdjacency {
    /// Interior edges: `(edge id, face pair, endpoints, importance)`.
    pub interior: Vec<InteriorEdge>,
    /// For each vertex, `(index into interior, normalized weight)`.
    pub vertex_edges: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub edge: usize,
    pub faces: [usize; 2],
    pub verts: [usize; 2],
    pub importance: f64,
}

impl EdgeAdjacency {
    /// Importance of each interior edge is its length on `reference`
    /// (normally the neutral template). Boundary edges are skipped.
    pub fn build(reference: &TriMesh) -> Result<Self> {
        let mut interior = Vec::new();
        let mut vertex_edges = vec![Vec::new(); reference.vertex_count()];
        for (id, e) in reference.edges().iter().enumerate() {
            if !e.is_interior() {
                continue;
            }
            let len = (reference.vertices[e.verts[0]] - reference.vertices[e.verts[1]]).norm();
            if !(len > 0.0) {
                return Err(Error::invalid(format!("edge {id} has zero length")));
            }
            let k = interior.len();
            interior.push(InteriorEdge {
                edge: id,
                faces: e.faces,
                verts: e.verts,
                importance: len,
            });
            vertex_edges[e.verts[0]].push((k, len));
            vertex_edges[e.verts[1]].push((k, len));
        }
        for list in &mut vertex_edges {
            let total: f64 = list.iter().map(|(_, w)| w).sum();
            for (_, w) in list.iter_mut() {
                *w /= total;
            }
        }
        Ok(EdgeAdjacency {
            interior,
            vertex_edges,
        })
    }
}

/// Unit face normals from CCW corner order.
pub fn face_normals(mesh: &TriMesh) -> Result<Vec<Vec3>> {
    (0..mesh.face_count())
        .map(|fi| {
            let [a, b, c] = mesh.corners(fi);
            let n = face_cross(&a, &b, &c);
            let len = n.norm();
            if len < DEGENERATE_EPS {
                Err(Error::DegenerateFace { face: fi })
            } else {
                Ok(n / len)
            }
        })
        .collect()
}

/// Area-weighted vertex normals. Isolated vertices get a zero vector.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let [a, b, c] = mesh.corners(fi);
        let n = face_cross(&a, &b, &c);
        for &v in f {
            acc[v] += n;
        }
    }
    for n in &mut acc {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    acc
}

/// Angle between the normals of the two faces on each interior edge, as
/// `(edge id, angle)`. Boundary edges are omitted.
pub fn dihedral_angles(mesh: &TriMesh) -> Result<Vec<(usize, f64)>> {
    let normals = face_normals(mesh)?;
    Ok(mesh
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_interior())
        .map(|(id, e)| (id, angle_between(&normals[e.faces[0]], &normals[e.faces[1]])))
        .collect())
}

/// The three corner angles of every face.
pub fn interior_angles(mesh: &TriMesh) -> Result<Vec<[f64; 3]>> {
    (0..mesh.face_count())
        .map(|fi| {
            let p = mesh.corners(fi);
            if face_cross(&p[0], &p[1], &p[2]).norm() < DEGENERATE_EPS {
                return Err(Error::DegenerateFace { face: fi });
            }
            Ok(corner_angles(&p))
        })
        .collect()
}

pub(crate) fn corner_angles(p: &[Vec3; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        out[k] = angle_between(&a, &b);
    }
    out
}


#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::fixtures::*;
    use super::*;

    #[test]
    fn tetrahedron_edges_all_interior() {
        let m = tetrahedron();
        assert_eq!(m.face_count(), 4);
        assert_eq!(m.edges().len(), 6);
        assert!(m.edges().iter().all(|e| e.face_count == 2));
    }

    #[test]
    fn third_face_on_edge_is_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let err = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]], None).unwrap_err();
        assert!(matches!(err, Error::NonManifold { a: 0, b: 1, .. }));
    }

    #[test]
    fn face_edge_table_is_symmetric() {
        let m = cube();
        for (fi, fe) in m.face_edges().iter().enumerate() {
            for &e in fe {
                let edge = &m.edges()[e];
                assert!(edge.faces[..edge.face_count as usize].contains(&fi));
            }
        }
        for (ei, e) in m.edges().iter().enumerate() {
            for &f in &e.faces[..e.face_count as usize] {
                assert!(m.face_edges()[f].contains(&ei));
            }
        }
    }

    #[test]
    fn face_normal_examples() {
        let n = face_normals(&triangle([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]])).unwrap();
        assert!((n[0] - Vec3::new(0., 0., 1.)).norm() < 1e-12);
        let n = face_normals(&triangle([[0., 1., 0.], [1., 0., 0.], [0., 0., 0.]])).unwrap();
        assert!((n[0] - Vec3::new(0., 0., -1.)).norm() < 1e-12);
        let n = face_normals(&triangle([[0., 0., 0.], [1., 0., 0.], [0., 0., 1.]])).unwrap();
        assert!((n[0] - Vec3::new(0., -1., 0.)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_face_is_named() {
        let m = triangle([[0., 0., 0.], [1., 0., 0.], [2., 0., 0.]]);
        assert!(matches!(face_normals(&m), Err(Error::DegenerateFace { face: 0 })));
        assert!(matches!(interior_angles(&m), Err(Error::DegenerateFace { face: 0 })));
    }

    #[test]
    fn dihedral_flat_cube_tetra() {
        for (_, a) in dihedral_angles(&grid(2)).unwrap() {
            assert!(a.abs() < 1e-9);
        }
        let cube = cube();
        let angles = dihedral_angles(&cube).unwrap();
        assert_eq!(angles.len(), 18);
        let right: Vec<_> = angles.iter().filter(|(_, a)| (a - PI / 2.0).abs() < 1e-9).collect();
        let flat: Vec<_> = angles.iter().filter(|(_, a)| a.abs() < 1e-9).collect();
        assert_eq!(right.len(), 12);
        assert_eq!(flat.len(), 6);
        // outward normals of a regular tetrahedron meet at arccos(-1/3)
        for (_, a) in dihedral_angles(&tetrahedron()).unwrap() {
            assert!((a - (-1.0f64 / 3.0).acos()).abs() < 1e-9);
        }
    }

    #[test]
    fn interior_angle_examples() {
        let s3 = 3f64.sqrt() / 2.0;
        let eq = interior_angles(&triangle([[0., 0., 0.], [1., 0., 0.], [0.5, s3, 0.]])).unwrap();
        for a in eq[0] {
            assert!((a - PI / 3.0).abs() < 1e-12);
        }
        let ri = interior_angles(&triangle([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]])).unwrap();
        assert!((ri[0][0] - PI / 2.0).abs() < 1e-12);
        assert!((ri[0][1] - PI / 4.0).abs() < 1e-12);
        assert!((ri[0][2] - PI / 4.0).abs() < 1e-12);
        // legs 4 (x) and 3 (y): angle at (4,0) faces the side of length 3
        let t = interior_angles(&triangle([[0., 0., 0.], [4., 0., 0.], [0., 3., 0.]])).unwrap();
        assert!((t[0][0] - PI / 2.0).abs() < 1e-12);
        assert!((t[0][1] - (3.0f64 / 4.0).atan()).abs() < 1e-12);
        assert!((t[0][2] - (4.0f64 / 3.0).atan()).abs() < 1e-12);
        assert!((t[0].iter().sum::<f64>() - PI).abs() < 1e-7);
    }

    #[test]
    fn adjacency_weights_normalize() {
        let cube = cube();
        let adj = EdgeAdjacency::build(&cube).unwrap();
        for list in &adj.vertex_edges {
            let s: f64 = list.iter().map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(adj.interior.iter().all(|e| e.importance > 0.0));
        // boundary edges are excluded
        let g = grid(2);
        let adj = EdgeAdjacency::build(&g).unwrap();
        let boundary = g.edges().iter().filter(|e| !e.is_interior()).count();
        assert_eq!(adj.interior.len() + boundary, g.edges().len());
    }
}
