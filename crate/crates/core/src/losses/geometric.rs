use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::{
    angle_between, angle_between_backward, face_cross, face_cross_backward,
    normalize_backward, sign, Vec3,
};
use crate::mesh::{corner_angles, EdgeAdjacency, TriMesh, DEGENERATE_EPS};

/// Number of entries kept by a top-`k` selection over `n` values.
pub fn top_count(k: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    // tolerate k·n landing a hair above an integer
    (((k * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// Indices of the `⌈k·n⌉` largest values, ties broken by lower index.
pub fn select_top(values: &[f64], k: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(top_count(k, values.len()));
    idx
}

/// Face-normal lengths and unit normals of a mesh under
/// optimization.
struct FaceFrames {
    len: Vec<f64>,
    unit: Vec<Vec3>,
}

impl FaceFrames {
    fn new(mesh: &TriMesh) -> Result<Self> {
        let mut len = Vec::with_capacity(mesh.face_count());
        let mut unit = Vec::with_capacity(mesh.face_count());
        for fi in 0..mesh.face_count() {
            let [a, b, c] = mesh.corners(fi);
            let n = face_cross(&a, &b, &c);
            let l = n.norm();
            if !(l >= DEGENERATE_EPS) {
                return Err(Error::Numerical(format!("face {fi} degenerated during deformation")));
            }
            len.push(l);
            unit.push(n / l);
        }
        Ok(FaceFrames { len, unit })
    }

    /// Pushes unit-normal adjoints back to vertex positions.
    fn backward(&self, mesh: &TriMesh, g_unit: &[Vec3], grad: &mut [Vec3]) {
        for (fi, f) in mesh.faces().iter().enumerate() {
            let g = g_unit[fi];
            if g == Vec3::zeros() {
                continue;
            }
            let g_cross = normalize_backward(&self.unit[fi], self.len[fi], &g);
            let [a, b, c] = mesh.corners(fi);
            let gp = face_cross_backward(&a, &b, &c, &g_cross);
            for k in 0..3 {
                grad[f[k]] += gp[k];
            }
        }
    }
}

fn check_pair(source: &TriMesh, target: &TriMesh) -> Result<()> {
    if !source.same_connectivity(target) {
        return Err(Error::dim("source and target meshes differ in connectivity"));
    }
    Ok(())
}

/// Per-vertex curvature: dihedral angles of incident interior edges,
/// averaged with the adjacency's normalized weights.
pub fn evgcc_curvature(mesh: &TriMesh, adj: &EdgeAdjacency) -> Result<Vec<f64>> {
    let frames = FaceFrames::new(mesh)?;
    let theta: Vec<f64> = adj
        .interior
        .iter()
        .map(|e| angle_between(&frames.unit[e.faces[0]], &frames.unit[e.faces[1]]))
        .collect();
    Ok(adj
        .vertex_edges
        .iter()
        .map(|list| list.iter().map(|&(e, w)| w * theta[e]).sum())
        .collect())
}

/// Mean `|c_source − c_target|`, gradient with respect to the source.
pub fn evgcc_loss(source: &TriMesh, target: &TriMesh, adj: &EdgeAdjacency) -> Result<(f64, Vec<Vec3>)> {
    check_pair(source, target)?;
    evgcc_loss_to(source, &evgcc_curvature(target, adj)?, adj)
}

pub fn evgcc_loss_to(source: &TriMesh, target_c: &[f64], adj: &EdgeAdjacency) -> Result<(f64, Vec<Vec3>)> {
    let n = source.vertex_count();
    if target_c.len() != n || adj.vertex_edges.len() != n {
        return Err(Error::dim("curvature reference does not match the mesh"));
    }
    let frames = FaceFrames::new(source)?;
    let theta: Vec<f64> = adj
        .interior
        .iter()
        .map(|e| angle_between(&frames.unit[e.faces[0]], &frames.unit[e.faces[1]]))
        .collect();
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut g_theta = vec![0.0; adj.interior.len()];
    for (v, list) in adj.vertex_edges.iter().enumerate() {
        let c: f64 = list.iter().map(|&(e, w)| w * theta[e]).sum();
        let d = c - target_c[v];
        value += d.abs() * inv;
        let g = sign(d) * inv;
        if g != 0.0 {
            for &(e, w) in list {
                g_theta[e] += g * w;
            }
        }
    }
    let mut g_unit = vec![Vec3::zeros(); source.face_count()];
    for (e, edge) in adj.interior.iter().enumerate() {
        if g_theta[e] == 0.0 {
            continue;
        }
        let [f0, f1] = edge.faces;
        let (g0, g1) = angle_between_backward(&frames.unit[f0], &frames.unit[f1], g_theta[e]);
        g_unit[f0] += g0;
        g_unit[f1] += g1;
    }
    let mut grad = vec![Vec3::zeros(); n];
    frames.backward(source, &g_unit, &mut grad);
    Ok((value, grad))
}

/// Top-`k` mean of corner-angle deviations.
pub fn conformal_loss(source: &TriMesh, target: &TriMesh, k: f64) -> Result<(f64, Vec<Vec3>)> {
    check_pair(source, target)?;
    let angles = crate::mesh::interior_angles(target)?;
    conformal_loss_to(source, &angles, k)
}

pub fn conformal_loss_to(source: &TriMesh, target_angles: &[[f64; 3]], k: f64) -> Result<(f64, Vec<Vec3>)> {
    if target_angles.len() != source.face_count() {
        return Err(Error::dim("angle reference does not match the mesh"));
    }
    let mut diff = Vec::with_capacity(3 * source.face_count());
    for fi in 0..source.face_count() {
        let p = source.corners(fi);
        if face_cross(&p[0], &p[1], &p[2]).norm() < DEGENERATE_EPS {
            return Err(Error::Numerical(format!("face {fi} degenerated during deformation")));
        }
        let a = corner_angles(&p);
        for c in 0..3 {
            diff.push(a[c] - target_angles[fi][c]);
        }
    }
    let abs: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    let top = select_top(&abs, k);
    let inv = 1.0 / top.len() as f64;
    let mut grad = vec![Vec3::zeros(); source.vertex_count()];
    let mut value = 0.0;
    for &i in &top {
        value += abs[i] * inv;
        let g = sign(diff[i]) * inv;
        if g == 0.0 {
            continue;
        }
        let (fi, c) = (i / 3, i % 3);
        let f = source.faces()[fi];
        let p = source.corners(fi);
        let (i1, i2) = ((c + 1) % 3, (c + 2) % 3);
        let (ga, gb) = angle_between_backward(&(p[i1] - p[c]), &(p[i2] - p[c]), g);
        grad[f[i1]] += ga;
        grad[f[i2]] += gb;
        grad[f[c]] -= ga + gb;
    }
    Ok((value, grad))
}

/// Top-`k` mean of unit face-normal distances.
pub fn flip_loss(source: &TriMesh, target: &TriMesh, k: f64) -> Result<(f64, Vec<Vec3>)> {
    check_pair(source, target)?;
    let normals = crate::mesh::face_normals(target)?;
    flip_loss_to(source, &normals, k)
}

pub fn flip_loss_to(source: &TriMesh, target_normals: &[Vec3], k: f64) -> Result<(f64, Vec<Vec3>)> {
    if target_normals.len() != source.face_count() {
        return Err(Error::dim("normal reference does not match the mesh"));
    }
    let frames = FaceFrames::new(source)?;
    let dist: Vec<f64> = frames
        .unit
        .iter()
        .zip(target_normals)
        .map(|(a, b)| (a - b).norm())
        .collect();
    let top = select_top(&dist, k);
    let inv = 1.0 / top.len() as f64;
    let mut value = 0.0;
    let mut g_unit = vec![Vec3::zeros(); source.face_count()];
    for &f in &top {
        value += dist[f] * inv;
        if dist[f] > 0.0 {
            g_unit[f] = (frames.unit[f] - target_normals[f]) * (inv / dist[f]);
        }
    }
    let mut grad = vec![Vec3::zeros(); source.vertex_count()];
    frames.backward(source, &g_unit, &mut grad);
    Ok((value, grad))
}

fn curve_points(mesh: &TriMesh, curve: &[usize]) -> Result<Vec<Vec3>> {
    if curve.len() < 4 {
        return Err(Error::invalid(format!("curve has {} vertices; at least 4 needed", curve.len())));
    }
    curve
        .iter()
        .map(|&v| {
            mesh.vertices
                .get(v)
                .copied()
                .ok_or_else(|| Error::invalid(format!("curve vertex {v} out of range")))
        })
        .collect()
}

struct CurveEdges {
    unit: Vec<Vec3>,
    len: Vec<f64>,
    dir: Vec<Vec3>,
}

fn curve_edges(p: &[Vec3]) -> Result<CurveEdges> {
    let mut unit = Vec::with_capacity(p.len() - 1);
    let mut len = Vec::with_capacity(p.len() - 1);
    for j in 0..p.len() - 1 {
        let e = p[j + 1] - p[j];
        let l = e.norm();
        if !(l > 1e-12) {
            return Err(Error::Numerical(format!("curve points {j} and {} coincide", j + 1)));
        }
        unit.push(e / l);
        len.push(l);
    }
    let dir = (0..unit.len() - 1).map(|i| (unit[i] + unit[i + 1]) * 0.5).collect();
    Ok(CurveEdges { unit, len, dir })
}

/// Turning angle between consecutive averaged directions, divided by the
/// length of the edge that starts the pair.
pub fn curve_flow_features(mesh: &TriMesh, curve: &[usize]) -> Result<Vec<f64>> {
    let p = curve_points(mesh, curve)?;
    let e = curve_edges(&p)?;
    Ok((0..e.dir.len() - 1)
        .map(|i| angle_between(&e.dir[i], &e.dir[i + 1]) / e.len[i])
        .collect())
}

/// Features of every named curve, in name order.
pub fn curve_features_all(mesh: &TriMesh, curves: &BTreeMap<String, Vec<usize>>) -> Result<Vec<Vec<f64>>> {
    curves.values().map(|c| curve_flow_features(mesh, c)).collect()
}

/// Mean `|f_source − f_target|` over the features of all curves.
pub fn curve_flow_loss(
    source: &TriMesh,
    target: &TriMesh,
    curves: &BTreeMap<String, Vec<usize>>,
) -> Result<(f64, Vec<Vec3>)> {
    check_pair(source, target)?;
    curve_flow_loss_to(source, &curve_features_all(target, curves)?, curves)
}

pub fn curve_flow_loss_to(
    source: &TriMesh,
    target_features: &[Vec<f64>],
    curves: &BTreeMap<String, Vec<usize>>,
) -> Result<(f64, Vec<Vec3>)> {
    let mut grad = vec![Vec3::zeros(); source.vertex_count()];
    if curves.len() != target_features.len() {
        return Err(Error::dim("curve reference does not match the curve set"));
    }
    let total: usize = curves.values().map(|c| c.len().saturating_sub(3)).sum();
    if total == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / total as f64;
    let mut value = 0.0;
    for (curve, target) in curves.values().zip(target_features) {
        let p = curve_points(source, curve)?;
        let e = curve_edges(&p)?;
        if target.len() != e.dir.len() - 1 {
            return Err(Error::dim("curve reference length mismatch"));
        }
        let mut g_unit = vec![Vec3::zeros(); e.unit.len()];
        let mut g_p = vec![Vec3::zeros(); p.len()];
        for i in 0..e.dir.len() - 1 {
            let theta = angle_between(&e.dir[i], &e.dir[i + 1]);
            let f = theta / e.len[i];
            let d = f - target[i];
            value += d.abs() * inv;
            let g_f = sign(d) * inv;
            if g_f == 0.0 {
                continue;
            }
            let (gd0, gd1) = angle_between_backward(&e.dir[i], &e.dir[i + 1], g_f / e.len[i]);
            g_unit[i] += gd0 * 0.5;
            g_unit[i + 1] += (gd0 + gd1) * 0.5;
            g_unit[i + 2] += gd1 * 0.5;
            let g_len = -g_f * theta / (e.len[i] * e.len[i]);
            g_p[i + 1] += e.unit[i] * g_len;
            g_p[i] -= e.unit[i] * g_len;
        }
        for j in 0..e.unit.len() {
            if g_unit[j] == Vec3::zeros() {
                continue;
            }
            let g_raw = normalize_backward(&e.unit[j], e.len[j], &g_unit[j]);
            g_p[j + 1] += g_raw;
            g_p[j] -= g_raw;
        }
        for (k, &v) in curve.iter().enumerate() {
            grad[v] += g_p[k];
        }
    }
    Ok((value, grad))
}

/// Mean Euclidean displacement from the reference mesh.
pub fn displacement_loss(current: &TriMesh, reference: &TriMesh) -> Result<(f64, Vec<Vec3>)> {
    if current.vertex_count() != reference.vertex_count() {
        return Err(Error::dim(format!(
            "{} vertices vs reference {}",
            current.vertex_count(),
            reference.vertex_count()
        )));
    }
    let n = current.vertex_count();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let grad = current
        .vertices
        .iter()
        .zip(&reference.vertices)
        .map(|(a, b)| {
            let d = a - b;
            let l = d.norm();
            value += l * inv;
            if l > 0.0 {
                d * (inv / l)
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::{cube, grid};

    fn lifted_grid(lift: f64) -> TriMesh {
        let mut m = grid(4);
        let c = 2 * 5 + 2;
        m.vertices[c].z = lift;
        m
    }

    #[test]
    fn top_count_handles_float_products() {
        assert_eq!(top_count(0.1, 30), 3);
        assert_eq!(top_count(0.1, 31), 4);
        assert_eq!(top_count(0.1, 5), 1);
        assert_eq!(top_count(1.0, 7), 7);
    }

    #[test]
    fn select_top_breaks_ties_by_index() {
        assert_eq!(select_top(&[1.0, 3.0, 3.0, 0.5], 0.5), vec![1, 2]);
        assert_eq!(select_top(&[2.0, 2.0, 2.0, 2.0], 0.25), vec![0]);
    }

    #[test]
    fn flat_grid_has_zero_curvature() {
        let m = grid(4);
        let adj = EdgeAdjacency::build(&m).unwrap();
        for c in evgcc_curvature(&m, &adj).unwrap() {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn evgcc_decreases_with_lift() {
        let base = grid(4);
        let adj = EdgeAdjacency::build(&base).unwrap();
        let vals: Vec<f64> = [0.1, 0.05, 0.01]
            .iter()
            .map(|&l| evgcc_loss(&base, &lifted_grid(l), &adj).unwrap().0)
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2] && vals[2] > 0.0);
        assert_eq!(evgcc_loss(&base, &base, &adj).unwrap().0, 0.0);
    }

    #[test]
    fn single_corner_conformal() {
        let m = grid(2);
        let (v, _) = conformal_loss(&m, &m, 1.0).unwrap();
        assert_eq!(v, 0.0);
        let mut angles = crate::mesh::interior_angles(&m).unwrap();
        angles[3][1] += 0.2;
        let (v, _) = conformal_loss_to(&m, &angles, 1.0).unwrap();
        assert!((v - 0.2 / (3.0 * m.face_count() as f64)).abs() < 1e-12);
    }

    #[test]
    fn flipped_face_contributes_two() {
        let m = cube();
        let mut normals = crate::mesh::face_normals(&m).unwrap();
        normals[5] = -normals[5];
        let (v, _) = flip_loss_to(&m, &normals, 1.0 / 12.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circle_features_are_constant() {
        let n = 12;
        let delta = 2.0 * std::f64::consts::PI / 24.0;
        let verts: Vec<Vec3> = (0..n).map(|i| Vec3::new((i as f64 * delta).cos(), (i as f64 * delta).sin(), 0.0)).collect();
        // a fan just to carry the vertices
        let mut all = verts.clone();
        all.push(Vec3::new(0.0, 0.0, 0.0));
        let faces: Vec<[usize; 3]> = (0..n - 1).map(|i| [n, i, i + 1]).collect();
        let m = TriMesh::new(all, faces, None).unwrap();
        let curve: Vec<usize> = (0..n).collect();
        let f = curve_flow_features(&m, &curve).unwrap();
        let expect = delta / (2.0 * (delta / 2.0).sin());
        for x in &f {
            assert!((x - expect).abs() < 1e-9, "{x} vs {expect}");
        }
        let half = m.with_vertices(m.vertices.iter().map(|v| v * 0.5).collect());
        for (a, b) in curve_flow_features(&half, &curve).unwrap().iter().zip(&f) {
            assert!((a - 2.0 * b).abs() < 1e-9);
        }
    }

    #[test]
    fn displacement_examples() {
        let m = grid(3);
        let mut a = m.clone();
        a.vertices[4].z += 0.3;
        assert!((displacement_loss(&a, &m).unwrap().0 - 0.3 / 16.0).abs() < 1e-15);
        let t = Vec3::new(0.1, -0.2, 0.05);
        let b = m.with_vertices(m.vertices.iter().map(|v| v + t).collect());
        assert!((displacement_loss(&b, &m).unwrap().0 - t.norm()).abs() < 1e-12);
    }
}
