use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mesh::fixtures::grid;
use crate::render::CameraModel;
use crate::rig::{synthetic_head, HeadOptions};

fn bumpy_grid(n: usize, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = grid(n);
    for v in &mut m.vertices {
        v.x += rng.gen_range(-0.2..0.2) / n as f64;
        v.y += rng.gen_range(-0.2..0.2) / n as f64;
        v.z = rng.gen_range(-0.3..0.3) / n as f64;
    }
    m
}

/// Central differences of `f` at `mesh` against `grad`. Returns
/// (coordinates agreeing to 1e-3 relative, coordinates checked).
/// `selection`, when given, skips coordinates whose ±h perturbation
/// changes the selected set.
fn fd_agreement(
    mesh: &TriMesh,
    grad: &[Vec3],
    f: &dyn Fn(&TriMesh) -> f64,
    selection: Option<&dyn Fn(&TriMesh) -> Vec<usize>>,
) -> (usize, usize) {
    let h = 1e-4;
    let base_sel = selection.map(|s| s(mesh));
    let (mut good, mut checked) = (0, 0);
    for v in 0..mesh.vertex_count() {
        for k in 0..3 {
            let mut a = mesh.clone();
            a.vertices[v][k] += h;
            let mut b = mesh.clone();
            b.vertices[v][k] -= h;
            if let (Some(s), Some(base)) = (selection, &base_sel) {
                if &s(&a) != base || &s(&b) != base {
                    continue;
                }
            }
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            let an = grad[v][k];
            if fd.abs() < 1e-10 && an.abs() < 1e-10 {
                continue;
            }
            checked += 1;
            if (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) {
                good += 1;
            }
        }
    }
    (good, checked)
}

fn assert_fd(mesh: &TriMesh, grad: &[Vec3], f: &dyn Fn(&TriMesh) -> f64, selection: Option<&dyn Fn(&TriMesh) -> Vec<usize>>) {
    let (good, checked) = fd_agreement(mesh, grad, f, selection);
    assert!(checked > 10, "only {checked} coordinates checked");
    assert!(good as f64 >= 0.95 * checked as f64, "{good}/{checked} coordinates agree");
}

#[test]
fn evgcc_gradient() {
    let src = bumpy_grid(5, 1);
    let tgt = bumpy_grid(5, 2);
    let adj = EdgeAdjacency::build(&tgt).unwrap();
    let (_, g) = evgcc_loss(&src, &tgt, &adj).unwrap();
    assert_fd(&src, &g, &|m| evgcc_loss(m, &tgt, &adj).unwrap().0, None);
}

use crate::mesh::EdgeAdjacency;

#[test]
fn conformal_gradient_on_stable_selection() {
    let src = bumpy_grid(5, 3);
    let tgt = bumpy_grid(5, 4);
    for k in [1.0, 0.1] {
        let (_, g) = conformal_loss(&src, &tgt, k).unwrap();
        let ref_angles = interior_angles(&tgt).unwrap();
        let sel = |m: &TriMesh| {
            let a = interior_angles(m).unwrap();
            let d: Vec<f64> = a
                .iter()
                .zip(&ref_angles)
                .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs()))
                .collect();
            let mut s = select_top(&d, k);
            s.sort();
            s
        };
        assert_fd(&src, &g, &|m| conformal_loss(m, &tgt, k).unwrap().0, Some(&sel));
    }
}

#[test]
fn flip_gradient_on_stable_selection() {
    let src = bumpy_grid(5, 5);
    let tgt = bumpy_grid(5, 6);
    let ref_n = face_normals(&tgt).unwrap();
    for k in [1.0, 0.1] {
        let (_, g) = flip_loss(&src, &tgt, k).unwrap();
        let sel = |m: &TriMesh| {
            let d: Vec<f64> = face_normals(m).unwrap().iter().zip(&ref_n).map(|(a, b)| (a - b).norm()).collect();
            let mut s = select_top(&d, k);
            s.sort();
            s
        };
        assert_fd(&src, &g, &|m| flip_loss(m, &tgt, k).unwrap().0, Some(&sel));
    }
}

fn curves_on_grid(n: usize) -> BTreeMap<String, Vec<usize>> {
    let row = |j: usize| (0..=n).map(|i| j * (n + 1) + i).collect::<Vec<_>>();
    let diag = (0..=n).map(|i| i * (n + 1) + i).collect::<Vec<_>>();
    BTreeMap::from([("a".to_string(), row(1)), ("b".to_string(), row(3)), ("c".to_string(), diag)])
}

#[test]
fn curve_flow_gradient() {
    let src = bumpy_grid(6, 7);
    let tgt = bumpy_grid(6, 8);
    let curves = curves_on_grid(6);
    let (_, g) = curve_flow_loss(&src, &tgt, &curves).unwrap();
    assert_fd(&src, &g, &|m| curve_flow_loss(m, &tgt, &curves).unwrap().0, None);
}

#[test]
fn displacement_gradient() {
    let src = bumpy_grid(4, 9);
    let tgt = bumpy_grid(4, 10);
    let (_, g) = displacement_loss(&src, &tgt).unwrap();
    assert_fd(&src, &g, &|m| displacement_loss(m, &tgt).unwrap().0, None);
}

fn rigid(m: &TriMesh) -> TriMesh {
    let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.5, 0.9);
    let t = Vec3::new(0.2, -0.1, 0.4);
    m.with_vertices(m.vertices.iter().map(|v| r * v + t).collect())
}

#[test]
fn consistency_terms_are_rigid_invariant() {
    let a = bumpy_grid(5, 11);
    let b = bumpy_grid(5, 12);
    let (ra, rb) = (rigid(&a), rigid(&b));
    let adj = EdgeAdjacency::build(&a).unwrap();
    let curves = curves_on_grid(5);
    let pairs = [
        (evgcc_loss(&a, &b, &adj).unwrap().0, evgcc_loss(&ra, &rb, &adj).unwrap().0),
        (conformal_loss(&a, &b, 0.1).unwrap().0, conformal_loss(&ra, &rb, 0.1).unwrap().0),
        (flip_loss(&a, &b, 0.1).unwrap().0, flip_loss(&ra, &rb, 0.1).unwrap().0),
        (curve_flow_loss(&a, &b, &curves).unwrap().0, curve_flow_loss(&ra, &rb, &curves).unwrap().0),
        (displacement_loss(&a, &b).unwrap().0, displacement_loss(&ra, &rb).unwrap().0),
    ];
    for (x, y) in pairs {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
    // a against its own rigid motion
    assert!(evgcc_loss(&a, &ra, &adj).unwrap().0 < 1e-9);
    assert!(curve_flow_loss(&a, &ra, &curves).unwrap().0 < 1e-9);
    let c = evgcc_curvature(&a, &adj).unwrap();
    for (x, y) in c.iter().zip(evgcc_curvature(&ra, &adj).unwrap()) {
        assert!((x - y).abs() < 1e-9);
    }
    // conformal also ignores uniform scale
    let scaled = a.with_vertices(a.vertices.iter().map(|v| v * 2.5).collect());
    let (x, y) = (conformal_loss(&a, &b, 0.1).unwrap().0, conformal_loss(&scaled, &b, 0.1).unwrap().0);
    assert!((x - y).abs() < 1e-9);
    assert!(conformal_loss(&rigid(&scaled), &a, 1.0).unwrap().0 < 1e-9);
}

#[test]
fn top_fraction_never_lowers_conformal() {
    let a = bumpy_grid(6, 13);
    let b = bumpy_grid(6, 14);
    assert!(conformal_loss(&a, &b, 0.1).unwrap().0 >= conformal_loss(&a, &b, 1.0).unwrap().0);
}

#[test]
fn flip_rotation_is_chord_length() {
    let m = crate::mesh::fixtures::triangle([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]);
    let phi = 0.37;
    let r = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), phi);
    let rot = m.with_vertices(m.vertices.iter().map(|v| r * v).collect());
    let (v, _) = flip_loss(&rot, &m, 1.0).unwrap();
    assert!((v - 2.0 * (phi / 2.0).sin()).abs() < 1e-12);
}

#[test]
fn zigzag_loss_is_local() {
    let n = 20;
    let pts: Vec<Vec3> = (0..n).map(|i| {
        let t = i as f64 / (n - 1) as f64;
        Vec3::new(t, 0.3 * (2.0 * t).sin(), 0.0)
    }).collect();
    let mut all = pts.clone();
    all.push(Vec3::new(0.5, -1.0, 0.0));
    let faces: Vec<[usize; 3]> = (0..n - 1).map(|i| [n, i + 1, i]).collect();
    let smooth = TriMesh::new(all, faces, None).unwrap();
    let mut zig = smooth.clone();
    let k = 10;
    zig.vertices[k].y += 0.02;
    let curve: Vec<usize> = (0..n).collect();
    let fs = curve_flow_features(&smooth, &curve).unwrap();
    let fz = curve_flow_features(&zig, &curve).unwrap();
    let diffs: Vec<f64> = fs.iter().zip(&fz).map(|(a, b)| (a - b).abs()).collect();
    let total: f64 = diffs.iter().sum();
    // a displaced vertex enters two edges, hence three averaged directions
    // and the four features k-3..=k built from them
    let local: f64 = diffs[k - 3..=k].iter().sum();
    assert!(local > 0.95 * total, "{local} of {total}");
}

fn head_setup(size: u32) -> (RiggedTemplate, CameraModel) {
    synthetic_head(&HeadOptions { columns: 41, rows: 29 }, size).unwrap()
}

#[test]
fn normal_loss_tilted_plane() {
    let alpha: f64 = 0.1;
    // plane through z=2 tilted about the camera y axis
    let (s, c) = alpha.sin_cos();
    let corners = [[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0], [-3.0, 3.0]];
    let verts: Vec<Vec3> = corners.iter().map(|p| Vec3::new(p[0] * c, p[1], 2.0 + p[0] * s)).collect();
    let m = TriMesh::new(verts, vec![[0, 2, 1], [0, 3, 2]], None).unwrap();
    let cam = CameraModel {
        fx: 20.0,
        fy: 20.0,
        cx: 16.0,
        cy: 16.0,
        rotation: [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
        translation: [0.0; 3],
        width: 32,
        height: 32,
    };
    let r = rasterize_normals(&m, &cam).unwrap();
    let n0 = r.normals.at(r.covered().next().unwrap()).to_vec();
    assert!((n0[0].abs() - s).abs() < 1e-9 && (n0[2] + c).abs() < 1e-9, "{n0:?}");
    let mut target = crate::render::ImageBuffer::new(32, 32, 3);
    for p in 0..32 * 32 {
        target.at_mut(p)[2] = -1.0;
    }
    let (v, _) = normal_loss(&r, &target, &vec![true; 32 * 32]).unwrap();
    assert!((v - (s + 1.0 - c) / 3.0).abs() < 1e-9);
    assert!((v - 0.03494).abs() < 1e-5);
    assert_eq!(normal_loss(&r, &r.normals, &r.mask).unwrap().0, 0.0);
    // disjoint masks
    let inverse: Vec<bool> = r.mask.iter().map(|m| !m).collect();
    assert_eq!(normal_loss(&r, &target, &inverse).unwrap().0, 0.0);
    assert!(normal_loss(&r, &crate::render::ImageBuffer::new(16, 32, 3), &inverse).is_err());
}

#[test]
fn chamfer_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (np, nd) in [(1, 1), (17, 5), (200, 200), (50, 180)] {
        let p: Vec<Vec2> = (0..np).map(|_| Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))).collect();
        let d: Vec<Vec2> = (0..nd).map(|_| Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))).collect();
        let v = landmark_loss(&[], &[], &[&p], &[&d]).unwrap().value();
        // oracle: full distance matrix, row minima
        let mut oracle = 0.0;
        for a in &p {
            let row: Vec<f64> = d.iter().map(|b| (a.x - b.x).powi(2) + (a.y - b.y).powi(2)).collect();
            oracle += row.iter().cloned().fold(f64::INFINITY, f64::min);
        }
        oracle /= np as f64;
        assert_eq!(v, oracle);
    }
}

fn context_parts(tmpl: &RiggedTemplate) -> ReferenceGeometry {
    ReferenceGeometry::new(tmpl, &tmpl.neutral).unwrap()
}

#[test]
fn neutral_self_fit_is_optimal() {
    let (tmpl, cam) = head_setup(128);
    let target = TargetObservation::from_mesh(&tmpl, &tmpl.neutral, &cam).unwrap();
    target.check(&tmpl).unwrap();
    let reference = context_parts(&tmpl);
    let weights = LossWeights { disp: 0.1, ..Default::default() };
    let ctx = LossContext { tmpl: &tmpl, target: &target, weights: &weights, reference: &reference, anchor: &tmpl.neutral };
    let state = tmpl.neutral_state();
    for level in [Level::Rig, Level::Joint, Level::Vertex] {
        let s = total_loss(&ctx, &state, level).unwrap();
        assert_eq!(s.loss.total, 0.0);
        let norm: f64 = s.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "{level:?}: {norm}");
    }
}

#[test]
fn total_is_the_weighted_sum_of_terms() {
    let (tmpl, cam) = head_setup(96);
    let mut r = vec![0.0; tmpl.controller_count()];
    r[0] = 0.5;
    r[3] = -0.4;
    let theta = tmpl.apply_controllers(&r).unwrap();
    let posed = tmpl.skin(&theta, &vec![Vec3::zeros(); tmpl.vertex_count()]).unwrap();
    let target = TargetObservation::from_mesh(&tmpl, &posed, &cam).unwrap();
    let reference = context_parts(&tmpl);
    let mut state = tmpl.neutral_state();
    state.r[1] = 0.3;
    let weights = LossWeights { disp: 0.3, ..Default::default() };
    let anchor = tmpl.neutral.with_vertices(tmpl.neutral.vertices.iter().map(|v| v * 1.01).collect());
    let ctx = LossContext { tmpl: &tmpl, target: &target, weights: &weights, reference: &reference, anchor: &anchor };
    let full = total_loss(&ctx, &state, Level::Rig).unwrap();
    let mesh = &full.mesh;
    let adj = tmpl.adjacency();
    let separately = weights.normal * normal_loss(&rasterize_normals(mesh, &cam).unwrap(), &target.normals, &target.mask).unwrap().0
        + weights.landmark * full.loss.terms.landmark
        + weights.gcc * evgcc_loss(mesh, &tmpl.neutral, adj).unwrap().0
        + weights.conformal * conformal_loss(mesh, &tmpl.neutral, weights.k_conf).unwrap().0
        + weights.flip * flip_loss(mesh, &tmpl.neutral, weights.k_flip).unwrap().0
        + weights.curve * curve_flow_loss(mesh, &tmpl.neutral, &tmpl.eyeline_curves).unwrap().0
        + weights.disp * displacement_loss(mesh, &anchor).unwrap().0;
    assert!((full.loss.total - separately).abs() < 1e-12, "{} vs {separately}", full.loss.total);

    let only_disp = LossWeights { disp: 1.0, ..LossWeights::zero() };
    let ctx = LossContext { weights: &only_disp, ..ctx };
    let s = total_loss(&ctx, &state, Level::Rig).unwrap();
    assert_eq!(s.loss.total, displacement_loss(&s.mesh, &anchor).unwrap().0);
}

#[test]
fn landmark_gradient_chains_through_projection() {
    let (tmpl, cam) = head_setup(96);
    let mut r = vec![0.0; tmpl.controller_count()];
    r[2] = 0.6;
    let posed = tmpl.skin(&tmpl.apply_controllers(&r).unwrap(), &vec![Vec3::zeros(); tmpl.vertex_count()]).unwrap();
    let target = TargetObservation::from_mesh(&tmpl, &posed, &cam).unwrap();
    let reference = context_parts(&tmpl);
    let weights = LossWeights { landmark: 1.0, ..LossWeights::zero() };
    let ctx = LossContext { tmpl: &tmpl, target: &target, weights: &weights, reference: &reference, anchor: &tmpl.neutral };
    let mesh = bumped(&tmpl.neutral, 1e-3, 31);
    let l = evaluate_mesh(&ctx, &mesh).unwrap();
    let f = |m: &TriMesh| evaluate_mesh(&ctx, m).unwrap().total;
    // nearest-point assignments are fixed for h small relative to spacing
    let ids: Vec<usize> = tmpl.landmark_corners.iter().chain(tmpl.landmark_contours.values().flatten()).copied().collect();
    let h = 1e-6;
    let mut good = 0;
    let mut checked = 0;
    for &v in &ids {
        for k in 0..3 {
            let mut a = mesh.clone();
            a.vertices[v][k] += h;
            let mut b = mesh.clone();
            b.vertices[v][k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            let an = l.grad[v][k];
            if fd.abs() < 1e-12 && an.abs() < 1e-12 {
                continue;
            }
            checked += 1;
            if (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) {
                good += 1;
            }
        }
    }
    assert!(checked > 20 && good as f64 >= 0.95 * checked as f64, "{good}/{checked}");
}

fn bumped(m: &TriMesh, scale: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.with_vertices(
        m.vertices
            .iter()
            .map(|v| v + Vec3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect(),
    )
}

#[test]
fn stage_gradients_match_finite_differences() {
    // smooth terms only, so the check is not dominated by kinks of |x|
    let (tmpl, cam) = head_setup(64);
    let target = TargetObservation::from_mesh(&tmpl, &tmpl.neutral, &cam).unwrap();
    let reference = context_parts(&tmpl);
    let anchor = bumped(&tmpl.neutral, 0.01, 3);
    let weights = LossWeights { disp: 1.0, landmark: 1.0, ..LossWeights::zero() };
    let ctx = LossContext { tmpl: &tmpl, target: &target, weights: &weights, reference: &reference, anchor: &anchor };
    let mut state = tmpl.neutral_state();
    for (i, r) in state.r.iter_mut().enumerate() {
        *r = 0.1 * ((i % 5) as f64 - 2.0);
    }
    state.theta = tmpl.apply_controllers(&state.r).unwrap();
    for level in [Level::Rig, Level::Joint] {
        let s = total_loss(&ctx, &state, level).unwrap();
        let n = s.grad.len();
        let h = 1e-6;
        let mut good = 0;
        let mut checked = 0;
        for i in 0..n {
            let mut a = state.clone();
            let mut b = state.clone();
            let (pa, pb) = match level {
                Level::Rig => (&mut a.r, &mut b.r),
                _ => (&mut a.theta, &mut b.theta),
            };
            pa[i] += h;
            pb[i] -= h;
            let fa = total_loss(&ctx, &a, level).unwrap().loss.total;
            let fb = total_loss(&ctx, &b, level).unwrap().loss.total;
            let fd = (fa - fb) / (2.0 * h);
            if fd.abs() < 1e-10 && s.grad[i].abs() < 1e-10 {
                continue;
            }
            checked += 1;
            if (fd - s.grad[i]).abs() <= 1e-3 * fd.abs().max(s.grad[i].abs()) {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.95 * checked as f64, "{level:?}: {good}/{checked}");
    }
}
