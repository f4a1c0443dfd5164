//! Rigged template deformation: controllers drive joint parameters through
//! a sparse linear map, forward kinematics composes the joint hierarchy and
//! linear blend skinning plus per-vertex residuals produces the mesh.

mod head;
pub(crate) mod io;

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub use head::{synthetic_head, HeadOptions};
pub use io::{load_template, read_json, save_template, write_json, TemplateFile};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{EdgeAdjacency, TriMesh};

/// Parameters per joint: translation (3), Euler XYZ rotation (3), scale (3).
pub const TRS_LEN: usize = 9;
/// Maximum nonzero skin weights per vertex.
pub const MAX_INFLUENCES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trs {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
    pub scale: [f64; 3],
}

impl Trs {
    pub fn identity() -> Self {
        Trs {
            translation: [0.0; 3],
            rotation: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    pub fn to_flat(&self) -> [f64; TRS_LEN] {
        let mut out = [0.0; TRS_LEN];
        out[..3].copy_from_slice(&self.translation);
        out[3..6].copy_from_slice(&self.rotation);
        out[6..].copy_from_slice(&self.scale);
        out
    }

    pub fn from_flat(p: &[f64]) -> Self {
        Trs {
            translation: [p[0], p[1], p[2]],
            rotation: [p[3], p[4], p[5]],
            scale: [p[6], p[7], p[8]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub default_local: Trs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// One entry of the controller → joint-parameter map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub controller: usize,
    /// Index into the flattened per-joint parameter vector (`9·joint + k`).
    pub param: usize,
    pub gain: f64,
}

/// Which parameter level a stage optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Rig,
    Joint,
    Vertex,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Rig => "rig",
            Level::Joint => "joint",
            Level::Vertex => "vertex",
        }
    }
}

/// Neutral mesh plus controllers, joints, skinning and semantic metadata.
#[derive(Debug, Clone)]
pub struct RiggedTemplate {
    pub neutral: TriMesh,
    pub joints: Vec<Joint>,
    pub controllers: Vec<Controller>,
    /// Sparse rows: per vertex, `(joint, weight)` pairs.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    pub ctrl_map: Vec<MapEntry>,
    pub landmark_corners: Vec<usize>,
    pub landmark_contours: BTreeMap<String, Vec<usize>>,
    pub eyeline_curves: BTreeMap<String, Vec<usize>>,
    pub loss_mask: Vec<f64>,
    adjacency: EdgeAdjacency,
    default_theta: Vec<f64>,
    bind_inverse: Vec<Matrix4<f64>>,
}

/// Raw parts of a template before validation.
#[derive(Debug, Clone)]
pub struct TemplateParts {
    pub neutral: TriMesh,
    pub joints: Vec<Joint>,
    pub controllers: Vec<Controller>,
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    pub ctrl_map: Vec<MapEntry>,
    pub landmark_corners: Vec<usize>,
    pub landmark_contours: BTreeMap<String, Vec<usize>>,
    pub eyeline_curves: BTreeMap<String, Vec<usize>>,
    pub loss_mask: Vec<f64>,
}

impl RiggedTemplate {
    /// Validates every structural invariant and precomputes the bind pose.
    pub fn new(p: TemplateParts) -> Result<Self> {
        let n = p.neutral.vertex_count();
        let nj = p.joints.len();
        if nj == 0 {
            return Err(Error::invalid("template has no joints"));
        }
        for (j, joint) in p.joints.iter().enumerate() {
            match (j, joint.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::invalid("joint 0 must be the root")),
                (_, None) => {
                    return Err(Error::invalid(format!("joint {j} ({}) has no parent", joint.name)))
                }
                (_, Some(par)) if par >= j => {
                    return Err(Error::invalid(format!(
                        "joint {j} ({}) has parent {par}; parents must precede children",
                        joint.name
                    )))
                }
                _ => {}
            }
            if joint.default_local.scale.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::invalid(format!("joint {} has non-positive scale", joint.name)));
            }
        }
        for c in &p.controllers {
            if !(c.lo.is_finite() && c.hi.is_finite() && c.lo < c.hi) {
                return Err(Error::invalid(format!("controller `{}` has invalid bounds", c.name)));
            }
            if !(c.lo <= 0.0 && 0.0 <= c.hi) {
                return Err(Error::invalid(format!(
                    "controller `{}` bounds exclude the neutral value 0",
                    c.name
                )));
            }
        }
        if p.skin_weights.len() != n {
            return Err(Error::dim(format!("{} skin rows for {n} vertices", p.skin_weights.len())));
        }
        for (v, row) in p.skin_weights.iter().enumerate() {
            if row.is_empty() || row.len() > MAX_INFLUENCES {
                return Err(Error::invalid(format!(
                    "vertex {v} has {} skin influences (allowed 1..={MAX_INFLUENCES})",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= nj || !(w >= 0.0) {
                    return Err(Error::invalid(format!("vertex {v}: bad skin entry ({j}, {w})")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("vertex {v}: skin weights sum to {sum}")));
            }
        }
        for e in &p.ctrl_map {
            if e.controller >= p.controllers.len() || e.param >= nj * TRS_LEN || !e.gain.is_finite() {
                return Err(Error::invalid(format!("bad controller map entry {e:?}")));
            }
        }
        let check_ids = |what: &str, ids: &[usize]| -> Result<()> {
            match ids.iter().find(|&&i| i >= n) {
                Some(i) => Err(Error::invalid(format!("{what}: vertex id {i} >= {n}"))),
                None => Ok(()),
            }
        };
        check_ids("landmark corners", &p.landmark_corners)?;
        for (name, ids) in p.landmark_contours.iter().chain(&p.eyeline_curves) {
            if ids.is_empty() {
                return Err(Error::invalid(format!("curve `{name}` is empty")));
            }
            check_ids(name, ids)?;
        }
        for (name, ids) in &p.eyeline_curves {
            if ids.len() < 4 {
                return Err(Error::invalid(format!("curve `{name}` needs at least 4 vertices")));
            }
        }
        if p.loss_mask.len() != n || p.loss_mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::invalid("loss mask must hold one value in [0,1] per vertex"));
        }
        p.neutral.check_nondegenerate()?;

        let adjacency = EdgeAdjacency::build(&p.neutral)?;
        let default_theta: Vec<f64> = p.joints.iter().flat_map(|j| j.default_local.to_flat()).collect();
        let mut tmpl = RiggedTemplate {
            neutral: p.neutral,
            joints: p.joints,
            controllers: p.controllers,
            skin_weights: p.skin_weights,
            ctrl_map: p.ctrl_map,
            landmark_corners: p.landmark_corners,
            landmark_contours: p.landmark_contours,
            eyeline_curves: p.eyeline_curves,
            loss_mask: p.loss_mask,
            adjacency,
            default_theta,
            bind_inverse: Vec::new(),
        };
        let bind = tmpl.world_transforms(&tmpl.default_theta.clone())?;
        tmpl.bind_inverse = bind
            .world
            .iter()
            .map(|m| m.try_inverse().ok_or_else(|| Error::invalid("singular bind transform")))
            .collect::<Result<_>>()?;
        Ok(tmpl)
    }

    pub fn vertex_count(&self) -> usize {
        self.neutral.vertex_count()
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn controller_count(&self) -> usize {
        self.controllers.len()
    }

    pub fn theta_len(&self) -> usize {
        self.joints.len() * TRS_LEN
    }

    /// Flattened default joint parameters.
    pub fn default_theta(&self) -> &[f64] {
        &self.default_theta
    }

    pub fn adjacency(&self) -> &EdgeAdjacency {
        &self.adjacency
    }

    /// Per-face mask: a face is inside when all its corners are weighted above ½.
    pub fn face_mask(&self) -> Vec<bool> {
        self.neutral
            .faces()
            .iter()
            .map(|f| f.iter().all(|&v| self.loss_mask[v] > 0.5))
            .collect()
    }

    pub fn neutral_state(&self) -> PoseState {
        PoseState {
            r: vec![0.0; self.controller_count()],
            theta: self.default_theta.clone(),
            delta: vec![Vec3::zeros(); self.vertex_count()],
        }
    }

    pub fn check_controllers(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.controller_count() {
            return Err(Error::dim(format!(
                "{} controller values for {} controllers",
                r.len(),
                self.controller_count()
            )));
        }
        for (c, &v) in self.controllers.iter().zip(r) {
            if !(v >= c.lo && v <= c.hi) {
                return Err(Error::ControllerBounds {
                    name: c.name.clone(),
                    value: v,
                    lo: c.lo,
                    hi: c.hi,
                });
            }
        }
        Ok(())
    }

    /// `θ = θ̄ + Φ·r`.
    pub fn apply_controllers(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_controllers(r)?;
        let mut theta = self.default_theta.clone();
        for e in &self.ctrl_map {
            theta[e.param] += e.gain * r[e.controller];
        }
        Ok(theta)
    }

    /// `∂L/∂r = Φᵀ · ∂L/∂θ`.
    pub fn controllers_backward(&self, g_theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.controller_count()];
        for e in &self.ctrl_map {
            g[e.controller] += e.gain * g_theta[e.param];
        }
        g
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_len() {
            return Err(Error::dim(format!(
                "{} joint parameters, expected {}",
                theta.len(),
                self.theta_len()
            )));
        }
        for (j, p) in theta.chunks_exact(TRS_LEN).enumerate() {
            if p[6..].iter().any(|&s| !(s > 0.0)) {
                return Err(Error::invalid(format!(
                    "joint {} ({}) has non-positive scale",
                    j, self.joints[j].name
                )));
            }
        }
        Ok(())
    }

    fn world_transforms(&self, theta: &[f64]) -> Result<Kinematics> {
        self.check_theta(theta)?;
        let local: Vec<Matrix4<f64>> = theta.chunks_exact(TRS_LEN).map(local_matrix).collect();
        let mut world: Vec<Matrix4<f64>> = Vec::with_capacity(local.len());
        for (j, joint) in self.joints.iter().enumerate() {
            let w = match joint.parent {
                Some(p) => world[p] * local[j],
                None => local[j],
            };
            world.push(w);
        }
        Ok(Kinematics {
            params: theta
                .chunks_exact(TRS_LEN)
                .map(|p| {
                    let mut a = [0.0; TRS_LEN];
                    a.copy_from_slice(p);
                    a
                })
                .collect(),
            local,
            world,
            skinning: Vec::new(),
            rest: theta == self.default_theta.as_slice(),
        })
    }

    /// World transforms of every joint and the skinning transforms
    /// `world(j) · bind(j)⁻¹`.
    pub fn forward_kinematics(&self, theta: &[f64]) -> Result<Kinematics> {
        let mut k = self.world_transforms(theta)?;
        k.skinning = k
            .world
            .iter()
            .zip(&self.bind_inverse)
            .map(|(w, b)| w * b)
            .collect();
        Ok(k)
    }

    /// Linear blend skinning of the neutral vertices plus residuals.
    pub fn skin(&self, theta: &[f64], delta: &[Vec3]) -> Result<TriMesh> {
        let kin = self.forward_kinematics(theta)?;
        self.skin_with(&kin, delta)
    }

    pub fn skin_with(&self, kin: &Kinematics, delta: &[Vec3]) -> Result<TriMesh> {
        if delta.len() != self.vertex_count() {
            return Err(Error::dim(format!(
                "{} residuals for {} vertices",
                delta.len(),
                self.vertex_count()
            )));
        }
        if kin.rest {
            // bind pose reproduces the neutral mesh bit for bit
            let verts = self.neutral.vertices.iter().zip(delta).map(|(v, d)| v + d).collect();
            return Ok(self.neutral.with_vertices(verts));
        }
        let verts = self
            .neutral
            .vertices
            .iter()
            .zip(&self.skin_weights)
            .zip(delta)
            .map(|((v, row), d)| {
                let h = Vector4::new(v.x, v.y, v.z, 1.0);
                let mut acc = Vector4::zeros();
                for &(j, w) in row {
                    acc += (kin.skinning[j] * h) * w;
                }
                Vec3::new(acc.x, acc.y, acc.z) + d
            })
            .collect();
        Ok(self.neutral.with_vertices(verts))
    }

    /// Reverse pass of [`skin`](Self::skin): vertex-position adjoints to
    /// adjoints of the flattened joint parameters.
    pub fn skin_backward(&self, kin: &Kinematics, g_vertices: &[Vec3]) -> Vec<f64> {
        let nj = self.joint_count();
        let mut g_skin = vec![Matrix4::<f64>::zeros(); nj];
        for ((v, row), g) in self.neutral.vertices.iter().zip(&self.skin_weights).zip(g_vertices) {
            if g.x == 0.0 && g.y == 0.0 && g.z == 0.0 {
                continue;
            }
            let h = Vector4::new(v.x, v.y, v.z, 1.0);
            for &(j, w) in row {
                let gw = g * w;
                let m = &mut g_skin[j];
                for r in 0..3 {
                    for c in 0..4 {
                        m[(r, c)] += gw[r] * h[c];
                    }
                }
            }
        }
        let mut g_world: Vec<Matrix4<f64>> = g_skin
            .iter()
            .zip(&self.bind_inverse)
            .map(|(g, b)| g * b.transpose())
            .collect();
        let mut g_theta = vec![0.0; nj * TRS_LEN];
        for j in (0..nj).rev() {
            let gw = g_world[j];
            let g_local = match self.joints[j].parent {
                Some(p) => {
                    g_world[p] += gw * kin.local[j].transpose();
                    kin.world[p].transpose() * gw
                }
                None => gw,
            };
            let start = j * TRS_LEN;
            local_backward(&kin.params[j], &g_local, &mut g_theta[start..start + TRS_LEN]);
        }
        g_theta
    }

    /// Mesh for the given stage: the rig level derives joint parameters from
    /// the controllers, the joint and vertex levels use `state.theta`
    /// directly. Residuals are always added.
    pub fn pose_from_state(&self, state: &PoseState, level: Level) -> Result<TriMesh> {
        let theta = self.stage_theta(state, level)?;
        self.skin(&theta, &state.delta)
    }

    pub fn stage_theta(&self, state: &PoseState, level: Level) -> Result<Vec<f64>> {
        match level {
            Level::Rig => self.apply_controllers(&state.r),
            Level::Joint | Level::Vertex => Ok(state.theta.clone()),
        }
    }
}

/// Per-joint transforms from one forward-kinematics pass.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub params: Vec<[f64; TRS_LEN]>,
    pub local: Vec<Matrix4<f64>>,
    pub world: Vec<Matrix4<f64>>,
    pub skinning: Vec<Matrix4<f64>>,
    /// Parameters equal the bind pose exactly.
    pub rest: bool,
}

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(1., 0., 0., 0., 0., c, -s, 0., 0., s, c, 0., 0., 0., 0., 1.)
}

fn rot_y(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, 0., s, 0., 0., 1., 0., 0., -s, 0., c, 0., 0., 0., 0., 1.)
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, -s, 0., 0., s, c, 0., 0., 0., 0., 1., 0., 0., 0., 0., 1.)
}

fn d_rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(0., 0., 0., 0., 0., -s, -c, 0., 0., c, -s, 0., 0., 0., 0., 0.)
}

fn d_rot_y(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(-s, 0., c, 0., 0., 0., 0., 0., -c, 0., -s, 0., 0., 0., 0., 0.)
}

fn d_rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(-s, -c, 0., 0., c, -s, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.)
}

fn translation(t: &[f64]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = t[0];
    m[(1, 3)] = t[1];
    m[(2, 3)] = t[2];
    m
}

fn scaling(s: &[f64]) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(s[0], s[1], s[2], 1.0))
}

/// `T · Rz · Ry · Rx · S`.
pub fn local_matrix(p: &[f64]) -> Matrix4<f64> {
    translation(&p[0..3]) * rot_z(p[5]) * rot_y(p[4]) * rot_x(p[3]) * scaling(&p[6..9])
}

fn frobenius(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn local_backward(p: &[f64; TRS_LEN], g: &Matrix4<f64>, out: &mut [f64]) {
    let (rx, ry, rz) = (rot_x(p[3]), rot_y(p[4]), rot_z(p[5]));
    let s = scaling(&p[6..9]);
    let t = translation(&p[0..3]);
    // translation enters as the last column
    out[0] += g[(0, 3)];
    out[1] += g[(1, 3)];
    out[2] += g[(2, 3)];
    out[3] += frobenius(g, &(t * rz * ry * d_rot_x(p[3]) * s));
    out[4] += frobenius(g, &(t * rz * d_rot_y(p[4]) * rx * s));
    out[5] += frobenius(g, &(t * d_rot_z(p[5]) * ry * rx * s));
    let trs = t * rz * ry * rx;
    for k in 0..3 {
        let mut ds = Matrix4::zeros();
        ds[(k, k)] = 1.0;
        out[6 + k] += frobenius(g, &(trs * ds));
    }
}

/// Controller values, joint parameters and residual offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    pub r: Vec<f64>,
    /// Flattened per-joint TRS, `9·joint + k`.
    pub theta: Vec<f64>,
    pub delta: Vec<Vec3>,
}
