//! The seven fitting terms with hand-written reverse passes. Every term is
//! a mean over its primitives; gradients are with respect to vertex
//! positions and are chained to stage parameters by [`total_loss`].

mod geometric;
mod image;
mod target;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use geometric::{
    conformal_loss, conformal_loss_to, curve_features_all, curve_flow_features, curve_flow_loss, curve_flow_loss_to,
    displacement_loss, evgcc_curvature, evgcc_loss, evgcc_loss_to, flip_loss, flip_loss_to, select_top, top_count,
};
pub use image::{landmark_loss, normal_loss, LandmarkValue};
pub use target::{TargetObservation, CAMERA_FILE, LANDMARKS_FILE, MASK_FILE, NORMALS_FILE};

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::mesh::{face_normals, interior_angles, TriMesh};
use crate::render::{normals_backward, project_backward, rasterize_normals, shade_fixed, RasterOutput};
use crate::rig::{Kinematics, Level, PoseState, RiggedTemplate};

/// Term weights and top-k fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub normal: f64,
    pub landmark: f64,
    pub gcc: f64,
    pub conformal: f64,
    pub flip: f64,
    pub curve: f64,
    pub disp: f64,
    pub k_conf: f64,
    pub k_flip: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            normal: 1.0,
            landmark: 100.0,
            gcc: 0.01,
            conformal: 0.005,
            flip: 0.005,
            curve: 1e-4,
            disp: 0.0,
            k_conf: 0.1,
            k_flip: 0.1,
        }
    }
}

impl LossWeights {
    /// All weights zero, fractions at their defaults.
    pub fn zero() -> Self {
        LossWeights {
            normal: 0.0,
            landmark: 0.0,
            gcc: 0.0,
            conformal: 0.0,
            flip: 0.0,
            curve: 0.0,
            disp: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("normal", self.normal),
            ("landmark", self.landmark),
            ("gcc", self.gcc),
            ("conformal", self.conformal),
            ("flip", self.flip),
            ("curve", self.curve),
            ("disp", self.disp),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("weight `{name}` must be finite and >= 0, got {v}")));
            }
        }
        for (name, k) in [("k_conf", self.k_conf), ("k_flip", self.k_flip)] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::invalid(format!("fraction `{name}` must lie in (0, 1], got {k}")));
            }
        }
        Ok(())
    }
}

/// Unweighted value of each term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub normal: f64,
    pub landmark: f64,
    pub gcc: f64,
    pub conformal: f64,
    pub flip: f64,
    pub curve: f64,
    pub disp: f64,
}

impl LossTerms {
    pub const NAMES: [&'static str; 7] = ["normal", "landmark", "gcc", "conformal", "flip", "curve", "disp"];

    pub fn values(&self) -> [f64; 7] {
        [self.normal, self.landmark, self.gcc, self.conformal, self.flip, self.curve, self.disp]
    }

    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.normal * self.normal
            + w.landmark * self.landmark
            + w.gcc * self.gcc
            + w.conformal * self.conformal
            + w.flip * self.flip
            + w.curve * self.curve
            + w.disp * self.disp
    }
}

/// Quantities of the consistency reference mesh (normally the neutral
/// template) that the loss terms compare against.
#[derive(Debug, Clone)]
pub struct ReferenceGeometry {
    pub curvature: Vec<f64>,
    pub angles: Vec<[f64; 3]>,
    pub normals: Vec<Vec3>,
    pub curve_features: Vec<Vec<f64>>,
}

impl ReferenceGeometry {
    pub fn new(tmpl: &RiggedTemplate, mesh: &TriMesh) -> Result<Self> {
        tmpl.neutral.check_same_connectivity(mesh)?;
        Ok(ReferenceGeometry {
            curvature: evgcc_curvature(mesh, tmpl.adjacency())?,
            angles: interior_angles(mesh)?,
            normals: face_normals(mesh)?,
            curve_features: curve_features_all(mesh, &tmpl.eyeline_curves)?,
        })
    }
}

/// Everything a loss evaluation needs besides the mesh itself.
pub struct LossContext<'a> {
    pub tmpl: &'a RiggedTemplate,
    pub target: &'a TargetObservation,
    pub weights: &'a LossWeights,
    pub reference: &'a ReferenceGeometry,
    /// Displacement reference, normally the stage-initial mesh.
    pub anchor: &'a TriMesh,
}

/// Loss of one mesh and its gradient with respect to vertex positions.
#[derive(Debug, Clone)]
pub struct MeshLoss {
    pub terms: LossTerms,
    pub total: f64,
    pub grad: Vec<Vec3>,
    pub raster: RasterOutput,
}

fn accumulate(name: &str, weight: f64, grad: &mut [Vec3], term: &[Vec3]) -> Result<()> {
    if weight == 0.0 {
        return Ok(());
    }
    if let Some(v) = term.iter().position(|g| !(g.x.is_finite() && g.y.is_finite() && g.z.is_finite())) {
        return Err(Error::Numerical(format!("{name} loss produced a non-finite gradient at vertex {v}")));
    }
    for (a, b) in grad.iter_mut().zip(term) {
        *a += b * weight;
    }
    Ok(())
}

/// Projected template landmark points: corners, then each contour in name
/// order.
pub fn project_landmarks(
    tmpl: &RiggedTemplate,
    mesh: &TriMesh,
    cam: &crate::render::CameraModel,
) -> Result<(Vec<Vec2>, BTreeMap<String, Vec<Vec2>>)> {
    let proj = |v: usize| cam.project(&mesh.vertices[v]).map(|p| Vec2::new(p.u, p.v));
    let corners = tmpl.landmark_corners.iter().map(|&v| proj(v)).collect::<Result<_>>()?;
    let contours = tmpl
        .landmark_contours
        .iter()
        .map(|(k, ids)| Ok((k.clone(), ids.iter().map(|&v| proj(v)).collect::<Result<_>>()?)))
        .collect::<Result<_>>()?;
    Ok((corners, contours))
}

/// All seven terms for `mesh` and the weighted gradient.
pub fn evaluate_mesh(ctx: &LossContext, mesh: &TriMesh) -> Result<MeshLoss> {
    evaluate_with(ctx, mesh, None)
}

/// As `evaluate_mesh`, but shading `mesh` under the pixel-to-face
/// assignment of `frozen` instead of rasterizing it again. This is the
/// function whose derivative the analytic gradient reports.
pub fn evaluate_mesh_frozen(ctx: &LossContext, mesh: &TriMesh, frozen: &RasterOutput) -> Result<MeshLoss> {
    evaluate_with(ctx, mesh, Some(frozen))
}

fn evaluate_with(ctx: &LossContext, mesh: &TriMesh, frozen: Option<&RasterOutput>) -> Result<MeshLoss> {
    let w = ctx.weights;
    let tmpl = ctx.tmpl;
    let cam = &ctx.target.camera;
    let n = mesh.vertex_count();
    let mut terms = LossTerms::default();
    let mut grad = vec![Vec3::zeros(); n];

    let raster = match frozen {
        Some(r) => shade_fixed(mesh, cam, r)?,
        None => rasterize_normals(mesh, cam)?,
    };
    let (value, adjoints) = normal_loss(&raster, &ctx.target.normals, &ctx.target.mask)?;
    terms.normal = value;
    if w.normal != 0.0 {
        let g = normals_backward(mesh, cam, &raster, &adjoints)?;
        accumulate("normal", w.normal, &mut grad, &g)?;
    }

    let (corners, contours) = project_landmarks(tmpl, mesh, cam)?;
    let proj_contours: Vec<&[Vec2]> = contours.values().map(|c| c.as_slice()).collect();
    let det_contours: Vec<&[Vec2]> = ctx.target.contours.values().map(|c| c.as_slice()).collect();
    let lm = landmark_loss(&corners, &ctx.target.corners, &proj_contours, &det_contours)?;
    let diag2 = cam.image_diagonal().powi(2);
    terms.landmark = lm.value() / diag2;
    if w.landmark != 0.0 {
        let r = cam.rotation_matrix();
        let mut g = vec![Vec3::zeros(); n];
        let ids = tmpl
            .landmark_corners
            .iter()
            .zip(&lm.g_corners)
            .chain(tmpl.landmark_contours.values().zip(&lm.g_contours).flat_map(|(ids, gs)| ids.iter().zip(gs)));
        for (&v, gp) in ids {
            g[v] += project_backward(cam, &r, &mesh.vertices[v], gp.x / diag2, gp.y / diag2);
        }
        accumulate("landmark", w.landmark, &mut grad, &g)?;
    }

    let (value, g) = evgcc_loss_to(mesh, &ctx.reference.curvature, tmpl.adjacency())?;
    terms.gcc = value;
    accumulate("gcc", w.gcc, &mut grad, &g)?;

    let (value, g) = conformal_loss_to(mesh, &ctx.reference.angles, w.k_conf)?;
    terms.conformal = value;
    accumulate("conformal", w.conformal, &mut grad, &g)?;

    let (value, g) = flip_loss_to(mesh, &ctx.reference.normals, w.k_flip)?;
    terms.flip = value;
    accumulate("flip", w.flip, &mut grad, &g)?;

    let (value, g) = curve_flow_loss_to(mesh, &ctx.reference.curve_features, &tmpl.eyeline_curves)?;
    terms.curve = value;
    accumulate("curve", w.curve, &mut grad, &g)?;

    let (value, g) = displacement_loss(mesh, ctx.anchor)?;
    terms.disp = value;
    accumulate("disp", w.disp, &mut grad, &g)?;

    let total = terms.weighted_total(w);
    if !total.is_finite() {
        let bad = LossTerms::NAMES
            .iter()
            .zip(terms.values())
            .find(|(_, v)| !v.is_finite())
            .map_or("total", |(n, _)| *n);
        return Err(Error::Numerical(format!("{bad} loss is not finite")));
    }
    Ok(MeshLoss {
        terms,
        total,
        grad,
        raster,
    })
}

/// Loss of a pose state at a stage and its gradient with respect to the
/// stage's active parameters (controllers, flat joint parameters, or
/// flattened residuals).
#[derive(Debug, Clone)]
pub struct StateLoss {
    pub mesh: TriMesh,
    pub loss: MeshLoss,
    pub grad: Vec<f64>,
}

pub fn total_loss(ctx: &LossContext, state: &PoseState, level: Level) -> Result<StateLoss> {
    let theta = ctx.tmpl.stage_theta(state, level)?;
    let kin: Kinematics = ctx.tmpl.forward_kinematics(&theta)?;
    let mesh = ctx.tmpl.skin_with(&kin, &state.delta)?;
    let loss = evaluate_mesh(ctx, &mesh)?;
    let grad = match level {
        Level::Rig => ctx.tmpl.controllers_backward(&ctx.tmpl.skin_backward(&kin, &loss.grad)),
        Level::Joint => ctx.tmpl.skin_backward(&kin, &loss.grad),
        Level::Vertex => loss.grad.iter().flat_map(|g| [g.x, g.y, g.z]).collect(),
    };
    Ok(StateLoss { mesh, loss, grad })
}

#[cfg(test)]
mod tests;
