use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::render::{image_to_mask, mask_to_image, BitDepth, CameraModel, ImageBuffer};
use crate::rig::RiggedTemplate;
use crate::rig::io::{read_json, write_json};

/// Observed normal map with coverage, detected 2D landmarks and the camera
/// they were taken with.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetObservation {
    pub normals: ImageBuffer,
    pub mask: Vec<bool>,
    pub corners: Vec<Vec2>,
    pub contours: BTreeMap<String, Vec<Vec2>>,
    pub camera: CameraModel,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    corners: Vec<[f64; 2]>,
    contours: BTreeMap<String, Vec<[f64; 2]>>,
}

pub const NORMALS_FILE: &str = "normals.f32";
pub const MASK_FILE: &str = "mask.png";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const CAMERA_FILE: &str = "camera.json";

impl TargetObservation {
    /// Observation of `mesh` as seen by `cam`: its rendered normals and the
    /// projections of the template's landmark vertices.
    pub fn from_mesh(tmpl: &RiggedTemplate, mesh: &crate::mesh::TriMesh, cam: &CameraModel) -> Result<Self> {
        let raster = crate::render::rasterize_normals(mesh, cam)?;
        let (corners, contours) = super::project_landmarks(tmpl, mesh, cam)?;
        Ok(TargetObservation {
            normals: raster.normals,
            mask: raster.mask,
            corners,
            contours,
            camera: cam.clone(),
        })
    }

    /// Checks image sizes and landmark names against the template.
    pub fn check(&self, tmpl: &RiggedTemplate) -> Result<()> {
        self.camera.validate()?;
        let (w, h) = (self.camera.width as usize, self.camera.height as usize);
        if self.normals.width != w || self.normals.height != h || self.normals.channels != 3 {
            return Err(Error::dim(format!(
                "normal map is {}x{}x{}, camera expects {w}x{h}x3",
                self.normals.width, self.normals.height, self.normals.channels
            )));
        }
        if self.mask.len() != w * h {
            return Err(Error::dim("mask size differs from the normal map"));
        }
        if self.corners.len() != tmpl.landmark_corners.len() {
            return Err(Error::dim(format!(
                "{} detected corners, template defines {}",
                self.corners.len(),
                tmpl.landmark_corners.len()
            )));
        }
        let ours: Vec<&String> = self.contours.keys().collect();
        let theirs: Vec<&String> = tmpl.landmark_contours.keys().collect();
        if ours != theirs {
            return Err(Error::invalid(format!(
                "contour names {ours:?} do not match the template's {theirs:?}"
            )));
        }
        if let Some((name, _)) = self.contours.iter().find(|(_, c)| c.is_empty()) {
            return Err(Error::invalid(format!("detected contour `{name}` is empty")));
        }
        Ok(())
    }

    /// Writes the normal map, mask, landmarks, camera and a preview PNG.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.normals.write_raw(dir.join(NORMALS_FILE))?;
        mask_to_image(&self.mask, self.normals.width, self.normals.height)
            .write_png(dir.join(MASK_FILE), BitDepth::Eight)?;
        let mut preview = self.normals.clone();
        for (p, m) in self.mask.iter().enumerate() {
            for v in preview.at_mut(p) {
                *v = if *m { 0.5 * (*v + 1.0) } else { 0.0 };
            }
        }
        preview.write_png(dir.join("normals.png"), BitDepth::Eight)?;
        let lm = LandmarkFile {
            corners: self.corners.iter().map(|p| [p.x, p.y]).collect(),
            contours: self
                .contours
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|p| [p.x, p.y]).collect()))
                .collect(),
        };
        write_json(&dir.join(LANDMARKS_FILE), &lm)?;
        write_json(&dir.join(CAMERA_FILE), &self.camera)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let normals = ImageBuffer::read_raw(dir.join(NORMALS_FILE))?;
        let mask_img = ImageBuffer::read_png(dir.join(MASK_FILE))?;
        if mask_img.width != normals.width || mask_img.height != normals.height {
            return Err(Error::dim("mask and normal map sizes differ"));
        }
        let lm: LandmarkFile = read_json(&dir.join(LANDMARKS_FILE))?;
        let camera: CameraModel = read_json(&dir.join(CAMERA_FILE))?;
        Ok(TargetObservation {
            normals,
            mask: image_to_mask(&mask_img),
            corners: lm.corners.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            contours: lm
                .contours
                .into_iter()
                .map(|(k, v)| (k, v.iter().map(|p| Vec2::new(p[0], p[1])).collect()))
                .collect(),
            camera,
        })
    }
}
